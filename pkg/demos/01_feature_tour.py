#!/usr/bin/env python3
"""A walk through the per-frame features on one synthetic vehicle pass.

Renders a single light-vehicle pass-by, slices it into 0.1 s frames, and
prints every feature group for the loudest frame: the five spectral
scalars, the 13 MFCCs, the order-12 LPC fit, and finally a PCA of the
whole clip's feature matrix.
"""

import numpy as np

from roadwarn import audio_io, features, synth
from roadwarn.classifiers import SoundClass

# --- render a pass-by ------------------------------------------------------

profile = synth.VehicleProfile(sound_class=SoundClass.LL, fundamental=120.0,
                               n_harmonics=8, broadband_level=0.25)
scenario = synth.PassbyScenario(speed_kmh=45.0, closest_distance=4.0,
                                duration=4.0, seed=1)
buffer, truth = synth.synth_passby(profile, scenario)
print(f"rendered {buffer.duration:.1f} s at {buffer.sample_rate} Hz, "
      f"closest approach at t = {truth.t_closest:.2f} s")

frames = audio_io.frame_signal(buffer)
loudest = max(frames, key=lambda f: np.sqrt(np.mean(f.samples ** 2)))
print(f"loudest frame: #{loudest.index} (t = {loudest.start_time:.1f} s)")

# --- the five spectral scalars ---------------------------------------------

spectrum = features.fft_magnitude(loudest)
sf = features.spectral_features(spectrum)
print("\nspectral scalars (halves split at", 0.25 * buffer.sample_rate, "Hz):")
print(f"  p1 = {sf.p1:.4g}   p2 = {sf.p2:.4g}")
print(f"  f1 = {sf.f1:.0f} Hz  f2 = {sf.f2:.0f} Hz  peak = {sf.peak_value:.4g}")
print(f"  (source fundamental was {profile.fundamental:.0f} Hz; "
      f"f1 lands on its strongest harmonic)")

# --- MFCC -------------------------------------------------------------------

coeffs = features.mfcc(loudest)
print("\nfirst five MFCCs:", np.round(coeffs[:5], 3))

# rescaling the frame only moves coefficient 0 (the loudness axis)
double = audio_io.Frame(2 * loudest.samples, loudest.index,
                        loudest.start_time, loudest.sample_rate)
delta = features.mfcc(double) - coeffs
print("after doubling the amplitude, coefficient deltas:", np.round(delta[:5], 6))

# --- LPC --------------------------------------------------------------------

a, gain = features.lpc(loudest)
print("\nLPC coefficients a_1..a_4:", np.round(a[:4], 4), " gain:", round(gain, 6))
pred = np.convolve(loudest.samples, np.r_[0.0, a])[:len(loudest.samples)]
residual = loudest.samples - pred
print(f"prediction drops the frame power {np.mean(loudest.samples**2) / np.mean(residual**2):.1f}x")

# --- the full 31-dim vector and PCA ----------------------------------------

matrix = features.extract_features(frames)
print(f"\nfeature matrix for the clip: {matrix.shape[0]} frames x {matrix.shape[1]} dims")

# z-score first: the raw power features span orders of magnitude and would
# otherwise own the whole variance budget
z = (matrix - matrix.mean(axis=0)) / np.where(matrix.std(axis=0) == 0, 1, matrix.std(axis=0))
model = features.pca_fit(z, retained_variance=0.95)
shares = model.explained_variance / model.explained_variance.sum()
print(f"PCA keeps {model.retained} of {matrix.shape[1]} components for 95% variance")
print("top-3 variance shares:", np.round(shares[:3], 3))
reduced = features.pca_transform(model, z[0])
print("frame 0 reduced to:", np.round(reduced[:5], 3), "...")
