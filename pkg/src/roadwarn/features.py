"""Per-frame feature extraction: spectral scalars, MFCC, LPC and PCA.

A full feature vector concatenates, in this fixed order:

    [p1, p2, f1, f2, peak, mfcc_0..mfcc_{m-1}, lpc_1..lpc_p, lpc_gain]

which is 31 dimensions with the defaults (13 MFCC coefficients, order-12
LPC).  The five spectral scalars come from the unwindowed magnitude
spectrum; the MFCC path applies its own pre-emphasis and hann window.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from .audio_io import Frame

FEATURE_VECTOR_DIM = 31


class SilentFrameError(ValueError):
    """Raised when an extractor needs a non-silent frame and got all zeros."""


@dataclass(frozen=True)
class Spectrum:
    """One-sided magnitude spectrum |X_k|, k = 0..N/2, with bin spacing in Hz."""

    magnitudes: np.ndarray
    bin_hz: float

    def __post_init__(self):
        mags = np.asarray(self.magnitudes, dtype=np.float64)
        if not np.all(np.isfinite(mags)) or np.any(mags < 0):
            raise ValueError("magnitudes must be finite and non-negative")
        object.__setattr__(self, "magnitudes", mags)


@dataclass(frozen=True)
class SpectralFeatures:
    p1: float        # sum of squared magnitudes, lower half
    p2: float        # sum of squared magnitudes, upper half
    f1: float        # Hz of the strongest bin in the lower half
    f2: float        # Hz of the strongest bin in the upper half
    peak_value: float  # largest magnitude anywhere in the one-sided spectrum

    def as_array(self) -> np.ndarray:
        return np.array([self.p1, self.p2, self.f1, self.f2, self.peak_value])


@dataclass(frozen=True)
class MfccConfig:
    n_filters: int = 26
    n_coeffs: int = 13
    pre_emphasis: float = 0.97
    fmin: float = 0.0
    fmax: float | None = None  # None = Nyquist of the frame being processed
    log_floor: float = 1e-10

    def __post_init__(self):
        if not (0 < self.n_coeffs <= self.n_filters):
            raise ValueError("need 0 < n_coeffs <= n_filters")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    def resolve_fmax(self, sample_rate: int) -> float:
        nyquist = sample_rate / 2.0
        fmax = nyquist if self.fmax is None else self.fmax
        if not (self.fmin < fmax <= nyquist):
            raise ValueError(f"need fmin < fmax <= Nyquist, got [{self.fmin}, {fmax}]")
        return fmax


@dataclass(frozen=True)
class LpcConfig:
    order: int = 12

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("order must be >= 0")


@dataclass(frozen=True)
class FeatureVector:
    spectral: SpectralFeatures
    mfcc: np.ndarray
    lpc: np.ndarray
    lpc_gain: float
    label: object = None  # SoundClass or None

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.spectral.as_array(), self.mfcc, self.lpc, [self.lpc_gain]])


def fft_magnitude(frame: Frame) -> Spectrum:
    """One-sided magnitude spectrum of the frame's DFT."""
    x = frame.samples
    if len(x) < 2:
        raise ValueError("frame too short for a spectrum")
    mags = np.abs(np.fft.rfft(x))
    return Spectrum(magnitudes=mags, bin_hz=frame.sample_rate / len(x))


def spectral_features(spectrum: Spectrum) -> SpectralFeatures:
    """The five scalar features of the one-sided spectrum.

    The spectrum is split at its midpoint bin (i.e. at half the Nyquist
    frequency); p1/p2 are the power sums of the two halves and f1/f2 the
    frequencies of each half's strongest bin.  A half that is identically
    zero reports frequency 0.
    """
    m = spectrum.magnitudes
    if len(m) < 4:
        raise ValueError("spectrum too short to split")
    mid = len(m) // 2
    lo, hi = m[:mid], m[mid:]
    p1 = float(np.sum(lo ** 2))
    p2 = float(np.sum(hi ** 2))
    f1 = float(np.argmax(lo) * spectrum.bin_hz) if lo.max() > 0 else 0.0
    f2 = float((mid + np.argmax(hi)) * spectrum.bin_hz) if hi.max() > 0 else 0.0
    return SpectralFeatures(p1=p1, p2=p2, f1=f1, f2=f2, peak_value=float(m.max()))


@functools.lru_cache(maxsize=32)
def _mel_filterbank(n_filters: int, n_bins: int, bin_hz: float, fmin: float, fmax: float) -> np.ndarray:
    """Triangular filters with peaks equally spaced on the mel scale.

    Filter weights are evaluated at the exact bin frequencies (no snapping
    of edges to bins), which keeps an independent from-definition
    reimplementation bit-comparable.
    """
    def mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def inv_mel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    edges_hz = inv_mel(np.linspace(mel(fmin), mel(fmax), n_filters + 2))
    freqs = np.arange(n_bins) * bin_hz
    bank = np.zeros((n_filters, n_bins))
    for j in range(n_filters):
        lo, center, hi = edges_hz[j], edges_hz[j + 1], edges_hz[j + 2]
        rising = (freqs >= lo) & (freqs <= center)
        falling = (freqs > center) & (freqs <= hi)
        if center > lo:
            bank[j, rising] = (freqs[rising] - lo) / (center - lo)
        if hi > center:
            bank[j, falling] = (hi - freqs[falling]) / (hi - center)
    return bank


def _mfcc_batch(frames_matrix: np.ndarray, sample_rate: int, config: MfccConfig) -> np.ndarray:
    """MFCC rows for a (n_frames, frame_len) matrix of raw samples."""
    fmax = config.resolve_fmax(sample_rate)
    n = frames_matrix.shape[1]
    emphasized = np.empty_like(frames_matrix)
    emphasized[:, 0] = frames_matrix[:, 0]
    emphasized[:, 1:] = frames_matrix[:, 1:] - config.pre_emphasis * frames_matrix[:, :-1]
    windowed = emphasized * np.hanning(n)
    power = np.abs(np.fft.rfft(windowed, axis=1)) ** 2
    bank = _mel_filterbank(config.n_filters, power.shape[1], sample_rate / n, config.fmin, fmax)
    log_energy = np.log(power @ bank.T + config.log_floor)
    return dct(log_energy, type=2, norm="ortho", axis=1)[:, :config.n_coeffs]


def mfcc(frame: Frame, config: MfccConfig = MfccConfig()) -> np.ndarray:
    """Mel-frequency cepstral coefficients of one frame.

    Pipeline: pre-emphasis, hann window, power spectrum, triangular mel
    filterbank, log(energy + log_floor), orthonormal type-II DCT truncated
    to n_coeffs.  The floor keeps silent channels finite; as long as filter
    energies dominate the floor, rescaling the frame only moves
    coefficient 0.
    """
    if len(frame.samples) < 2:
        raise ValueError("frame too short for MFCC")
    return _mfcc_batch(frame.samples[np.newaxis, :], frame.sample_rate, config)[0]


def autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased autocorrelation estimates r[0..max_lag] (normalized by len(x))."""
    n = len(x)
    r = np.empty(max_lag + 1)
    for k in range(max_lag + 1):
        r[k] = np.dot(x[k:], x[:n - k]) / n
    return r


def lpc(frame: Frame, config: LpcConfig = LpcConfig()) -> tuple[np.ndarray, float]:
    """Linear prediction coefficients via the Levinson-Durbin recursion.

    Returns (a, gain) in the positive-predictor convention
    ``x_hat[n] = sum_i a[i-1] * x[n-i]``; gain is the mean-square
    prediction error left after the final order.
    """
    x = frame.samples
    p = config.order
    if p >= len(x):
        raise ValueError("LPC order must be smaller than the frame length")
    r = autocorrelation(x, p)
    if p == 0:
        return np.zeros(0), float(r[0])
    if r[0] <= 0.0:
        raise SilentFrameError("cannot fit LPC to a silent frame")
    a = np.zeros(p)
    err = float(r[0])
    for i in range(1, p + 1):
        if err <= 1e-15 * r[0]:
            break  # signal already perfectly predicted; higher taps stay 0
        k = (r[i] - np.dot(a[:i - 1], r[i - 1:0:-1])) / err
        a_new = a.copy()
        a_new[i - 1] = k
        if i > 1:
            a_new[:i - 1] = a[:i - 1] - k * a[i - 2::-1]
        a = a_new
        err *= (1.0 - k * k)
    return a, float(err)


def assemble_feature_vector(frame: Frame,
                            mfcc_cfg: MfccConfig = MfccConfig(),
                            lpc_cfg: LpcConfig = LpcConfig(),
                            label=None) -> FeatureVector:
    """All feature groups of one frame, in the canonical concatenation order."""
    spec = spectral_features(fft_magnitude(frame))
    coeffs = mfcc(frame, mfcc_cfg)
    a, gain = lpc(frame, lpc_cfg)
    return FeatureVector(spectral=spec, mfcc=coeffs, lpc=a, lpc_gain=gain, label=label)


def feature_names(mfcc_cfg: MfccConfig = MfccConfig(), lpc_cfg: LpcConfig = LpcConfig()) -> list[str]:
    return (["p1", "p2", "f1", "f2", "peak"]
            + [f"mfcc{i}" for i in range(mfcc_cfg.n_coeffs)]
            + [f"lpc{i}" for i in range(1, lpc_cfg.order + 1)]
            + ["lpc_gain"])


def extract_features(buffer_frames: list[Frame],
                     mfcc_cfg: MfccConfig = MfccConfig(),
                     lpc_cfg: LpcConfig = LpcConfig()) -> np.ndarray:
    """Feature matrix (n_frames x dim) for a list of equal-length frames.

    Same numbers as assemble_feature_vector per frame, but the FFT-heavy
    parts run batched.
    """
    if not buffer_frames:
        return np.zeros((0, 5 + mfcc_cfg.n_coeffs + lpc_cfg.order + 1))
    rate = buffer_frames[0].sample_rate
    matrix = np.stack([f.samples for f in buffer_frames])
    mags = np.abs(np.fft.rfft(matrix, axis=1))
    bin_hz = rate / matrix.shape[1]
    mel_rows = _mfcc_batch(matrix, rate, mfcc_cfg)
    rows = []
    for i, frame in enumerate(buffer_frames):
        spec = spectral_features(Spectrum(magnitudes=mags[i], bin_hz=bin_hz))
        a, gain = lpc(frame, lpc_cfg)
        rows.append(np.concatenate([spec.as_array(), mel_rows[i], a, [gain]]))
    return np.stack(rows)


# ---------------------------------------------------------------------------
# PCA

@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray          # orthonormal rows, strongest first
    explained_variance: np.ndarray  # one per component, non-increasing
    retained: int

    @property
    def retained_components(self) -> np.ndarray:
        return self.components[:self.retained]


def pca_fit(vectors: np.ndarray, retained_variance: float = 0.95) -> PcaModel:
    """Eigendecomposition of the mean-centered covariance.

    `retained` is the smallest component count whose cumulative explained
    variance reaches `retained_variance` (a fraction in (0, 1]).
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least 2 vectors of equal dimensionality")
    if not (0.0 < retained_variance <= 1.0):
        raise ValueError("retained_variance must be in (0, 1]")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (X.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    components = eigvecs[:, order].T
    # deterministic sign: largest-magnitude entry of each component positive
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1
    total = eigvals.sum()
    if total <= 0.0:
        retained = 1  # degenerate zero-variance cloud
    else:
        ratios = np.cumsum(eigvals) / total
        retained = int(np.searchsorted(ratios, retained_variance - 1e-12) + 1)
        retained = min(retained, len(eigvals))
    return PcaModel(mean=mean, components=components,
                    explained_variance=eigvals, retained=retained)


def pca_transform(model: PcaModel, vector: np.ndarray) -> np.ndarray:
    """Project (vector - mean) onto the retained components."""
    v = np.asarray(vector, dtype=np.float64)
    if v.shape[-1] != model.mean.shape[0]:
        raise ValueError(f"dimension mismatch: {v.shape[-1]} vs {model.mean.shape[0]}")
    return (v - model.mean) @ model.retained_components.T


def pca_inverse_transform(model: PcaModel, reduced: np.ndarray) -> np.ndarray:
    """Back-project reduced coordinates to the original space."""
    return np.asarray(reduced) @ model.retained_components + model.mean


# ---------------------------------------------------------------------------
# Dataset CSV persistence

def save_dataset_csv(path, matrix: np.ndarray, labels, names: list[str]) -> None:
    """Write a feature dataset: header, %.9g values, final label column.

    The fixed 9-significant-digit formatting makes re-runs byte-identical.
    """
    matrix = np.asarray(matrix)
    if matrix.shape[1] != len(names):
        raise ValueError("header does not match matrix width")
    lines = [",".join(names + ["label"])]
    for row, label in zip(matrix, labels):
        text = ",".join("%.9g" % v for v in row)
        lines.append(text + "," + (label.value if label is not None else ""))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset_csv(path):
    """Read back (matrix, labels, names); labels are SoundClass or None."""
    from .classifiers import SoundClass

    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty dataset")
    header = lines[0].split(",")
    if header[-1] != "label":
        raise ValueError(f"{path}: missing label column")
    names = header[:-1]
    rows, labels = [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(header):
            raise ValueError(f"{path}: ragged row with {len(parts)} fields")
        rows.append([float(v) for v in parts[:-1]])
        labels.append(SoundClass(parts[-1]) if parts[-1] else None)
    return np.array(rows), labels, names
