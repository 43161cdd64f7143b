"""Pass-by decision logic: frequency tracking, climax point, final vote.

The climax point is the frame where the vehicle is closest to the
microphone.  The received frequency of a moving source falls through its
rest value exactly there, while the received level peaks, so the detector
uses the energy maximum as the primary cue and the frequency descent as
its validity check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import Frame
from .classifiers import SoundClass, most_dangerous
from .features import Spectrum

APPROACHING = "approaching"
RECEDING = "receding"
UNKNOWN = "unknown"

DIRECTIONS = (APPROACHING, RECEDING, UNKNOWN)

VOTE_WINDOW = 8  # final frames voted on, climax frame included

DEFAULT_BAND = (50.0, 2000.0)

# relative before/after energy imbalance below which direction is "unknown"
_DIRECTION_THRESHOLD = 0.2


class TrackTooShortError(ValueError):
    """The frame track is too short for the requested decision."""


@dataclass(frozen=True)
class DopplerParams:
    f0: float          # source frequency, Hz
    v: float           # source speed, m/s
    c: float = 343.0   # speed of sound, m/s

    def __post_init__(self):
        if self.f0 <= 0:
            raise ValueError("f0 must be positive")
        if not (0 <= self.v < self.c):
            raise ValueError("need 0 <= v < c")


def doppler_observed(params: DopplerParams, phase: str) -> float:
    """Received frequency of a source moving straight at/away from the receiver."""
    if phase == APPROACHING:
        return params.f0 * params.c / (params.c - params.v)
    if phase == RECEDING:
        return params.f0 * params.c / (params.c + params.v)
    raise ValueError(f"phase must be approaching or receding, got {phase!r}")


@dataclass(frozen=True)
class FrameTrack:
    dominant_freq: np.ndarray  # Hz per frame, median-smoothed
    rms_energy: np.ndarray
    labels: list               # SoundClass per frame
    bin_hz: float

    def __post_init__(self):
        if not (len(self.dominant_freq) == len(self.rms_energy) == len(self.labels)):
            raise ValueError("track sequences must have equal lengths")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class DetectionResult:
    climax_index: int
    sound_type: SoundClass
    direction: str

    def to_line(self) -> str:
        return f"DET {self.climax_index} {self.sound_type.value} {self.direction}"

    @classmethod
    def from_line(cls, line: str) -> "DetectionResult":
        parts = line.split()
        if len(parts) != 4 or parts[0] != "DET":
            raise ValueError(f"not a DET line: {line!r}")
        if parts[3] not in DIRECTIONS:
            raise ValueError(f"bad direction {parts[3]!r}")
        return cls(int(parts[1]), SoundClass(parts[2]), parts[3])


def _interpolated_peak_hz(magnitudes: np.ndarray, lo_bin: int, hi_bin: int, bin_hz: float) -> float:
    """Frequency of the strongest bin in [lo_bin, hi_bin], parabolically refined."""
    window = magnitudes[lo_bin:hi_bin + 1]
    k = lo_bin + int(np.argmax(window))
    freq = k * bin_hz
    if 0 < k < len(magnitudes) - 1:
        alpha, beta, gamma = magnitudes[k - 1], magnitudes[k], magnitudes[k + 1]
        denom = alpha - 2.0 * beta + gamma
        if abs(denom) > 1e-30:
            delta = 0.5 * (alpha - gamma) / denom
            freq = (k + np.clip(delta, -0.5, 0.5)) * bin_hz
    return float(np.clip(freq, lo_bin * bin_hz, hi_bin * bin_hz))


def track_frames(frames: list[Frame], spectra: list[Spectrum], labels: list,
                 band: tuple[float, float] = DEFAULT_BAND) -> FrameTrack:
    """Per-frame dominant frequency (within band) and RMS energy.

    The frequency track is median-smoothed over 3 frames to knock out
    single-frame spikes; the first and last frames keep their raw values.
    """
    if not frames or not (len(frames) == len(spectra) == len(labels)):
        raise ValueError("frames, spectra and labels must be non-empty and aligned")
    bin_hz = spectra[0].bin_hz
    lo_bin = int(np.ceil(band[0] / bin_hz))
    hi_bin = int(np.floor(band[1] / bin_hz))
    hi_bin = min(hi_bin, len(spectra[0].magnitudes) - 1)
    if lo_bin > hi_bin:
        raise ValueError(f"band {band} holds no spectrum bins at {bin_hz} Hz spacing")
    raw = np.array([_interpolated_peak_hz(s.magnitudes, lo_bin, hi_bin, bin_hz)
                    for s in spectra])
    smoothed = raw.copy()
    for i in range(1, len(raw) - 1):
        smoothed[i] = np.median(raw[i - 1:i + 2])
    rms = np.array([np.sqrt(np.mean(f.samples ** 2)) for f in frames])
    return FrameTrack(dominant_freq=smoothed, rms_energy=rms, labels=list(labels), bin_hz=bin_hz)


def _descent_score(freq: np.ndarray, idx: int) -> float | None:
    """Mean frequency over the 3 frames before idx minus the 3 after.

    None when either side window is incomplete.
    """
    if idx < 3 or idx + 3 >= len(freq):
        return None
    return float(np.mean(freq[idx - 3:idx]) - np.mean(freq[idx + 1:idx + 4]))


def detect_climax(track: FrameTrack) -> int:
    """Frame index of the closest approach.

    Primary cue: the RMS energy maximum, accepted when the frequency track
    descends across it (or when a side window is missing, or when the whole
    track is flat to within 2 bins).  Otherwise the index with the steepest
    3-frame frequency drop across it wins.
    """
    if len(track) < VOTE_WINDOW:
        raise TrackTooShortError(f"need >= {VOTE_WINDOW} frames, got {len(track)}")
    freq = track.dominant_freq
    energy_peak = int(np.argmax(track.rms_energy))
    if float(freq.max() - freq.min()) < 2.0 * track.bin_hz:
        return energy_peak
    score = _descent_score(freq, energy_peak)
    if score is None or score > 0.0:
        return energy_peak
    candidates = range(3, len(freq) - 3)
    scores = [_descent_score(freq, i) for i in candidates]
    return 3 + int(np.argmax(scores))


def infer_direction(track: FrameTrack, climax: int) -> str:
    """Direction of travel from the energy balance around the climax.

    The directional microphone hears the side it faces, so a vehicle coming
    from the front is loud long before the climax and nearly silent after,
    and one passing the other way mirrors that.  Near the climax the
    1/distance peak swamps the lobe difference, so the comparison uses the
    outer wings of the track, taken symmetrically about the climax (which
    makes the verdict flip exactly under time reversal).  Comparable wings,
    or no symmetric context at all, mean no call.
    """
    if not (0 <= climax < len(track)):
        raise ValueError(f"climax {climax} outside track of {len(track)} frames")
    rms = track.rms_energy
    reach = min(climax, len(rms) - 1 - climax)
    if reach < 2:
        return UNKNOWN
    wing = min(VOTE_WINDOW, max(2, reach // 2))
    before = rms[climax - reach:climax - reach + wing]
    after = rms[climax + reach - wing + 1:climax + reach + 1]
    mean_before, mean_after = float(np.mean(before)), float(np.mean(after))
    denom = max(mean_before, mean_after)
    if denom <= 1e-12:
        return UNKNOWN
    imbalance = (mean_before - mean_after) / denom
    if imbalance > _DIRECTION_THRESHOLD:
        return APPROACHING
    if imbalance < -_DIRECTION_THRESHOLD:
        return RECEDING
    return UNKNOWN


def vote_final_frames(labels: list) -> SoundClass:
    """Majority over the final-frame labels; ties go to the riskier class."""
    counts = {}
    for label in labels:
        counts[label] = counts.get(label, 0) + 1
    top = max(counts.values())
    return most_dangerous([c for c, n in counts.items() if n == top])


def finalize_detection(track: FrameTrack, climax: int) -> DetectionResult:
    """Phase-3 decision: NV at the climax short-circuits, else the 8-frame vote."""
    if climax < VOTE_WINDOW - 1:
        raise TrackTooShortError(
            f"climax {climax} leaves fewer than {VOTE_WINDOW} frames to vote on")
    direction = infer_direction(track, climax)
    if track.labels[climax] == SoundClass.NV:
        return DetectionResult(climax_index=climax, sound_type=SoundClass.NV,
                               direction=direction)
    window = track.labels[climax - (VOTE_WINDOW - 1):climax + 1]
    return DetectionResult(climax_index=climax, sound_type=vote_final_frames(window),
                           direction=direction)
