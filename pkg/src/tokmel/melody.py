"""Fundamental-frequency estimation and the log-F0 melody track.

The estimator is a difference-function (YIN-style) pitch tracker:
cumulative-mean-normalized difference over a window centered on each
frame, absolute-threshold candidate pick, parabolic refinement of the
lag. Voiced frames store the natural logarithm of F0; unvoiced frames
store the 0.0 sentinel, and the boolean mask is authoritative.

Fixed analysis parameters: window 1024 samples, voicing threshold 0.15,
default search range 50..1100 Hz (singing reaches high soprano).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .signal_io import AudioClip, frame_count, hop_size

WINDOW = 1024
VOICING_THRESHOLD = 0.15
DEFAULT_F_MIN = 50.0
DEFAULT_F_MAX = 1100.0

# Hard bounds on voiced log-F0 regardless of the requested search range.
F0_FLOOR = 20.0
F0_CEIL = 4000.0


@dataclass(frozen=True)
class MelodyTrack:
    lf0: np.ndarray  # natural-log F0 per frame; 0.0 where unvoiced
    voiced: np.ndarray  # boolean mask, same length
    fps: int

    def __post_init__(self):
        lf0 = np.asarray(self.lf0, dtype=np.float64)
        voiced = np.asarray(self.voiced, dtype=bool)
        object.__setattr__(self, "lf0", lf0)
        object.__setattr__(self, "voiced", voiced)
        if lf0.shape != voiced.shape or lf0.ndim != 1:
            raise ValueError("lf0 and voiced must be 1-D arrays of equal length")
        if np.any(lf0[~voiced] != 0.0):
            raise ValueError("unvoiced frames must carry the 0.0 sentinel")
        v = lf0[voiced]
        if v.size and (np.any(v <= math.log(F0_FLOOR)) or np.any(v >= math.log(F0_CEIL))):
            raise ValueError("voiced lf0 values must lie in (ln 20, ln 4000)")

    def __len__(self) -> int:
        return len(self.lf0)

    def voicing_rate(self) -> float:
        return float(self.voiced.mean()) if len(self) else 0.0


def lf0_of(f0: float) -> float:
    """Natural log of a positive frequency in Hz."""
    if f0 <= 0:
        raise ValueError(f"f0 must be positive, got {f0}")
    return math.log(f0)


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


def semitone_index(f0: float) -> int:
    """MIDI semitone nearest to f0 (A4=440 -> 69); ties round away from zero."""
    if f0 <= 0:
        raise ValueError(f"f0 must be positive, got {f0}")
    return _round_half_away(69.0 + 12.0 * math.log2(f0 / 440.0))


def _cmndf(segment: np.ndarray, window: int, tau_max: int) -> np.ndarray:
    """Cumulative-mean-normalized difference for lags 0..tau_max."""
    # d(tau) = e(0) + e(tau) - 2*ac(tau) over a window of fixed length
    ac = np.correlate(segment, segment[:window], mode="valid")
    sq = np.concatenate(([0.0], np.cumsum(segment * segment)))
    energy = sq[window : window + tau_max + 1] - sq[: tau_max + 1]
    d = energy[0] + energy - 2.0 * ac
    d = np.maximum(d, 0.0)  # guard tiny negative round-off

    out = np.ones_like(d)
    running = np.cumsum(d[1:])
    taus = np.arange(1, tau_max + 1, dtype=np.float64)
    nonzero = running > 0.0
    out[1:][nonzero] = d[1:][nonzero] * taus[nonzero] / running[nonzero]
    return out


def _refine_lag(cmndf: np.ndarray, tau: int) -> float:
    """Parabolic interpolation of the minimum around integer lag tau."""
    if tau <= 0 or tau >= len(cmndf) - 1:
        return float(tau)
    a, b, c = cmndf[tau - 1], cmndf[tau], cmndf[tau + 1]
    denom = a - 2.0 * b + c
    if denom <= 0:
        return float(tau)
    delta = 0.5 * (a - c) / denom
    return float(tau) + float(np.clip(delta, -0.5, 0.5))


def estimate_f0(
    clip: AudioClip,
    fps: int,
    f_min: float = DEFAULT_F_MIN,
    f_max: float = DEFAULT_F_MAX,
    threshold: float = VOICING_THRESHOLD,
) -> MelodyTrack:
    """Per-frame F0 track of a clip; see module docstring for the method."""
    sr = clip.sample_rate
    if not (f_min >= F0_FLOOR and f_max <= sr / 4 and f_min < f_max):
        raise ValueError(
            f"invalid search range [{f_min}, {f_max}] for sample rate {sr}"
        )
    hop = hop_size(sr, fps)
    n_frames = frame_count(len(clip), sr, fps)
    if len(clip) < WINDOW or n_frames == 0:
        return MelodyTrack(np.zeros(0), np.zeros(0, dtype=bool), fps)

    tau_min = max(1, int(sr // f_max))
    tau_max = int(math.ceil(sr / f_min))
    seg_len = WINDOW + tau_max

    x = clip.samples
    lf0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    for i in range(n_frames):
        center = i * hop + hop // 2
        start = center - seg_len // 2
        lo, hi = max(start, 0), min(start + seg_len, len(x))
        segment = np.zeros(seg_len)
        segment[lo - start : lo - start + (hi - lo)] = x[lo:hi]

        cmndf = _cmndf(segment, WINDOW, tau_max)
        below = np.nonzero(cmndf[tau_min : tau_max + 1] < threshold)[0]
        if below.size == 0:
            continue
        tau = tau_min + int(below[0])
        while tau + 1 <= tau_max and cmndf[tau + 1] < cmndf[tau]:
            tau += 1
        lag = _refine_lag(cmndf, tau)
        f0 = sr / lag
        if f_min <= f0 <= f_max and F0_FLOOR < f0 < F0_CEIL:
            lf0[i] = math.log(f0)
            voiced[i] = True
    return MelodyTrack(lf0, voiced, fps)
