"""Objective evaluation: mel cepstral distortion, F0 RMSE, semitone accuracy.

Cepstra: per frame, 1024-sample Hann window centered on the frame,
magnitude spectrum, 80-band triangular mel filterbank (20 Hz-Nyquist,
area-normalized), natural-log energies floored at 1e-10, orthonormal
type-II DCT, coefficients 1..order kept (c_0 dropped so overall gain
cancels). MCD uses the (10/ln 10)*sqrt(2) convention. No time alignment
is performed; tracks are compared frame by frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.fft import dct

from .melody import MelodyTrack, semitone_index
from .signal_io import AudioClip, frame_count, hop_size

MCD_CONSTANT = (10.0 / math.log(10.0)) * math.sqrt(2.0)

WINDOW = 1024
N_MELS = 80
MEL_FMIN = 20.0
LOG_FLOOR = 1e-10
DEFAULT_ORDER = 13


@dataclass(frozen=True)
class CepstralTrack:
    frames: np.ndarray  # N x order, coefficients c_1..c_order
    fps: int
    order: int

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        object.__setattr__(self, "frames", frames)
        if frames.ndim != 2 or frames.shape[1] != self.order or self.order < 1:
            raise ValueError(f"expected frames of shape (N, {self.order})")
        if frames.size and not np.all(np.isfinite(frames)):
            raise ValueError("cepstral values must be finite")

    def __len__(self) -> int:
        return len(self.frames)


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int, fmin: float) -> np.ndarray:
    """Triangular mel filters, each normalized to unit area (sum of weights)."""
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    edges = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(sample_rate / 2), n_mels + 2))
    fb = np.zeros((n_mels, len(freqs)))
    for m in range(n_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (freqs - lo) / max(center - lo, 1e-12)
        falling = (hi - freqs) / max(hi - center, 1e-12)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
        total = fb[m].sum()
        if total > 0:
            fb[m] /= total
    return fb


def mel_cepstrum(clip: AudioClip, fps: int, order: int = DEFAULT_ORDER) -> CepstralTrack:
    """Mel-cepstral track of a clip; see module docstring for the recipe."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if order >= N_MELS:
        raise ValueError(f"order must be < {N_MELS}")
    hop = hop_size(clip.sample_rate, fps)
    n_frames = frame_count(len(clip), clip.sample_rate, fps)

    window = np.hanning(WINDOW)
    fb = mel_filterbank(clip.sample_rate, WINDOW, N_MELS, MEL_FMIN)
    x = clip.samples

    frames = np.zeros((n_frames, order))
    for i in range(n_frames):
        center = i * hop + hop // 2
        start = center - WINDOW // 2
        lo, hi = max(start, 0), min(start + WINDOW, len(x))
        segment = np.zeros(WINDOW)
        segment[lo - start : lo - start + (hi - lo)] = x[lo:hi]
        mag = np.abs(np.fft.rfft(segment * window))
        log_energies = np.log(np.maximum(fb @ mag, LOG_FLOOR))
        coeffs = dct(log_energies, type=2, norm="ortho")
        frames[i] = coeffs[1 : order + 1]
    return CepstralTrack(frames=frames, fps=fps, order=order)


def mcd(a: CepstralTrack, b: CepstralTrack) -> float:
    """Mean per-frame (10/ln 10)*sqrt(2)*||c_a - c_b||_2, in dB."""
    if a.frames.shape != b.frames.shape or a.fps != b.fps:
        raise ValueError("cepstral tracks must share shape and frame rate")
    if len(a) == 0:
        return 0.0
    diff = a.frames - b.frames
    return float(MCD_CONSTANT * np.sqrt((diff * diff).sum(axis=1)).mean())


class F0Rmse(NamedTuple):
    value: float  # log-Hz RMSE over co-voiced frames; 0 when none
    co_voiced: int


class SemitoneAccuracy(NamedTuple):
    value: Optional[float]  # None when no co-voiced frames exist
    co_voiced: int


def _co_voiced(a: MelodyTrack, b: MelodyTrack) -> np.ndarray:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    return a.voiced & b.voiced


def f0_rmse(a: MelodyTrack, b: MelodyTrack) -> F0Rmse:
    """RMSE of log-F0 over frames voiced in both tracks."""
    mask = _co_voiced(a, b)
    count = int(mask.sum())
    if count == 0:
        return F0Rmse(0.0, 0)
    diff = a.lf0[mask] - b.lf0[mask]
    return F0Rmse(float(np.sqrt((diff * diff).mean())), count)


def semitone_accuracy(a: MelodyTrack, b: MelodyTrack) -> SemitoneAccuracy:
    """Fraction of co-voiced frames landing on the same MIDI semitone."""
    mask = _co_voiced(a, b)
    count = int(mask.sum())
    if count == 0:
        return SemitoneAccuracy(None, 0)
    same = sum(
        semitone_index(math.exp(la)) == semitone_index(math.exp(lb))
        for la, lb in zip(a.lf0[mask], b.lf0[mask])
    )
    return SemitoneAccuracy(same / count, count)
