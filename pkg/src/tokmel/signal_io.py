"""WAV ingestion/emission and frame alignment.

Only RIFF/WAVE PCM 16-bit is supported; anything else is rejected rather
than converted. Multichannel input is averaged down to mono. The default
operating point elsewhere in the toolkit is 16 kHz / 50 fps (hop 320).
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, FormatError

PCM_SCALE = 32768  # int16 full scale


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray  # float64 amplitudes in [-1, 1]
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.ndim != 1:
            raise ValueError("samples must be a 1-D sequence")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def read_wav(path) -> AudioClip:
    """Read a PCM16 RIFF/WAVE file; multichannel is averaged to mono."""
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getcomptype() != "NONE":
                raise FormatError(f"unsupported WAV compression {wf.getcomptype()!r}")
            if wf.getsampwidth() != 2:
                raise FormatError(
                    f"only PCM16 supported, got sample width {wf.getsampwidth()} bytes"
                )
            n_channels = wf.getnchannels()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise FormatError(f"malformed WAV file: {exc}") from exc
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE
    if n_channels > 1:
        usable = (len(data) // n_channels) * n_channels
        data = data[:usable].reshape(-1, n_channels).mean(axis=1)
    return AudioClip(samples=data, sample_rate=rate)


def write_wav(clip: AudioClip, path) -> None:
    """Write mono PCM16 little-endian; amplitudes are clipped to int16 range."""
    quantized = np.clip(
        np.round(clip.samples * PCM_SCALE), -PCM_SCALE, PCM_SCALE - 1
    ).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(quantized.tobytes())


def hop_size(sample_rate: int, fps: int) -> int:
    """Samples per frame; sample_rate must divide evenly by fps."""
    if fps <= 0:
        raise AlignmentError(f"fps must be positive, got {fps}")
    if sample_rate % fps != 0:
        raise AlignmentError(
            f"sample rate {sample_rate} is not an integer multiple of {fps} fps"
        )
    return sample_rate // fps


def frame_count(num_samples: int, sample_rate: int, fps: int) -> int:
    """Number of whole frames covered by num_samples at the given rate."""
    if num_samples < 0:
        raise ValueError("num_samples must be non-negative")
    return num_samples // hop_size(sample_rate, fps)
