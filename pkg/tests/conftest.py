import numpy as np
import pytest

from tokmel.melody import MelodyTrack
from tokmel.quantize import FeatureMatrix
from tokmel.score import midi_to_lf0
from tokmel.signal_io import AudioClip
from tokmel.stream import TokenStream


def sine_clip(freq: float, seconds: float = 1.0, sr: int = 16000, amp: float = 0.5) -> AudioClip:
    t = np.arange(int(seconds * sr)) / sr
    return AudioClip(samples=amp * np.sin(2 * np.pi * freq * t), sample_rate=sr)


def make_pitch_dataset(n: int, seed: int, vocab: int = 6, nbins: int = 12,
                       lo: int = 36, hi: int = 60):
    """Frames whose token is a deterministic pitch bin; phonemes are noise.

    Features: one-hot phoneme, centered/scaled score log-F0, voiced flag.
    """
    rng = np.random.default_rng(seed)
    midi = rng.integers(lo, hi, n)
    token = (midi - lo) // ((hi - lo) // nbins)
    lf0 = np.array([midi_to_lf0(m) for m in midi]) + rng.normal(0, 0.01, n)
    center = midi_to_lf0((lo + hi) // 2)
    phon = rng.integers(0, vocab, n)
    x = np.zeros((n, vocab + 2))
    x[np.arange(n), phon] = 1.0
    x[:, vocab] = (lf0 - center) * 2.0
    x[:, vocab + 1] = 1.0
    tokens = TokenStream(streams=(token,), ks=(nbins,), fps=50)
    mel = MelodyTrack(lf0=lf0, voiced=np.ones(n, dtype=bool), fps=50)
    return x, tokens, mel


def random_features(n: int, d: int, seed: int, fps: int = 50) -> FeatureMatrix:
    rng = np.random.default_rng(seed)
    return FeatureMatrix(data=rng.normal(0, 1, (n, d)), fps=fps)


@pytest.fixture
def tmp_wav(tmp_path):
    def write(clip, name="clip.wav"):
        from tokmel.signal_io import write_wav

        path = tmp_path / name
        write_wav(clip, path)
        return path

    return write
