"""tokmel: discrete token + melody intermediate representations for SVS.

Pipeline: audio / SSL feature matrices -> codebooks and token streams
(single, blended, or residual) -> token+melody bundles with bit-exact
serialization, plus score length regulation, a toy melody-enhanced
token predictor, and objective evaluation metrics.
"""

from .melody import MelodyTrack, estimate_f0, lf0_of, semitone_index
from .quantize import (
    Codebook,
    FeatureMatrix,
    FeatureSource,
    RvqCodebook,
    assign,
    blend_encode,
    decode,
    decode_rvq,
    distortion,
    encode,
    encode_rvq,
    train_kmeans,
    train_rvq,
)
from .score import FramePlan, MusicScore, parse_score, regulate, score_melody
from .signal_io import AudioClip, frame_count, read_wav, write_wav
from .stream import Bundle, TokenStream, bitrate, pack, read_fmat, unpack, write_fmat

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "Bundle",
    "Codebook",
    "FeatureMatrix",
    "FeatureSource",
    "FramePlan",
    "MelodyTrack",
    "MusicScore",
    "RvqCodebook",
    "TokenStream",
    "assign",
    "bitrate",
    "blend_encode",
    "decode",
    "decode_rvq",
    "distortion",
    "encode",
    "encode_rvq",
    "estimate_f0",
    "frame_count",
    "lf0_of",
    "pack",
    "parse_score",
    "read_fmat",
    "read_wav",
    "regulate",
    "score_melody",
    "semitone_index",
    "train_kmeans",
    "train_rvq",
    "unpack",
    "write_fmat",
    "write_wav",
]
