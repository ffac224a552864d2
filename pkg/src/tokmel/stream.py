"""The intermediate-representation container and feature interchange files.

Two little-endian binary formats:

TOKS (token+melody bundle)
    magic "TOKS", version u16=1, fps f32, S u8, per stream K u32,
    N u64, melody-flag u8. Then per stream the N ids bit-packed
    MSB-first at width ceil(log2 K) bits (width 1 when K=1), each
    stream zero-padded to a byte boundary. If the melody flag is set:
    N f32 lf0 values followed by ceil(N/8) bytes of voicing bitmask
    (bit for frame i at position i, MSB-first).

FMAT (feature matrix)
    magic "FMAT", version u16=1, D u32, N u64, fps f32, model-name
    length u16 + UTF-8 bytes, layer u16, then N*D f32 row-major.

Bitrate accounting for a bundle is fps * (sum_j ceil(log2 K_j) +
melody bits per frame); melody defaults to a raw 32-bit float per
frame, which at 50 fps with a single K=128 stream gives 1950 bps.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import CorruptionError, FormatError
from .melody import MelodyTrack
from .quantize import FeatureMatrix, FeatureSource

_TOKS_MAGIC = b"TOKS"
_TOKS_VERSION = 1
_FMAT_MAGIC = b"FMAT"
_FMAT_VERSION = 1

MELODY_BITS_PER_FRAME = 32  # raw f32 lf0


def token_width(k: int) -> int:
    """Bits needed to store ids below k; at least 1."""
    if k < 1:
        raise ValueError(f"codebook size must be >= 1, got {k}")
    return max(1, (k - 1).bit_length())


@dataclass(frozen=True)
class TokenStream:
    streams: tuple[np.ndarray, ...]  # S arrays of length N
    ks: tuple[int, ...]
    fps: int
    n: int = -1  # only consulted when S == 0

    def __post_init__(self):
        streams = tuple(np.asarray(s, dtype=np.int64) for s in self.streams)
        ks = tuple(int(k) for k in self.ks)
        object.__setattr__(self, "streams", streams)
        object.__setattr__(self, "ks", ks)
        if len(streams) != len(ks):
            raise ValueError("streams and ks must have equal length")
        lengths = {len(s) for s in streams}
        if len(lengths) > 1:
            raise ValueError(f"streams disagree on length: {sorted(lengths)}")
        n = lengths.pop() if lengths else max(self.n, 0)
        object.__setattr__(self, "n", int(n))
        for j, (s, k) in enumerate(zip(streams, ks)):
            if k < 1:
                raise ValueError(f"stream {j}: K must be >= 1")
            if s.size and (s.min() < 0 or s.max() >= k):
                raise ValueError(f"stream {j}: ids must lie in [0, {k})")

    @property
    def num_streams(self) -> int:
        return len(self.streams)

    @property
    def num_frames(self) -> int:
        return self.n


@dataclass(frozen=True)
class Bundle:
    tokens: TokenStream
    melody: Optional[MelodyTrack] = None

    def __post_init__(self):
        if self.melody is not None:
            if len(self.melody) != self.tokens.num_frames:
                raise ValueError(
                    f"melody length {len(self.melody)} != frame count "
                    f"{self.tokens.num_frames}"
                )
            if self.melody.fps != self.tokens.fps:
                raise ValueError("melody fps differs from token fps")


def _pack_bits(ids: np.ndarray, width: int) -> bytes:
    if ids.size == 0:
        return b""
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    bits = ((ids[:, None] >> shifts) & 1).astype(np.uint8).ravel()
    return np.packbits(bits).tobytes()


def _unpack_bits(buf: bytes, n: int, width: int) -> np.ndarray:
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8))[: n * width]
    weights = 1 << np.arange(width - 1, -1, -1, dtype=np.int64)
    return bits.reshape(n, width).astype(np.int64) @ weights


def packed_size(ks: Sequence[int], n: int, has_melody: bool) -> int:
    """Closed-form byte length of pack() output."""
    header = 4 + 2 + 4 + 1 + 4 * len(ks) + 8 + 1
    payload = sum((n * token_width(k) + 7) // 8 for k in ks)
    if has_melody:
        payload += 4 * n + (n + 7) // 8
    return header + payload


def pack(bundle: Bundle) -> bytes:
    tokens = bundle.tokens
    out = bytearray()
    out += _TOKS_MAGIC
    out += struct.pack(
        "<Hf B", _TOKS_VERSION, float(tokens.fps), tokens.num_streams
    )
    for k in tokens.ks:
        out += struct.pack("<I", k)
    out += struct.pack("<QB", tokens.num_frames, 1 if bundle.melody is not None else 0)
    for s, k in zip(tokens.streams, tokens.ks):
        out += _pack_bits(s, token_width(k))
    if bundle.melody is not None:
        out += bundle.melody.lf0.astype("<f4").tobytes()
        out += np.packbits(bundle.melody.voiced).tobytes()
    return bytes(out)


def unpack(data: bytes) -> Bundle:
    if len(data) < 11 or data[:4] != _TOKS_MAGIC:
        raise FormatError("bad TOKS magic")
    version, fps, num_streams = struct.unpack_from("<HfB", data, 4)
    if version != _TOKS_VERSION:
        raise FormatError(f"unsupported TOKS version {version}")
    offset = 11
    if len(data) < offset + 4 * num_streams + 9:
        raise CorruptionError("truncated TOKS header")
    ks = []
    for _ in range(num_streams):
        (k,) = struct.unpack_from("<I", data, offset)
        if k < 1:
            raise CorruptionError("stream K must be >= 1")
        ks.append(k)
        offset += 4
    n, melody_flag = struct.unpack_from("<QB", data, offset)
    offset += 9
    if melody_flag not in (0, 1):
        raise CorruptionError(f"bad melody flag {melody_flag}")

    fps_int = int(round(fps))
    streams = []
    for k in ks:
        nbytes = (n * token_width(k) + 7) // 8
        if len(data) < offset + nbytes:
            raise CorruptionError("truncated token payload")
        ids = _unpack_bits(data[offset : offset + nbytes], n, token_width(k))
        if ids.size and ids.max() >= k:
            raise CorruptionError(f"token id {int(ids.max())} out of range for K={k}")
        streams.append(ids)
        offset += nbytes

    melody = None
    if melody_flag:
        need = 4 * n + (n + 7) // 8
        if len(data) < offset + need:
            raise CorruptionError("truncated melody payload")
        lf0 = np.frombuffer(data, dtype="<f4", count=n, offset=offset).astype(np.float64)
        offset += 4 * n
        mask_bytes = np.frombuffer(data, dtype=np.uint8, count=(n + 7) // 8, offset=offset)
        voiced = np.unpackbits(mask_bytes)[:n].astype(bool)
        offset += (n + 7) // 8
        try:
            melody = MelodyTrack(lf0=lf0, voiced=voiced, fps=fps_int)
        except ValueError as exc:
            raise CorruptionError(f"invalid melody payload: {exc}") from exc

    if offset != len(data):
        raise CorruptionError("trailing bytes after TOKS payload")
    tokens = TokenStream(streams=tuple(streams), ks=tuple(ks), fps=fps_int, n=n)
    return Bundle(tokens=tokens, melody=melody)


def bitrate(ks: Sequence[int], fps: float, melody_bits_per_frame: int = 0) -> float:
    """Bits per second of a bundle: fps * (sum ceil(log2 K_j) + melody bits)."""
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    if melody_bits_per_frame < 0:
        raise ValueError("melody_bits_per_frame must be non-negative")
    total_bits = 0
    for k in ks:
        if k < 1:
            raise ValueError(f"codebook size must be >= 1, got {k}")
        total_bits += (k - 1).bit_length()
    return fps * (total_bits + melody_bits_per_frame)


# --- FMAT ---------------------------------------------------------------------


def write_fmat(features: FeatureMatrix, path) -> None:
    name = features.source.model_name.encode("utf-8")
    if len(name) > 0xFFFF:
        raise ValueError("model name too long")
    with open(path, "wb") as fh:
        fh.write(_FMAT_MAGIC)
        fh.write(
            struct.pack(
                "<HIQfH",
                _FMAT_VERSION,
                features.dim,
                features.num_frames,
                float(features.fps),
                len(name),
            )
        )
        fh.write(name)
        fh.write(struct.pack("<H", features.source.layer))
        fh.write(features.data.astype("<f4").tobytes())


def read_fmat(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    head = struct.calcsize("<HIQfH")
    if len(data) < 4 + head or data[:4] != _FMAT_MAGIC:
        raise FormatError("bad FMAT magic or truncated header")
    version, dim, n, fps, name_len = struct.unpack_from("<HIQfH", data, 4)
    if version != _FMAT_VERSION:
        raise FormatError(f"unsupported FMAT version {version}")
    offset = 4 + head
    if len(data) < offset + name_len + 2:
        raise CorruptionError("truncated FMAT model name")
    name = data[offset : offset + name_len].decode("utf-8")
    offset += name_len
    (layer,) = struct.unpack_from("<H", data, offset)
    offset += 2
    body = n * dim * 4
    if len(data) != offset + body:
        raise CorruptionError("FMAT payload size mismatch")
    values = np.frombuffer(data, dtype="<f4", count=n * dim, offset=offset)
    values = values.reshape(n, dim).astype(np.float64)
    if values.size and not np.all(np.isfinite(values)):
        raise CorruptionError("non-finite values in FMAT payload")
    return FeatureMatrix(
        data=values,
        fps=int(round(fps)),
        source=FeatureSource(model_name=name, layer=layer),
    )
