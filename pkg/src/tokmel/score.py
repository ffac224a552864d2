"""Music-score parsing and deterministic length regulation.

Score text format (UTF-8, one note per line, `#` starts a comment):

    lyric<TAB>phonemes(space-separated)<TAB>midi<TAB>onset_sec<TAB>offset_sec

midi 0 denotes a rest. Notes must be sorted, non-overlapping, and --
for regulation -- contiguous from 0 (model silence as explicit rests).

Length regulation maps note boundaries by cumulative rounding
(boundary_k = round(offset_k * fps), half away from zero), which makes
the total frame count exactly round(total_duration * fps) no matter how
the score is subdivided. Phonemes within a note are spread over its
frames by the same cumulative-rounding rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .melody import MelodyTrack, _round_half_away

REST = -1  # internal frame-level midi value for rests

_PLAN_MAGIC = b"PLAN"
_PLAN_VERSION = 1


@dataclass(frozen=True)
class Note:
    lyric: str
    phonemes: tuple[str, ...]
    midi: int | None  # None for rests
    onset_sec: float
    offset_sec: float

    def __post_init__(self):
        if not self.phonemes:
            raise ValueError("a note needs at least one phoneme")
        if self.midi is not None and not (0 <= self.midi <= 127):
            raise ValueError(f"midi {self.midi} out of range")
        if self.offset_sec <= self.onset_sec:
            raise ValueError("note must have positive duration")


@dataclass(frozen=True)
class MusicScore:
    notes: tuple[Note, ...]

    def __post_init__(self):
        notes = tuple(self.notes)
        object.__setattr__(self, "notes", notes)
        for prev, cur in zip(notes, notes[1:]):
            if cur.onset_sec < prev.offset_sec:
                raise ValueError("notes overlap or are unsorted")

    @property
    def total_duration(self) -> float:
        return self.notes[-1].offset_sec if self.notes else 0.0


@dataclass(frozen=True)
class FramePlan:
    phone_ids: np.ndarray  # per-frame index into `phonemes`
    midi: np.ndarray  # per-frame midi, REST for rests
    fps: int
    phonemes: tuple[str, ...]  # id -> symbol

    def __post_init__(self):
        phone_ids = np.asarray(self.phone_ids, dtype=np.int64)
        midi = np.asarray(self.midi, dtype=np.int64)
        object.__setattr__(self, "phone_ids", phone_ids)
        object.__setattr__(self, "midi", midi)
        if phone_ids.shape != midi.shape or phone_ids.ndim != 1:
            raise ValueError("phone_ids and midi must be 1-D arrays of equal length")
        if phone_ids.size and (
            phone_ids.min() < 0 or phone_ids.max() >= len(self.phonemes)
        ):
            raise ValueError("phone id out of vocabulary range")

    def __len__(self) -> int:
        return len(self.phone_ids)


def parse_score(text: str) -> MusicScore:
    notes = []
    prev_offset = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = raw.rstrip("\n").split("\t")
        if len(fields) != 5:
            raise ParseError(f"expected 5 tab-separated fields, got {len(fields)}", lineno)
        lyric, phoneme_field, midi_field, onset_field, offset_field = fields
        phonemes = tuple(p for p in phoneme_field.split(" ") if p)
        if not phonemes:
            raise ParseError("empty phoneme list", lineno)
        try:
            midi = int(midi_field)
            onset = float(onset_field)
            offset = float(offset_field)
        except ValueError as exc:
            raise ParseError(f"malformed numeric field: {exc}", lineno) from exc
        if not (0 <= midi <= 127):
            raise ParseError(f"midi {midi} out of range 0-127", lineno)
        if offset <= onset:
            raise ParseError("note duration must be positive", lineno)
        if onset < 0:
            raise ParseError("onset must be non-negative", lineno)
        if prev_offset is not None and onset < prev_offset:
            raise ParseError("note overlaps the previous note", lineno)
        prev_offset = offset
        notes.append(
            Note(
                lyric=lyric,
                phonemes=phonemes,
                midi=None if midi == 0 else midi,
                onset_sec=onset,
                offset_sec=offset,
            )
        )
    return MusicScore(notes=tuple(notes))


def regulate(score: MusicScore, fps: int) -> FramePlan:
    """Expand a score to frame level; see module docstring for the rounding."""
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    if not score.notes:
        return FramePlan(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), fps, ())

    if abs(score.notes[0].onset_sec) > 1e-9:
        raise ValueError("score must start at 0; model leading silence as a rest note")
    for prev, cur in zip(score.notes, score.notes[1:]):
        if abs(cur.onset_sec - prev.offset_sec) > 1e-9:
            raise ValueError(
                "score has a gap between notes; model silence as explicit rests"
            )

    vocab = tuple(sorted({p for note in score.notes for p in note.phonemes}))
    phone_of = {p: i for i, p in enumerate(vocab)}

    total = _round_half_away(score.total_duration * fps)
    phone_ids = np.zeros(total, dtype=np.int64)
    midi = np.full(total, REST, dtype=np.int64)

    start = 0
    for note in score.notes:
        end = _round_half_away(note.offset_sec * fps)
        span = end - start
        if note.midi is not None:
            midi[start:end] = note.midi
        # cumulative rounding again for the per-phoneme split inside the note
        sub_prev = 0
        for p, phoneme in enumerate(note.phonemes, start=1):
            sub = _round_half_away(span * p / len(note.phonemes))
            phone_ids[start + sub_prev : start + sub] = phone_of[phoneme]
            sub_prev = sub
        start = end
    return FramePlan(phone_ids=phone_ids, midi=midi, fps=fps, phonemes=vocab)


def midi_to_lf0(midi: int) -> float:
    """Natural-log frequency of an equal-tempered midi pitch (A4=69=440 Hz)."""
    return math.log(440.0) + (midi - 69) * math.log(2.0) / 12.0


def score_melody(plan: FramePlan) -> MelodyTrack:
    """Piecewise-constant melody implied by the score pitches."""
    voiced = plan.midi != REST
    lf0 = np.zeros(len(plan))
    lf0[voiced] = np.log(440.0) + (plan.midi[voiced] - 69) * (np.log(2.0) / 12.0)
    return MelodyTrack(lf0=lf0, voiced=voiced, fps=plan.fps)


# --- PLAN file ----------------------------------------------------------------
#
# magic "PLAN", version u16=1, fps f32, N u64, V u16, then V phoneme
# entries (u16 byte length + UTF-8), then N records of (i16 phone id,
# i16 midi with -1 for rests). Little-endian throughout.


def write_plan(plan: FramePlan, path) -> None:
    import struct

    with open(path, "wb") as fh:
        fh.write(_PLAN_MAGIC)
        fh.write(struct.pack("<HfQH", _PLAN_VERSION, float(plan.fps), len(plan), len(plan.phonemes)))
        for p in plan.phonemes:
            b = p.encode("utf-8")
            fh.write(struct.pack("<H", len(b)) + b)
        interleaved = np.empty(2 * len(plan), dtype="<i2")
        interleaved[0::2] = plan.phone_ids.astype("<i2")
        interleaved[1::2] = plan.midi.astype("<i2")
        fh.write(interleaved.tobytes())


def read_plan(path) -> FramePlan:
    import struct

    from .errors import CorruptionError, FormatError

    with open(path, "rb") as fh:
        data = fh.read()
    head = struct.calcsize("<HfQH")
    if len(data) < 4 + head or data[:4] != _PLAN_MAGIC:
        raise FormatError("bad PLAN magic or truncated header")
    version, fps, n, v = struct.unpack_from("<HfQH", data, 4)
    if version != _PLAN_VERSION:
        raise FormatError(f"unsupported PLAN version {version}")
    offset = 4 + head
    phonemes = []
    for _ in range(v):
        if len(data) < offset + 2:
            raise CorruptionError("truncated PLAN vocabulary")
        (blen,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if len(data) < offset + blen:
            raise CorruptionError("truncated PLAN vocabulary entry")
        phonemes.append(data[offset : offset + blen].decode("utf-8"))
        offset += blen
    if len(data) != offset + 4 * n:
        raise CorruptionError("PLAN payload size mismatch")
    interleaved = np.frombuffer(data, dtype="<i2", count=2 * n, offset=offset)
    phone_ids = interleaved[0::2].astype(np.int64)
    midi = interleaved[1::2].astype(np.int64)
    return FramePlan(
        phone_ids=phone_ids, midi=midi, fps=int(round(fps)), phonemes=tuple(phonemes)
    )
