"""Readers/writers for embedding archives, RTTM, trial lists, and manifests.

All parsers and writers are pure functions over strings/bytes; they hold no
shared state and are safe to call from any number of workers.

On-disk formats:

* ``EMB1`` archive: bytes 0-3 magic ``EMB1``; bytes 4-7 record count N
  (uint32 LE); bytes 8-11 dimension D (uint32 LE); then N records of
  [uint16 LE id byte length, UTF-8 id bytes, D float32 LE values].
* RTTM: 9+ field ``SPEAKER`` rows, ``<NA>`` for unused fields, times with
  3 decimal places.
* Trial list: ``[label] enroll test`` whitespace-separated, label in {0,1}.
* Manifest: ``utterance speaker [video] [speed]`` whitespace-separated,
  ``-`` marks a missing video id.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    DuplicateIdError,
    FormatError,
    ParseError,
    StateError,
    TruncationError,
)

ARCHIVE_MAGIC = b"EMB1"

SPEED_TAGS = (0.9, 1.1)


@dataclass
class EmbeddingSet:
    """N identified D-dimensional float32 embedding vectors."""

    ids: list[str]
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be a 2-D array")
        if len(self.ids) != self.vectors.shape[0]:
            raise ValueError(
                f"{len(self.ids)} ids for {self.vectors.shape[0]} vectors"
            )
        if self.vectors.shape[1] < 1:
            raise ValueError("embedding dimension must be positive")
        if len(set(self.ids)) != len(self.ids):
            raise DuplicateIdError("embedding ids are not unique")
        if self.vectors.size and not np.isfinite(self.vectors).all():
            raise ValueError("embedding values must be finite")
        self._index = {u: i for i, u in enumerate(self.ids)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, utt_id) -> bool:
        return utt_id in self._index

    def vector(self, utt_id: str) -> np.ndarray:
        return self.vectors[self._index[utt_id]]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return self.ids == other.ids and np.array_equal(
            self.vectors.view(np.uint32), other.vectors.view(np.uint32)
        )


@dataclass(frozen=True, order=True)
class Turn:
    """One speaker-attributed interval of a recording (an RTTM row)."""

    recording: str
    onset: float
    duration: float
    speaker: str

    def __post_init__(self):
        if not (math.isfinite(self.onset) and math.isfinite(self.duration)):
            raise ValueError("onset and duration must be finite")
        if self.duration <= 0:
            raise ValueError(f"turn duration must be > 0, got {self.duration}")
        if self.onset < 0:
            raise ValueError(f"turn onset must be >= 0, got {self.onset}")

    @property
    def offset(self) -> float:
        return self.onset + self.duration


@dataclass(frozen=True)
class Timeline:
    """Sorted disjoint speech intervals of a recording (canonical form).

    Touching or overlapping intervals are merged on construction, so equal
    speech regions always compare equal.
    """

    recording: str
    intervals: tuple = ()

    def __post_init__(self):
        merged = []
        for start, end in sorted(self.intervals):
            start, end = float(start), float(end)
            if not (math.isfinite(start) and math.isfinite(end) and start < end):
                raise ValueError(f"bad interval ({start}, {end})")
            if merged and start <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], end)
            else:
                merged.append([start, end])
        object.__setattr__(
            self, "intervals", tuple((a, b) for a, b in merged)
        )

    def duration(self) -> float:
        return sum(b - a for a, b in self.intervals)

    def __bool__(self) -> bool:
        return bool(self.intervals)


class ManifestEntry(NamedTuple):
    utterance: str
    speaker: str
    video: Optional[str] = None
    speed: float = 1.0


@dataclass
class Manifest:
    """Corpus bookkeeping: one entry per utterance."""

    entries: list[ManifestEntry] = field(default_factory=list)

    def validate(self) -> "Manifest":
        seen = set()
        for e in self.entries:
            if e.utterance in seen:
                raise DuplicateIdError(f"duplicate utterance id '{e.utterance}'")
            seen.add(e.utterance)
        return self

    def speakers(self) -> set[str]:
        return {e.speaker for e in self.entries}

    def video_of(self) -> dict[str, Optional[str]]:
        return {e.utterance: e.video for e in self.entries}

    def __len__(self) -> int:
        return len(self.entries)


# --- EMB1 archive ------------------------------------------------------------

def save_embedding_archive(path, embeddings: EmbeddingSet) -> None:
    """Write an EmbeddingSet in the EMB1 binary layout."""
    n, d = embeddings.vectors.shape
    parts = [ARCHIVE_MAGIC, struct.pack("<II", n, d)]
    for utt_id, row in zip(embeddings.ids, embeddings.vectors):
        raw = utt_id.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise FormatError(f"id too long for archive: '{utt_id[:40]}...'")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(row.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_embedding_archive(path) -> EmbeddingSet:
    """Read an EMB1 archive back into an EmbeddingSet, bit-exactly."""
    data = Path(path).read_bytes()
    return _decode_archive(data)


def _decode_archive(data: bytes) -> EmbeddingSet:
    if data[:4] != ARCHIVE_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {ARCHIVE_MAGIC!r}")
    if len(data) < 12:
        raise TruncationError("archive shorter than its header")
    n, d = struct.unpack_from("<II", data, 4)
    if d < 1:
        raise FormatError("archive declares dimension 0")
    ids = []
    vectors = np.empty((n, d), dtype=np.float32)
    off = 12
    row_bytes = 4 * d
    for i in range(n):
        if off + 2 > len(data):
            raise TruncationError(f"record {i}: missing id length")
        (id_len,) = struct.unpack_from("<H", data, off)
        off += 2
        if off + id_len + row_bytes > len(data):
            raise TruncationError(f"record {i}: truncated")
        utt_id = data[off : off + id_len].decode("utf-8")
        off += id_len
        vectors[i] = np.frombuffer(data, dtype="<f4", count=d, offset=off)
        off += row_bytes
        ids.append(utt_id)
    if len(set(ids)) != n:
        raise DuplicateIdError("archive contains duplicate ids")
    if n and not np.isfinite(vectors).all():
        raise FormatError("archive contains non-finite values")
    return EmbeddingSet(ids=ids, vectors=vectors)


# --- RTTM ----------------------------------------------------------------------

def parse_rttm(text: str) -> list[Turn]:
    """Parse SPEAKER rows into turns sorted by (recording, onset)."""
    turns = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        fields = line.split()
        if fields[0] != "SPEAKER" or len(fields) < 9:
            raise ParseError(
                f"expected a 9-field SPEAKER row, got {line[:60]!r}", line=lineno
            )
        try:
            onset = float(fields[3])
            duration = float(fields[4])
        except ValueError:
            raise ParseError(
                f"non-numeric onset/duration in {line[:60]!r}", line=lineno
            ) from None
        if duration <= 0:
            raise ValueError(f"line {lineno}: duration must be > 0, got {duration}")
        turns.append(Turn(fields[1], onset, duration, fields[7]))
    turns.sort(key=lambda t: (t.recording, t.onset, t.speaker))
    return turns


def write_rttm(turns: Sequence[Turn]) -> str:
    """Render turns as RTTM text (times at 3 decimal places, sorted)."""
    rows = []
    for t in sorted(turns, key=lambda t: (t.recording, t.onset, t.speaker)):
        rows.append(
            f"SPEAKER {t.recording} 1 {t.onset:.3f} {t.duration:.3f} "
            f"<NA> <NA> {t.speaker} <NA> <NA>"
        )
    return "\n".join(rows) + ("\n" if rows else "")


# --- trial lists ------------------------------------------------------------------

class Trial(NamedTuple):
    enroll: str
    test: str
    label: Optional[bool] = None  # True = target


def parse_trials(text: str) -> list[Trial]:
    """Parse a trial list, preserving file order.

    Lines must be uniformly 2-field (unlabeled) or 3-field (labeled); a mix
    raises FormatError.
    """
    trials = []
    n_fields = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) not in (2, 3):
            raise ParseError(
                f"expected 2 or 3 fields, got {len(fields)}", line=lineno
            )
        if n_fields is None:
            n_fields = len(fields)
        elif len(fields) != n_fields:
            raise FormatError(
                f"line {lineno}: mixed {n_fields}- and {len(fields)}-field trial rows"
            )
        if len(fields) == 3:
            if fields[0] not in ("0", "1"):
                raise ParseError(
                    f"label must be 0 or 1, got {fields[0]!r}", line=lineno
                )
            trials.append(Trial(fields[1], fields[2], fields[0] == "1"))
        else:
            trials.append(Trial(fields[0], fields[1]))
    return trials


# --- manifests -----------------------------------------------------------------

def parse_manifest(text: str) -> Manifest:
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) < 2 or len(fields) > 4:
            raise ParseError(
                f"expected 'utt spk [video] [speed]', got {line[:60]!r}", line=lineno
            )
        video = None
        speed = 1.0
        if len(fields) >= 3 and fields[2] != "-":
            video = fields[2]
        if len(fields) == 4:
            try:
                speed = float(fields[3])
            except ValueError:
                raise ParseError(f"bad speed tag {fields[3]!r}", line=lineno) from None
        entries.append(ManifestEntry(fields[0], fields[1], video, speed))
    return Manifest(entries).validate()


def write_manifest(manifest: Manifest) -> str:
    lines = []
    for e in manifest.entries:
        video = e.video if e.video is not None else "-"
        lines.append(f"{e.utterance} {e.speaker} {video} {e.speed:g}")
    return "\n".join(lines) + ("\n" if lines else "")


def expand_speed_perturb(manifest: Manifest, shared_videos: bool = True) -> Manifest:
    """Triple a manifest with 0.9x / 1.1x speed copies treated as new speakers.

    Perturbed copies get ``#0.9`` / ``#1.1`` suffixes on both the utterance id
    (uniqueness) and the speaker id (new-speaker relabeling), so the speaker
    count triples along with the utterance count. ``shared_videos`` controls
    whether copies keep the source video id (default) or get suffixed ones.
    """
    for e in manifest.entries:
        if e.speed != 1.0:
            raise StateError(
                f"manifest already expanded: '{e.utterance}' has speed {e.speed}"
            )
    out = list(manifest.entries)
    for speed in SPEED_TAGS:
        sfx = f"#{speed:g}"
        spk_cache: dict[str, str] = {}
        vid_cache: dict[str, str] = {}
        append = out.append
        for e in manifest.entries:
            spk = spk_cache.get(e.speaker)
            if spk is None:
                spk = spk_cache[e.speaker] = e.speaker + sfx
            if shared_videos or e.video is None:
                video = e.video
            else:
                video = vid_cache.get(e.video)
                if video is None:
                    video = vid_cache[e.video] = e.video + sfx
            append(ManifestEntry(e.utterance + sfx, spk, video, speed))
    return Manifest(out)
