"""Time-domain operations: VAD smoothing, segmentation, labeling, overlap.

All functions are pure and operate on one recording at a time; recordings can
be processed in parallel without coordination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .corpus import Timeline, Turn

NO_SPEAKER = "<none>"

_EPS = 1e-9


@dataclass(frozen=True)
class Segment:
    """A sub-segment of a recording, optionally speaker-labeled."""

    recording: str
    start: float
    end: float
    speaker: Optional[str] = None

    def __post_init__(self):
        if not (0 <= self.start < self.end) or not math.isfinite(self.end):
            raise ValueError(f"bad segment times [{self.start}, {self.end}]")

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class SmoothingConfig:
    """Hysteresis post-processing parameters for VAD posteriors."""

    on_threshold: float = 0.5
    off_threshold: float = 0.5
    min_speech: float = 0.2
    min_gap: float = 0.1

    def __post_init__(self):
        if not (0 <= self.on_threshold <= 1 and 0 <= self.off_threshold <= 1):
            raise ValueError("thresholds must lie in [0, 1]")
        if self.min_speech < 0 or self.min_gap < 0:
            raise ValueError("durations must be >= 0")


@dataclass
class PosteriorTrack:
    """Frame-wise speech posteriors of one recording."""

    recording: str
    posteriors: np.ndarray
    frame_period: float = 0.01

    def __post_init__(self):
        self.posteriors = np.asarray(self.posteriors, dtype=np.float64).ravel()
        if self.frame_period <= 0:
            raise ValueError("frame_period must be > 0")
        if self.posteriors.size and (
            self.posteriors.min() < 0 or self.posteriors.max() > 1
        ):
            raise ValueError("posteriors must lie in [0, 1]")


def smooth_posteriors(
    track: PosteriorTrack, config: SmoothingConfig = SmoothingConfig()
) -> Timeline:
    """Hysteresis-threshold posteriors into a speech Timeline.

    Enters speech when p >= on_threshold, leaves when p < off_threshold;
    gaps shorter than min_gap are bridged, then speech intervals shorter than
    min_speech are dropped.
    """
    fp = track.frame_period
    intervals = []
    in_speech = False
    start = 0.0
    for i, p in enumerate(track.posteriors):
        if not in_speech and p >= config.on_threshold:
            in_speech = True
            start = i * fp
        elif in_speech and p < config.off_threshold:
            intervals.append((start, i * fp))
            in_speech = False
    if in_speech:
        intervals.append((start, track.posteriors.size * fp))

    # bridge short gaps first, then drop short speech
    bridged = []
    for a, b in intervals:
        if bridged and a - bridged[-1][1] < config.min_gap:
            bridged[-1][1] = b
        else:
            bridged.append([a, b])
    kept = [(a, b) for a, b in bridged if b - a >= config.min_speech - _EPS]
    return Timeline(track.recording, tuple(kept))


def uniform_segment(
    timeline: Timeline,
    win: float = 1.5,
    hop: float = 0.75,
    min_segment: float = 0.2,
) -> list[Segment]:
    """Slide fixed windows over each speech interval.

    Within [a, b]: windows [a + k*hop, a + k*hop + win] while they fit, plus
    one end-anchored tail window [b - win, b] if speech remains uncovered.
    Intervals shorter than the window become a single segment when at least
    ``min_segment`` long, otherwise nothing.
    """
    if not (win >= hop > 0):
        raise ValueError(f"need win >= hop > 0, got win={win} hop={hop}")
    segments = []
    for a, b in timeline.intervals:
        length = b - a
        if length < win - _EPS:
            if length >= min_segment - _EPS:
                segments.append(Segment(timeline.recording, a, b))
            continue
        k = 0
        last_end = a
        while a + k * hop + win <= b + _EPS:
            start = a + k * hop
            segments.append(Segment(timeline.recording, start, start + win))
            last_end = start + win
            k += 1
        if last_end < b - _EPS:
            segments.append(Segment(timeline.recording, max(a, b - win), b))
    return segments


def _overlap(a0, a1, b0, b1) -> float:
    return max(0.0, min(a1, b1) - max(a0, b0))


def label_segments(
    segments: Sequence[Segment],
    reference: Sequence[Turn],
    win: float = 1.5,
    hop: float = 0.75,
) -> list[Segment]:
    """Assign each segment the speaker who talks most in its central region.

    The central region spans the middle hop-length stretch of the window,
    clamped into the segment; ties break lexicographically and silent regions
    get the ``<none>`` label.
    """
    margin = (win - hop) / 2.0
    by_rec: dict[str, list[Turn]] = {}
    for t in reference:
        by_rec.setdefault(t.recording, []).append(t)

    labeled = []
    for seg in segments:
        lo = seg.start + margin
        hi = lo + hop
        lo = min(max(lo, seg.start), seg.end)
        hi = min(max(hi, seg.start), seg.end)
        if hi <= lo:  # degenerate clamp: fall back to the whole segment
            lo, hi = seg.start, seg.end
        talk: dict[str, float] = {}
        for t in by_rec.get(seg.recording, ()):
            dur = _overlap(lo, hi, t.onset, t.offset)
            if dur > 0:
                talk[t.speaker] = talk.get(t.speaker, 0.0) + dur
        if talk:
            best = max(talk.values())
            speaker = min(s for s, d in talk.items() if d >= best - _EPS)
        else:
            speaker = NO_SPEAKER
        labeled.append(Segment(seg.recording, seg.start, seg.end, speaker))
    return labeled


def apply_overlap(
    turns: Sequence[Turn],
    overlap_segments: Sequence[Segment],
    extend: float = 0.15,
) -> list[Turn]:
    """Attribute overlapped regions to every nearby speaker.

    For each overlap segment [s, e], every speaker whose speech intersects
    [s - extend, e + extend] gains a turn [s, e]; per-speaker turns are then
    merged, so existing speech is never removed.
    """
    by_key: dict[tuple[str, str], list[tuple[float, float]]] = {}
    for t in turns:
        by_key.setdefault((t.recording, t.speaker), []).append((t.onset, t.offset))

    for seg in overlap_segments:
        lo, hi = seg.start - extend, seg.end + extend
        for (rec, speaker), ivs in by_key.items():
            if rec != seg.recording:
                continue
            if any(_overlap(lo, hi, a, b) > 0 for a, b in ivs):
                ivs.append((seg.start, seg.end))

    out = []
    for (rec, speaker), ivs in by_key.items():
        merged = Timeline(rec, tuple(ivs))
        out.extend(Turn(rec, a, b - a, speaker) for a, b in merged.intervals)
    out.sort(key=lambda t: (t.recording, t.onset, t.speaker))
    return out
