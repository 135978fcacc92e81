"""End-to-end pipelines binding the toolkit modules together.

Recordings are processed by a bounded worker pool; results are gathered and
emitted in sorted order so identical inputs and seeds produce byte-identical
outputs at any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .clustering import (
    assemble_affinity,
    cosine_scorer,
    estimate_speaker_count,
    refine_affinity,
    spectral_cluster,
)
from .corpus import EmbeddingSet, Manifest, Timeline, Trial, Turn, write_rttm
from .errors import ParseError, StageError, ToolkitError
from .metrics import DcfConfig, eer, min_dcf
from .pseudolabel import PurifyConfig, RoundStats, pseudo_label_round
from .scoring import (
    Cohort,
    NormConfig,
    TrialScore,
    calibrate,
    fuse,
    normalize_trials,
    score_trials,
)
from .timeline import PosteriorTrack, Segment, SmoothingConfig, apply_overlap, smooth_posteriors, uniform_segment


class SegmentRecord(NamedTuple):
    """A segment with the archive id its embedding is stored under."""

    segment_id: str
    recording: str
    start: float
    end: float


@dataclass(frozen=True)
class PipelineConfig:
    """All tunable pipeline constants; the seed is mandatory."""

    seed: int
    win: float = 1.5
    hop: float = 0.75
    on_threshold: float = 0.5
    off_threshold: float = 0.5
    min_speech: float = 0.2
    min_gap: float = 0.1
    spectral_threshold: float = 0.99
    k_max: int = 20
    overlap_extend: float = 0.15
    kmeans_k: int = 6000
    purify_rounds: tuple = ((0.6, 8), (0.4, 10))
    asnorm_top: int = 300
    fusion_weights: tuple = (1.0, 1.2, 1.0)
    p_target: float = 0.05
    collar: float = 0.25

    def __post_init__(self):
        if not (self.win >= self.hop > 0):
            raise ValueError("need win >= hop > 0")
        if not (0 < self.spectral_threshold):
            raise ValueError("spectral_threshold must be > 0")
        if self.k_max < 1 or self.kmeans_k < 1 or self.asnorm_top < 1:
            raise ValueError("counts must be >= 1")
        if self.overlap_extend < 0 or self.collar < 0:
            raise ValueError("durations must be >= 0")
        # construct these eagerly so bad values fail here, not mid-pipeline
        SmoothingConfig(
            self.on_threshold, self.off_threshold, self.min_speech, self.min_gap
        )
        DcfConfig(p_target=self.p_target)
        for p, s in self.purify_rounds:
            PurifyConfig(p, int(s))

    def smoothing(self) -> SmoothingConfig:
        return SmoothingConfig(
            self.on_threshold, self.off_threshold, self.min_speech, self.min_gap
        )


_CONFIG_FIELD_TYPES = {
    "seed": int,
    "win": float,
    "hop": float,
    "on_threshold": float,
    "off_threshold": float,
    "min_speech": float,
    "min_gap": float,
    "spectral_threshold": float,
    "k_max": int,
    "overlap_extend": float,
    "kmeans_k": int,
    "asnorm_top": int,
    "p_target": float,
    "collar": float,
}


def parse_config(text: str, base: Optional[PipelineConfig] = None) -> PipelineConfig:
    """Build a config from ``key=value`` lines over defaults (or ``base``).

    ``purify_rounds`` takes ``p:S`` pairs separated by commas and
    ``fusion_weights`` comma-separated floats; ``#`` starts a comment.
    """
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {line!r}", line=lineno)
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _CONFIG_FIELD_TYPES:
            try:
                overrides[key] = _CONFIG_FIELD_TYPES[key](value)
            except ValueError:
                raise ParseError(f"bad value for {key}: {value!r}", line=lineno) from None
        elif key == "purify_rounds":
            overrides[key] = parse_round_spec(value)
        elif key == "fusion_weights":
            overrides[key] = tuple(float(v) for v in value.split(",") if v)
        else:
            raise ParseError(f"unknown config key {key!r}", line=lineno)
    if base is None:
        if "seed" not in overrides:
            raise ParseError("config must set a seed")
        return PipelineConfig(**overrides)
    return replace(base, **overrides)


def parse_round_spec(value: str) -> tuple:
    """Parse per-round purification settings like ``0.6:8,0.4:10``."""
    rounds = []
    for part in value.split(","):
        part = part.strip()
        if not part:
            continue
        p, _, s = part.partition(":")
        rounds.append((float(p), int(s)))
    if not rounds:
        raise ParseError(f"no rounds in {value!r}")
    return tuple(rounds)


# --- segments / posteriors file formats ---------------------------------------


def segment_id(recording: str, start: float, end: float) -> str:
    """Deterministic archive id for a segment: recording + millisecond bounds."""
    return f"{recording}-{int(round(start * 1000)):08d}-{int(round(end * 1000)):08d}"


def write_segments(segments: Sequence[SegmentRecord]) -> str:
    return "".join(
        f"{s.segment_id} {s.recording} {s.start:.3f} {s.end:.3f}\n" for s in segments
    )


def parse_segments(text: str) -> list[SegmentRecord]:
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields_ = line.split()
        if len(fields_) != 4:
            raise ParseError(
                f"expected 'id recording start end', got {line[:60]!r}", line=lineno
            )
        try:
            start, end = float(fields_[2]), float(fields_[3])
        except ValueError:
            raise ParseError(f"bad segment times in {line[:60]!r}", line=lineno) from None
        if not (0 <= start < end):
            raise ParseError(f"bad segment range [{start}, {end}]", line=lineno)
        out.append(SegmentRecord(fields_[0], fields_[1], start, end))
    return out


def parse_posteriors(text: str) -> list[PosteriorTrack]:
    """One recording per line: ``recording frame_period p1 p2 ...``."""
    tracks = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields_ = line.split()
        if len(fields_) < 3:
            raise ParseError(
                "expected 'recording frame_period p...'", line=lineno
            )
        try:
            fp = float(fields_[1])
            values = np.array([float(v) for v in fields_[2:]])
        except ValueError:
            raise ParseError("bad posterior values", line=lineno) from None
        tracks.append(PosteriorTrack(fields_[0], values, fp))
    return tracks


def segment_posteriors(
    tracks: Sequence[PosteriorTrack], config: PipelineConfig
) -> list[SegmentRecord]:
    """VAD-smooth posterior tracks and slide windows over the speech."""
    records = []
    for track in sorted(tracks, key=lambda t: t.recording):
        speech = smooth_posteriors(track, config.smoothing())
        for seg in uniform_segment(speech, config.win, config.hop):
            records.append(
                SegmentRecord(
                    segment_id(seg.recording, seg.start, seg.end),
                    seg.recording,
                    seg.start,
                    seg.end,
                )
            )
    return records


# --- diarization pipeline -------------------------------------------------------


def _stitch_turns(segments, labels, hop: float) -> list[Turn]:
    """Merge same-label windows into turns, splitting overlaps at midpoints.

    Adjacent same-label windows (gap <= hop/2) merge; at label changes the
    boundary is the midpoint of the overlapped region of the two windows.
    """
    turns = []
    rec = segments[0].recording
    cur_label = labels[0]
    cur_start, cur_end = segments[0].start, segments[0].end
    for seg, lab in zip(segments[1:], labels[1:]):
        gap = seg.start - cur_end
        if lab == cur_label and gap <= hop / 2:
            cur_end = max(cur_end, seg.end)
            continue
        if lab != cur_label and gap < 0:
            boundary = (seg.start + cur_end) / 2.0
            turns.append(Turn(rec, cur_start, boundary - cur_start, _spk(cur_label)))
            cur_label, cur_start, cur_end = lab, boundary, seg.end
        else:
            turns.append(Turn(rec, cur_start, cur_end - cur_start, _spk(cur_label)))
            cur_label, cur_start, cur_end = lab, seg.start, seg.end
    turns.append(Turn(rec, cur_start, cur_end - cur_start, _spk(cur_label)))
    return turns


def _spk(label: int) -> str:
    return f"spk{int(label):02d}"


def _diarize_recording(segments, embeddings, config, k, scorer):
    segments = sorted(segments, key=lambda s: (s.start, s.end, s.segment_id))
    vectors = []
    for s in segments:
        if s.segment_id not in embeddings:
            raise StageError(
                "embedding-lookup", f"no embedding for segment '{s.segment_id}'"
            )
        vectors.append(embeddings.vector(s.segment_id))
    subset = EmbeddingSet(
        ids=[s.segment_id for s in segments], vectors=np.stack(vectors)
    )

    if len(segments) == 1:
        labels = [0]
    else:
        try:
            affinity = refine_affinity(assemble_affinity(subset, scorer))
        except ToolkitError as exc:
            raise StageError("affinity", exc) from exc
        try:
            assignment = spectral_cluster(
                affinity,
                k=k,
                seed=config.seed,
                threshold=config.spectral_threshold,
                k_max=config.k_max,
            )
        except ToolkitError as exc:
            raise StageError("clustering", exc) from exc
        labels = [assignment.labels_by_id()[s.segment_id] for s in segments]

    plain = [Segment(s.recording, s.start, s.end) for s in segments]
    return _stitch_turns(plain, labels, config.hop)


def run_diarize(
    embeddings: EmbeddingSet,
    segments: Sequence[SegmentRecord],
    config: PipelineConfig,
    k: Optional[int] = None,
    overlap_segments: Sequence[Segment] = (),
    scorer=cosine_scorer,
    workers: int = 1,
) -> str:
    """Cluster per-segment embeddings into speaker turns; returns RTTM text.

    Deterministic given the seed: recordings are diarized independently (in a
    worker pool) and emitted in sorted recording order.
    """
    by_rec: dict[str, list[SegmentRecord]] = {}
    for s in segments:
        by_rec.setdefault(s.recording, []).append(s)
    if not by_rec:
        return ""

    def job(rec):
        return rec, _diarize_recording(by_rec[rec], embeddings, config, k, scorer)

    results: dict[str, list[Turn]] = {}
    if workers <= 1:
        for rec in sorted(by_rec):
            results[rec] = job(rec)[1]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for rec, turns in pool.map(job, sorted(by_rec)):
                results[rec] = turns

    all_turns: list[Turn] = []
    for rec in sorted(results):
        turns = results[rec]
        if overlap_segments:
            rec_overlaps = [o for o in overlap_segments if o.recording == rec]
            if rec_overlaps:
                turns = apply_overlap(turns, rec_overlaps, config.overlap_extend)
        all_turns.extend(turns)
    return write_rttm(all_turns)


# --- pseudo-label pipeline --------------------------------------------------------


def run_pseudo_label(
    archives: Sequence[EmbeddingSet],
    manifest: Manifest,
    config: PipelineConfig,
    k: Optional[int] = None,
) -> list[tuple[dict[str, int], RoundStats]]:
    """Run the configured purification rounds, one embedding archive per round.

    Each round's archive is meant to come from a network retrained on the
    previous round's labels; retraining happens outside this toolkit.
    """
    rounds = config.purify_rounds
    if not rounds:
        raise ValueError("at least one purification round is required")
    if len(archives) != len(rounds):
        raise ValueError(
            f"{len(archives)} archives for {len(rounds)} configured rounds"
        )
    k = k if k is not None else config.kmeans_k
    results = []
    for i, (archive, (p, s)) in enumerate(zip(archives, rounds), start=1):
        labels, stats = pseudo_label_round(
            archive,
            manifest,
            k=k,
            config=PurifyConfig(p, int(s)),
            seed=config.seed,
            round_index=i,
        )
        results.append((labels, stats))
    return results


# --- verification pipeline ----------------------------------------------------------


def run_verify(
    trials: Sequence[Trial],
    system_archives: Sequence[EmbeddingSet],
    cohorts: Sequence[Cohort] = (),
    config: Optional[PipelineConfig] = None,
    weights: Optional[Sequence[float]] = None,
    do_calibrate: bool = True,
):
    """Score, normalize, fuse, and evaluate a verification trial list.

    Per system: cosine scoring then AS-Norm against that system's cohort
    (when cohorts are given, one per system or one shared). Systems are then
    fused with the configured weights. When trial labels are present the
    fused scores are affine-logistic calibrated and EER / minDCF reported.

    Returns ``(fused_scores, metrics_dict)`` where ``fused_scores`` is a list
    of TrialScore.
    """
    if config is None:
        config = PipelineConfig(seed=0)
    if not system_archives:
        raise ValueError("at least one system archive is required")
    if weights is None:
        weights = config.fusion_weights[: len(system_archives)]
    if len(weights) != len(system_archives):
        raise ValueError(
            f"{len(weights)} weights for {len(system_archives)} systems"
        )
    if cohorts and len(cohorts) not in (1, len(system_archives)):
        raise ValueError("need one cohort, or one per system")

    per_system: list[list[TrialScore]] = []
    for idx, archive in enumerate(system_archives):
        try:
            scored = score_trials(trials, archive)
            if cohorts:
                cohort = cohorts[idx] if len(cohorts) > 1 else cohorts[0]
                scored = normalize_trials(
                    scored, archive, cohort, NormConfig(config.asnorm_top)
                )
        except (ToolkitError, LookupError, ValueError) as exc:
            raise StageError(f"system-{idx}", exc) from exc
        per_system.append(scored)

    fused_values = fuse([[t.score for t in s] for s in per_system], list(weights))
    fused = [
        TrialScore(t.enroll, t.test, float(v), t.label)
        for t, v in zip(per_system[0], fused_values)
    ]

    metrics: dict[str, float] = {}
    labels = [t.label for t in fused]
    if all(l is not None for l in labels) and fused:
        scores = [t.score for t in fused]
        flags = [bool(l) for l in labels]
        if do_calibrate:
            a, b = calibrate(scores, flags)
            metrics["calib_a"], metrics["calib_b"] = a, b
            fused = [
                TrialScore(t.enroll, t.test, a * t.score + b, t.label) for t in fused
            ]
            scores = [t.score for t in fused]
        metrics["eer"] = eer(scores, flags)
        metrics["min_dcf"] = min_dcf(
            scores, flags, DcfConfig(p_target=config.p_target)
        )
    return fused, metrics
