"""Verification back-end: trial scoring, AS-Norm, fusion, calibration.

Trial scoring and normalization are embarrassingly parallel over trials;
everything here is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .corpus import EmbeddingSet, Trial
from .embedmath import length_normalize
from .errors import (
    AlignmentError,
    CohortSizeError,
    DegenerateCohortError,
    LabelError,
    MapError,
)

CALIB_SLOPE_MIN = 1e-3
CALIB_SLOPE_MAX = 1e3


@dataclass(frozen=True)
class TrialScore:
    enroll: str
    test: str
    score: float
    label: Optional[bool] = None  # True = target

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError(f"non-finite score for ({self.enroll}, {self.test})")


@dataclass
class Cohort:
    """One averaged, length-normalized embedding per training speaker."""

    speakers: list[str]
    vectors: np.ndarray  # (n_speakers, D)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if len(self.speakers) != self.vectors.shape[0]:
            raise ValueError("one vector per cohort speaker required")
        if self.vectors.size and not np.isfinite(self.vectors).all():
            raise ValueError("cohort vectors must be finite")

    def __len__(self) -> int:
        return len(self.speakers)


@dataclass(frozen=True)
class NormConfig:
    """AS-Norm settings: how many closest cohort scores to keep per side."""

    top_size: int = 300

    def __post_init__(self):
        if self.top_size < 1:
            raise ValueError("top_size must be >= 1")


def score_trials(
    trials: Sequence[Trial], embeddings: EmbeddingSet
) -> list[TrialScore]:
    """Cosine-score each trial, preserving order and labels."""
    vecs = embeddings.vectors.astype(np.float64)
    norms = np.linalg.norm(vecs, axis=1)
    unit = vecs / np.where(norms == 0, 1.0, norms)[:, None]
    index = {u: i for i, u in enumerate(embeddings.ids)}

    out = []
    for t in trials:
        for side in (t.enroll, t.test):
            if side not in index:
                raise LookupError(f"no embedding for id '{side}'")
        e, s = index[t.enroll], index[t.test]
        if norms[e] == 0 or norms[s] == 0:
            raise ValueError(f"zero embedding in trial ({t.enroll}, {t.test})")
        out.append(TrialScore(t.enroll, t.test, float(unit[e] @ unit[s]), t.label))
    return out


def build_cohort(embeddings: EmbeddingSet, speaker_map: dict[str, str]) -> Cohort:
    """Average length-normalized utterance embeddings per training speaker.

    ``speaker_map`` maps every utterance id in the set to its speaker; the
    per-speaker mean is not renormalized.
    """
    groups: dict[str, list[np.ndarray]] = {}
    order: list[str] = []
    for utt, vec in zip(embeddings.ids, embeddings.vectors):
        if utt not in speaker_map:
            raise MapError(f"utterance '{utt}' has no speaker mapping")
        spk = speaker_map[utt]
        if spk not in groups:
            groups[spk] = []
            order.append(spk)
        groups[spk].append(length_normalize(vec))

    vectors = np.empty((len(order), embeddings.dim), dtype=np.float64)
    for i, spk in enumerate(order):
        if not groups[spk]:
            raise MapError(f"speaker '{spk}' has no utterances")
        vectors[i] = np.mean(groups[spk], axis=0)
    return Cohort(order, vectors)


def cohort_scores(embedding, cohort: Cohort) -> np.ndarray:
    """Cosine scores of one embedding against every cohort speaker."""
    v = length_normalize(embedding)
    norms = np.linalg.norm(cohort.vectors, axis=1)
    if np.any(norms == 0):
        raise ValueError("cohort contains a zero vector")
    return (cohort.vectors @ v) / norms


def _top_stats(scores, top_size: int, side: str):
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size < top_size:
        raise CohortSizeError(
            f"{side} cohort has {scores.size} scores, need at least {top_size}"
        )
    top = np.sort(scores)[::-1][:top_size]
    mu = top.mean()
    sigma = top.std()  # population std
    if sigma <= 0:
        raise DegenerateCohortError(f"{side} top-{top_size} scores have zero std")
    return mu, sigma


def as_norm(
    score: float,
    enroll_cohort_scores,
    test_cohort_scores,
    config: NormConfig = NormConfig(),
) -> float:
    """Adaptive symmetric score normalization.

    Z-normalizes the raw score against the statistics of the X most positive
    cohort scores on each side and averages the two.
    """
    mu_e, sd_e = _top_stats(enroll_cohort_scores, config.top_size, "enroll")
    mu_t, sd_t = _top_stats(test_cohort_scores, config.top_size, "test")
    return 0.5 * ((score - mu_e) / sd_e + (score - mu_t) / sd_t)


def normalize_trials(
    scored: Sequence[TrialScore],
    embeddings: EmbeddingSet,
    cohort: Cohort,
    config: NormConfig = NormConfig(),
) -> list[TrialScore]:
    """AS-Norm a scored trial list, caching per-utterance cohort statistics."""
    stats_cache: dict[str, tuple[float, float]] = {}

    def stats_for(utt_id, side):
        if utt_id not in stats_cache:
            raw = cohort_scores(embeddings.vector(utt_id), cohort)
            stats_cache[utt_id] = _top_stats(raw, config.top_size, side)
        return stats_cache[utt_id]

    out = []
    for t in scored:
        mu_e, sd_e = stats_for(t.enroll, "enroll")
        mu_t, sd_t = stats_for(t.test, "test")
        z = 0.5 * ((t.score - mu_e) / sd_e + (t.score - mu_t) / sd_t)
        out.append(TrialScore(t.enroll, t.test, z, t.label))
    return out


def fuse(score_lists: Sequence[Sequence[float]], weights: Sequence[float]):
    """Weighted sum of aligned per-system score lists (no weight normalization)."""
    if len(score_lists) != len(weights):
        raise AlignmentError(
            f"{len(score_lists)} score lists for {len(weights)} weights"
        )
    if not score_lists:
        raise AlignmentError("no score lists to fuse")
    n = len(score_lists[0])
    for i, scores in enumerate(score_lists):
        if len(scores) != n:
            raise AlignmentError(
                f"system {i} has {len(scores)} scores, expected {n}"
            )
    arrays = [np.asarray(s, dtype=np.float64) for s in score_lists]
    fused = np.zeros(n, dtype=np.float64)
    for w, arr in zip(weights, arrays):
        fused += float(w) * arr
    return fused


def _bce_loss(a, b, scores, y):
    z = a * scores + b
    # log(1 + exp(-z)) for y=1, log(1 + exp(z)) for y=0, stably
    return float(np.mean(np.logaddexp(0.0, np.where(y, -z, z))))


def calibrate(scores, labels, max_iter: int = 200) -> tuple[float, float]:
    """Fit affine logistic calibration a*s + b by full-batch Newton descent.

    Starts from (1, 0); each accepted step never increases the mean binary
    cross-entropy, and the slope is clamped to [1e-3, 1e3] so calibrated
    scores keep their ranking.
    """
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if y.all() or not y.any():
        raise LabelError("calibration needs both target and nontarget scores")

    a, b = 1.0, 0.0
    a = min(max(a, CALIB_SLOPE_MIN), CALIB_SLOPE_MAX)
    loss = _bce_loss(a, b, scores, y)
    n = scores.size
    for _ in range(max_iter):
        z = a * scores + b
        p = 1.0 / (1.0 + np.exp(-z))
        resid = p - y
        grad = np.array([resid @ scores, resid.sum()]) / n
        w = p * (1.0 - p)
        h11 = (w * scores * scores).sum() / n
        h12 = (w * scores).sum() / n
        h22 = w.sum() / n
        hess = np.array([[h11, h12], [h12, h22]])
        try:
            step = np.linalg.solve(hess + 1e-12 * np.eye(2), grad)
        except np.linalg.LinAlgError:
            step = grad
        # backtracking keeps the loss monotone even at the slope clamp
        t = 1.0
        improved = False
        for _ in range(50):
            na = min(max(a - t * step[0], CALIB_SLOPE_MIN), CALIB_SLOPE_MAX)
            nb = b - t * step[1]
            new_loss = _bce_loss(na, nb, scores, y)
            if new_loss <= loss:
                improved = new_loss < loss - 1e-15
                a, b, loss = na, nb, new_loss
                break
            t *= 0.5
        if not improved:
            break
    return float(a), float(b)


def write_scores(scored: Sequence[TrialScore]) -> str:
    """Score file format: ``enroll test score`` with 6-decimal scores."""
    return "".join(f"{t.enroll} {t.test} {t.score:.6f}\n" for t in scored)


def parse_scores(text: str) -> list[TrialScore]:
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        enroll, test, score = line.split()
        out.append(TrialScore(enroll, test, float(score)))
    return out
