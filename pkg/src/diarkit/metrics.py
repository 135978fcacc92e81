"""Evaluation metrics: EER, minDCF, and collar-based DER / JER.

Diarization scoring runs on integer microsecond ticks so interval unions and
collar exclusions stay exact; per-recording components are computed
independently and summed.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corpus import Turn
from .errors import LabelError, UndefinedError

_US = 1_000_000


@dataclass(frozen=True)
class DcfConfig:
    """Detection cost operating point."""

    p_target: float = 0.05
    c_miss: float = 1.0
    c_fa: float = 1.0

    def __post_init__(self):
        if not (0 < self.p_target < 1):
            raise ValueError("p_target must lie in (0, 1)")
        if self.c_miss <= 0 or self.c_fa <= 0:
            raise ValueError("costs must be > 0")


@dataclass(frozen=True)
class DerBreakdown:
    """DER components in seconds of scored reference time."""

    missed: float
    false_alarm: float
    confusion: float
    scored: float

    @property
    def der(self) -> float:
        return (self.missed + self.false_alarm + self.confusion) / self.scored


def _split_scores(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must align")
    targets = np.sort(scores[labels])
    nontargets = np.sort(scores[~labels])
    if targets.size == 0 or nontargets.size == 0:
        raise LabelError("need both target and nontarget scores")
    return targets, nontargets


def _roc_points(targets, nontargets, thresholds):
    # decision rule: accept when score >= threshold
    frr = np.searchsorted(targets, thresholds, side="left") / targets.size
    far = 1.0 - np.searchsorted(nontargets, thresholds, side="left") / nontargets.size
    return frr, far


def eer(scores, labels) -> float:
    """Equal error rate with linear interpolation between operating points.

    Sweeps every distinct score as an accept-if-greater-or-equal threshold;
    when no threshold gives FRR == FAR exactly, the crossing is interpolated
    linearly between the two adjacent points.
    """
    targets, nontargets = _split_scores(scores, labels)
    uniq = np.unique(np.concatenate([targets, nontargets]))
    thresholds = np.concatenate([uniq, [uniq[-1] + 1.0]])
    frr, far = _roc_points(targets, nontargets, thresholds)
    # prepend the accept-everything point
    frr = np.concatenate([[0.0], frr])
    far = np.concatenate([[1.0], far])
    diff = frr - far  # non-decreasing along the sweep
    i = int(np.argmax(diff >= 0))
    if diff[i] == 0:
        return float(frr[i])
    alpha = -diff[i - 1] / (diff[i] - diff[i - 1])
    return float(frr[i - 1] + alpha * (frr[i] - frr[i - 1]))


def min_dcf(scores, labels, config: DcfConfig = DcfConfig()) -> float:
    """Minimum normalized detection cost over all thresholds.

    Includes the accept-all and reject-all operating points; normalized by
    the cheaper trivial system min(c_miss * p_target, c_fa * (1 - p_target)).
    """
    targets, nontargets = _split_scores(scores, labels)
    uniq = np.unique(np.concatenate([targets, nontargets]))
    thresholds = np.concatenate([[uniq[0] - 1.0], uniq, [uniq[-1] + 1.0]])
    p_miss, p_fa = _roc_points(targets, nontargets, thresholds)
    cost = (
        config.c_miss * config.p_target * p_miss
        + config.c_fa * (1.0 - config.p_target) * p_fa
    )
    floor = min(config.c_miss * config.p_target, config.c_fa * (1.0 - config.p_target))
    return float(cost.min() / floor)


# --- diarization scoring -------------------------------------------------------


def _us(t: float) -> int:
    return int(round(t * _US))


def _merge(intervals):
    merged = []
    for a, b in sorted(intervals):
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [(a, b) for a, b in merged if b > a]


def _speaker_intervals(turns):
    by_spk: dict[str, list] = {}
    for t in turns:
        by_spk.setdefault(t.speaker, []).append((_us(t.onset), _us(t.offset)))
    return {spk: _merge(ivs) for spk, ivs in by_spk.items()}


def _cells_and_sets(ref_spk, hyp_spk, collar_us):
    """Elementary scored cells with their active reference/hypothesis sets."""
    excluded = _merge(
        (b - collar_us, b + collar_us)
        for ivs in ref_spk.values()
        for a0, a1 in ivs
        for b in (a0, a1)
        if collar_us > 0
    )
    bounds = set()
    for ivs in list(ref_spk.values()) + list(hyp_spk.values()) + [excluded]:
        for a, b in ivs:
            bounds.add(a)
            bounds.add(b)
    edges = sorted(bounds)
    n_cells = len(edges) - 1
    if n_cells < 1:
        return [], [], []

    def mark(ivs):
        active = [False] * n_cells
        for a, b in ivs:
            lo = bisect_left(edges, a)
            hi = bisect_right(edges, b) - 1
            for c in range(lo, hi):
                active[c] = True
        return active

    in_excl = mark(excluded)
    ref_active = {spk: mark(ivs) for spk, ivs in ref_spk.items()}
    hyp_active = {spk: mark(ivs) for spk, ivs in hyp_spk.items()}

    cells = []
    for c in range(n_cells):
        if in_excl[c]:
            continue
        length = edges[c + 1] - edges[c]
        r = frozenset(s for s, act in ref_active.items() if act[c])
        h = frozenset(s for s, act in hyp_active.items() if act[c])
        if r or h:
            cells.append((length, r, h))
    return cells, sorted(ref_spk), sorted(hyp_spk)


def _score_recording(ref_turns, hyp_turns, collar_us):
    ref_spk = _speaker_intervals(ref_turns)
    hyp_spk = _speaker_intervals(hyp_turns)
    cells, ref_names, hyp_names = _cells_and_sets(ref_spk, hyp_spk, collar_us)

    r_idx = {s: i for i, s in enumerate(ref_names)}
    h_idx = {s: i for i, s in enumerate(hyp_names)}
    overlap = np.zeros((len(ref_names), len(hyp_names)), dtype=np.int64)
    for length, r, h in cells:
        for rs in r:
            for hs in h:
                overlap[r_idx[rs], h_idx[hs]] += length

    mapping: dict[str, str] = {}
    if overlap.size:
        rows, cols = linear_sum_assignment(overlap, maximize=True)
        mapping = {ref_names[i]: hyp_names[j] for i, j in zip(rows, cols)}

    scored = missed = false_alarm = confusion = 0
    for length, r, h in cells:
        n_ref, n_hyp = len(r), len(h)
        n_correct = sum(1 for rs in r if mapping.get(rs) in h)
        scored += length * n_ref
        missed += length * max(0, n_ref - n_hyp)
        false_alarm += length * max(0, n_hyp - n_ref)
        confusion += length * (min(n_ref, n_hyp) - n_correct)

    # per-speaker scored durations for JER
    ref_dur = {s: 0 for s in ref_names}
    hyp_dur = {s: 0 for s in hyp_names}
    for length, r, h in cells:
        for rs in r:
            ref_dur[rs] += length
        for hs in h:
            hyp_dur[hs] += length

    speaker_errors = []
    for rs in ref_names:
        hs = mapping.get(rs)
        inter = overlap[r_idx[rs], h_idx[hs]] if hs is not None else 0
        union = ref_dur[rs] + (hyp_dur[hs] if hs is not None else 0) - inter
        if hs is None:
            speaker_errors.append(1.0)
        elif union == 0:
            speaker_errors.append(0.0)
        else:
            speaker_errors.append(1.0 - inter / union)

    return scored, missed, false_alarm, confusion, speaker_errors


def _group_by_recording(turns):
    grouped: dict[str, list[Turn]] = {}
    for t in turns:
        grouped.setdefault(t.recording, []).append(t)
    return grouped


def _score_all(reference, hypothesis, collar):
    if collar < 0:
        raise ValueError("collar must be >= 0")
    collar_us = _us(collar)
    refs = _group_by_recording(reference)
    hyps = _group_by_recording(hypothesis)
    totals = np.zeros(4, dtype=np.int64)
    errors: list[float] = []
    for rec in sorted(set(refs) | set(hyps)):
        parts = _score_recording(refs.get(rec, []), hyps.get(rec, []), collar_us)
        totals += np.array(parts[:4], dtype=np.int64)
        errors.extend(parts[4])
    if totals[0] == 0:
        raise UndefinedError("no scored reference speech (empty or all in collars)")
    return totals, errors


def der(
    reference: Sequence[Turn], hypothesis: Sequence[Turn], collar: float = 0.25
) -> DerBreakdown:
    """Diarization error rate with collar exclusion and optimal speaker mapping.

    A collar around every reference turn boundary is excluded from scoring;
    overlapped regions are scored with full multiplicity. The one-to-one
    reference-to-hypothesis speaker mapping maximizing total overlap is solved
    exactly per recording.
    """
    totals, _ = _score_all(reference, hypothesis, collar)
    scored, missed, fa, conf = (int(v) for v in totals)
    return DerBreakdown(
        missed=missed / _US,
        false_alarm=fa / _US,
        confusion=conf / _US,
        scored=scored / _US,
    )


def jer(
    reference: Sequence[Turn], hypothesis: Sequence[Turn], collar: float = 0.25
) -> float:
    """Jaccard error rate: mean per-reference-speaker error under the DER mapping.

    Each reference speaker scores 1 - |intersection| / |union| against its
    mapped hypothesis speaker over scored time; unmapped speakers score 1.
    """
    _, errors = _score_all(reference, hypothesis, collar)
    return float(np.mean(errors))
