"""Affinity assembly, refinement, spectral clustering, and seeded k-means.

All operations are pure given the seed, so per-recording clustering tasks can
run independently and still reproduce bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional, Sequence

import numpy as np

from .corpus import EmbeddingSet
from .errors import DegenerateRowError, KError, NumericalError, ScorerError

# A PairScorer maps (anchor, sequence of n embeddings) -> n affinity scores.
# This mirrors the replicated-anchor input layout of a learned row scorer;
# cosine is the shipped implementation.
PairScorer = Callable[[np.ndarray, np.ndarray], np.ndarray]

_SYM_TOL = 1e-9

# below this many seed combinations, k-means tries every one (exact on
# tiny instances); above, greedy k-means++ from the seeded RNG
_EXHAUSTIVE_SEED_LIMIT = 600
_PP_CANDIDATES = 4


@dataclass
class AffinityMatrix:
    """Pairwise similarity scores for one recording's segments."""

    ids: list[str]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n = len(self.ids)
        if self.values.shape != (n, n):
            raise ValueError(
                f"{n} ids but value matrix of shape {self.values.shape}"
            )
        if not np.isfinite(self.values).all():
            raise ValueError("affinity values must be finite")

    @property
    def n(self) -> int:
        return len(self.ids)

    def is_refined(self) -> bool:
        v = self.values
        return bool(
            np.abs(v - v.T).max(initial=0.0) <= _SYM_TOL
            and np.allclose(np.diag(v), 1.0)
            and v.min(initial=1.0) >= 0.0
            and v.max(initial=0.0) <= 1.0
        )


@dataclass
class ClusterAssignment:
    """Cluster labels plus centroids and per-item squared distances."""

    ids: list[str]
    labels: np.ndarray  # (N,) int
    centroids: np.ndarray  # (k, D)
    distances: np.ndarray  # (N,) squared distance to own centroid

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.distances = np.asarray(self.distances, dtype=np.float64)
        k = self.centroids.shape[0]
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= k):
            raise ValueError("labels out of range for centroid count")
        if np.any(self.distances < 0):
            raise ValueError("distances must be non-negative")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def labels_by_id(self) -> dict[str, int]:
        return {u: int(c) for u, c in zip(self.ids, self.labels)}


def cosine_scorer(anchor: np.ndarray, sequence: np.ndarray) -> np.ndarray:
    """Built-in pair scorer: cosine similarity of the anchor to each element."""
    seq = np.asarray(sequence, dtype=np.float64)
    a = np.asarray(anchor, dtype=np.float64)
    norms = np.linalg.norm(seq, axis=1)
    na = np.linalg.norm(a)
    if na == 0 or np.any(norms == 0):
        raise ValueError("cosine scorer requires non-zero embeddings")
    return (seq @ a) / (norms * na)


def assemble_affinity(
    embeddings: EmbeddingSet, scorer: PairScorer = cosine_scorer
) -> AffinityMatrix:
    """Build the n x n affinity by scoring each anchor against the sequence."""
    n = len(embeddings)
    if n < 2:
        raise ValueError(f"need at least 2 embeddings, got {n}")
    x = embeddings.vectors.astype(np.float64)
    rows = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        row = np.asarray(scorer(x[i], x), dtype=np.float64).ravel()
        if row.shape[0] != n:
            raise ScorerError(
                f"scorer returned {row.shape[0]} scores for row {i}, expected {n}"
            )
        if not np.isfinite(row).all():
            raise ScorerError(f"scorer returned non-finite scores for row {i}")
        rows[i] = row
    return AffinityMatrix(list(embeddings.ids), rows)


def refine_affinity(affinity: AffinityMatrix) -> AffinityMatrix:
    """Symmetrize and normalize an affinity matrix.

    Steps: unit diagonal, elementwise-max symmetrization, row-max
    normalization, then a final max symmetrization. Negative scores are
    clamped to zero and the diagonal re-pinned so the refined matrix always
    lands in [0, 1] regardless of the scorer's range.
    """
    y = affinity.values.copy()
    np.fill_diagonal(y, 1.0)
    y = np.maximum(y, y.T)
    y = np.maximum(y, 0.0)
    row_max = y.max(axis=1)
    if np.any(row_max <= 0):
        bad = int(np.argmax(row_max <= 0))
        raise DegenerateRowError(f"row {bad} has no positive affinity")
    r = y / row_max[:, None]
    out = np.maximum(r, r.T)
    np.fill_diagonal(out, 1.0)
    return AffinityMatrix(list(affinity.ids), out)


def _sym_normalized(values: np.ndarray) -> np.ndarray:
    d = values.sum(axis=1)
    d = np.where(d <= 0, 1.0, d)
    inv_sqrt = 1.0 / np.sqrt(d)
    return values * np.outer(inv_sqrt, inv_sqrt)


def estimate_speaker_count(
    affinity: AffinityMatrix, threshold: float = 0.99, k_max: int = 20
) -> int:
    """Count near-disconnected strong-affinity groups in a refined matrix.

    Entries at or above the threshold form a strong-link graph (self-loops
    always kept); the estimate is the number of eigenvalues of that graph's
    symmetrically normalized adjacency strictly above the same threshold,
    which for block-structured affinities equals the number of speaker
    components. Clamped to [1, k_max].
    """
    g = (affinity.values >= threshold).astype(np.float64)
    np.fill_diagonal(g, 1.0)
    m = _sym_normalized(np.maximum(g, g.T))
    eigvals = np.linalg.eigvalsh(m)
    if not np.isfinite(eigvals).all():
        raise NumericalError("eigensolve produced non-finite eigenvalues")
    k = int((eigvals > threshold).sum())
    return max(1, min(k, k_max))


def spectral_cluster(
    affinity: AffinityMatrix,
    k: Optional[int] = None,
    seed: int = 0,
    threshold: float = 0.99,
    k_max: int = 20,
) -> ClusterAssignment:
    """Cluster segments in the leading-eigenvector space of the affinity.

    Rows of the k leading eigenvectors of the symmetrically normalized
    affinity (descending eigenvalue) are L2-normalized and clustered with
    seeded k-means. ``k`` defaults to :func:`estimate_speaker_count`.
    """
    n = affinity.n
    if k is None:
        k = estimate_speaker_count(affinity, threshold=threshold, k_max=k_max)
    if not (1 <= k <= n):
        raise KError(f"k={k} out of range for {n} segments")
    m = _sym_normalized(affinity.values)
    eigvals, eigvecs = np.linalg.eigh(m)
    if not (np.isfinite(eigvals).all() and np.isfinite(eigvecs).all()):
        raise NumericalError("eigensolve produced non-finite output")
    spectral = eigvecs[:, ::-1][:, :k]  # descending eigenvalue order
    norms = np.linalg.norm(spectral, axis=1)
    nonzero = norms > 0
    spectral = spectral.copy()
    spectral[nonzero] /= norms[nonzero, None]
    km = kmeans(spectral, k, seed)
    return ClusterAssignment(
        list(affinity.ids), km.labels, km.centroids, km.distances
    )


def format_affinity(affinity: AffinityMatrix) -> str:
    """Render the matrix as plain text, one row per line, 9 significant digits."""
    return "\n".join(
        " ".join(f"{v:.9g}" for v in row) for row in affinity.values
    ) + "\n"


# --- k-means -----------------------------------------------------------------


def _lloyd(points, centers, k, max_iter, tol):
    n = points.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        own = d2[np.arange(n), labels].copy()
        new_centers = centers.copy()
        for c in range(k):
            mask = labels == c
            if mask.any():
                new_centers[c] = points[mask].mean(axis=0)
            else:
                # repair: steal the point farthest from its own centroid
                far = int(own.argmax())
                new_centers[c] = points[far]
                labels[far] = c
                own[far] = -np.inf  # never steal the same point twice
        shift = np.abs(new_centers - centers).max()
        centers = new_centers
        if shift < tol:
            break
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    dist = d2[np.arange(n), labels]
    return labels, centers, dist


def _kmeanspp_centers(points, k, rng):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[rng.integers(n)]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    n_candidates = min(n, _PP_CANDIDATES)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(n))
            centers[c] = points[idx]
            continue
        cand = rng.choice(n, size=n_candidates, p=closest / total, replace=True)
        best_pot = np.inf
        best = cand[0]
        for j in cand:
            pot = np.minimum(closest, ((points - points[j]) ** 2).sum(axis=1)).sum()
            if pot < best_pot:
                best_pot, best = pot, j
        centers[c] = points[best]
        closest = np.minimum(closest, ((points - centers[c]) ** 2).sum(axis=1))
    return centers


def kmeans(
    points,
    k: int,
    seed: int,
    max_iter: int = 300,
    tol: float = 1e-6,
    ids: Optional[Sequence[str]] = None,
) -> ClusterAssignment:
    """Seeded k-means with k-means++ initialization and Lloyd iterations.

    Tiny instances (few possible seed subsets) are solved by trying every
    k-subset of points as initial centers, which makes the result match the
    optimal partition; larger instances use greedy k-means++ from the seeded
    RNG. Empty clusters are repaired by stealing the farthest point.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if k <= 0:
        raise KError(f"k must be positive, got {k}")
    if k > n:
        raise KError(f"k={k} exceeds point count {n}")

    best = None
    if math.comb(n, k) <= _EXHAUSTIVE_SEED_LIMIT:
        seedings = (points[list(combo)].copy() for combo in combinations(range(n), k))
    else:
        rng = np.random.default_rng(seed)
        seedings = (_kmeanspp_centers(points, k, rng) for _ in range(1))
    for centers in seedings:
        labels, final_centers, dist = _lloyd(points, centers, k, max_iter, tol)
        total = dist.sum()
        if best is None or total < best[0]:
            best = (total, labels, final_centers, dist)

    _, labels, centers, dist = best
    if ids is None:
        ids = [str(i) for i in range(n)]
    return ClusterAssignment(list(ids), labels, centers, dist)
