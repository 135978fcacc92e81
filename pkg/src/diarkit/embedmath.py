"""Pure numeric kernels over embeddings and frame-feature matrices.

Everything here is stateless and reentrant; callers may evaluate batches in
parallel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BatchError, ShapeError, WeightError

STD_FLOOR = 1e-10
WEIGHT_TOL = 1e-9


@dataclass
class ContrastiveBatch:
    """B embedding pairs (two augmented views per utterance) plus temperature."""

    view_a: np.ndarray  # (B, D)
    view_b: np.ndarray  # (B, D)
    temperature: float = 0.1

    def __post_init__(self):
        self.view_a = np.asarray(self.view_a, dtype=np.float64)
        self.view_b = np.asarray(self.view_b, dtype=np.float64)
        if self.view_a.shape != self.view_b.shape or self.view_a.ndim != 2:
            raise ShapeError(
                f"views must be matching (B, D) arrays, got "
                f"{self.view_a.shape} and {self.view_b.shape}"
            )
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")

    @property
    def size(self) -> int:
        return self.view_a.shape[0]


def _as_frame_matrix(frames) -> np.ndarray:
    h = np.asarray(frames, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] < 1 or h.shape[1] < 1:
        raise ShapeError(f"expected a (T, D) frame matrix, got shape {h.shape}")
    if not np.isfinite(h).all():
        raise ValueError("frame matrix contains non-finite values")
    return h


def gsp_pool(frames) -> np.ndarray:
    """Global statistics pooling: per-dimension mean then population std.

    Returns a length-2D vector; stds are floored at 1e-10 so a single frame
    (zero variance) still yields a well-defined output.
    """
    h = _as_frame_matrix(frames)
    mean = h.mean(axis=0)
    var = np.maximum(h.var(axis=0), 0.0)
    std = np.maximum(np.sqrt(var), STD_FLOOR)
    return np.concatenate([mean, std])


def asp_pool(frames, weights) -> np.ndarray:
    """Attentive statistics pooling with externally supplied frame weights.

    mu_d = sum_t w_t h_td,  sigma_d = sqrt(max(sum_t w_t h_td^2 - mu_d^2, 0)),
    floored like gsp_pool. Weights must sum to 1 within 1e-9.
    """
    h = _as_frame_matrix(frames)
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape[0] != h.shape[0]:
        raise ShapeError(f"{w.shape[0]} weights for {h.shape[0]} frames")
    if np.any(w < 0):
        raise WeightError("attention weights must be non-negative")
    if abs(w.sum() - 1.0) > WEIGHT_TOL:
        raise WeightError(f"weights sum to {w.sum()!r}, expected 1")
    mean = w @ h
    second = w @ (h * h)
    var = np.maximum(second - mean * mean, 0.0)
    std = np.maximum(np.sqrt(var), STD_FLOOR)
    return np.concatenate([mean, std])


def length_normalize(v) -> np.ndarray:
    """Scale a vector to unit L2 norm."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("cannot length-normalize a zero vector")
    return v / norm


def cosine(a, b) -> float:
    """Cosine similarity of two equal-dimension non-zero vectors."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity of a zero vector is undefined")
    return float(np.dot(a, b) / (na * nb))


def nt_xent_loss(batch: ContrastiveBatch):
    """Normalized-temperature cross-entropy loss over a two-view batch.

    Each view is an anchor scored against every view of the opposite
    augmentation: the positive is its own pair partner, the other B-1
    opposite views are negatives. Similarities are cosine / temperature and
    the loss is averaged over all 2B anchors.

    Returns ``(loss, (grad_a, grad_b))`` with exact gradients with respect to
    the raw (unnormalized) embeddings.
    """
    b = batch.size
    if b < 2:
        raise BatchError(f"need at least 2 pairs for negatives, got {b}")
    tau = batch.temperature
    za, zb = batch.view_a, batch.view_b

    na = np.linalg.norm(za, axis=1)
    nb = np.linalg.norm(zb, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise ValueError("contrastive embeddings must be non-zero")
    ua = za / na[:, None]
    ub = zb / nb[:, None]

    cos = ua @ ub.T          # (B, B): cos(a_i, b_j)
    logits = cos / tau

    # anchor a_i over candidates {b_j}; anchor b_j over candidates {a_i}
    row_max = logits.max(axis=1, keepdims=True)
    lse_a = np.log(np.exp(logits - row_max).sum(axis=1)) + row_max[:, 0]
    col_max = logits.max(axis=0, keepdims=True)
    lse_b = np.log(np.exp(logits - col_max).sum(axis=0)) + col_max[0]
    diag = np.diag(logits)
    loss = float(((lse_a - diag) + (lse_b - diag)).sum() / (2 * b))

    p_a = np.exp(logits - lse_a[:, None])   # row softmax
    p_b = np.exp(logits - lse_b[None, :])   # column softmax
    eye = np.eye(b)
    g = (p_a + p_b - 2 * eye) / (2 * b)     # dloss/dlogits_ij, both anchors

    # d cos(a_i, b_j)/da_i = (ub_j - cos_ij * ua_i) / |a_i|
    grad_a = (g @ ub - (g * cos).sum(axis=1)[:, None] * ua) / (tau * na[:, None])
    grad_b = (g.T @ ua - (g * cos).sum(axis=0)[:, None] * ub) / (tau * nb[:, None])
    return loss, (grad_a, grad_b)
