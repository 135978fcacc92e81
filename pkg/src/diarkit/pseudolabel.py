"""Iterative pseudo-labeling: video averaging, k-means labels, purification.

A round is a single logical task, pure given its seed; independent rounds can
run concurrently. Network retraining between rounds happens elsewhere - each
round consumes an externally supplied embedding archive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import ClusterAssignment, kmeans
from .corpus import EmbeddingSet, Manifest
from .errors import EmptyResultError, ManifestError


@dataclass(frozen=True)
class PurifyConfig:
    """Label purification knobs: fraction to drop, minimum cluster size."""

    drop_fraction: float = 0.6
    min_cluster_size: int = 8

    def __post_init__(self):
        if not (0 <= self.drop_fraction < 1):
            raise ValueError("drop_fraction must lie in [0, 1)")
        if self.min_cluster_size < 1:
            raise ValueError("min_cluster_size must be >= 1")


@dataclass(frozen=True)
class RoundStats:
    """What survived one pseudo-labeling round."""

    round_index: int
    retained: int
    clusters: int

    def summary(self) -> str:
        return f"round={self.round_index} retained={self.retained} clusters={self.clusters}"


def average_by_video(embeddings: EmbeddingSet, manifest: Manifest) -> EmbeddingSet:
    """Collapse utterance embeddings to one arithmetic mean per video.

    Videos appear in first-occurrence manifest order; no renormalization is
    applied after averaging.
    """
    video_of = manifest.video_of()
    order: list[str] = []
    groups: dict[str, list[int]] = {}
    for i, utt in enumerate(embeddings.ids):
        if utt not in video_of:
            raise ManifestError(f"utterance '{utt}' missing from manifest")
        video = video_of[utt]
        if video is None:
            raise ManifestError(f"utterance '{utt}' has no video id")
        if video not in groups:
            groups[video] = []
            order.append(video)
        groups[video].append(i)

    vectors = np.empty((len(order), embeddings.dim), dtype=np.float32)
    for j, video in enumerate(order):
        vectors[j] = embeddings.vectors[groups[video]].astype(np.float64).mean(axis=0)
    return EmbeddingSet(ids=order, vectors=vectors)


def purify(
    assignment: ClusterAssignment,
    config: PurifyConfig,
    round_index: int = 0,
) -> tuple[ClusterAssignment, RoundStats]:
    """Drop low-confidence items, then undersized clusters.

    Step (a) removes exactly floor(drop_fraction * N) items with the largest
    squared distance to their centroid (ties broken by id); step (b) drops
    clusters whose remaining size is below min_cluster_size. Surviving labels
    are re-indexed densely in original cluster order.
    """
    n = len(assignment.ids)
    n_drop = int(config.drop_fraction * n)
    order = sorted(
        range(n), key=lambda i: (-assignment.distances[i], assignment.ids[i])
    )
    dropped = set(order[:n_drop])
    kept = [i for i in range(n) if i not in dropped]

    sizes: dict[int, int] = {}
    for i in kept:
        c = int(assignment.labels[i])
        sizes[c] = sizes.get(c, 0) + 1
    surviving = sorted(c for c, s in sizes.items() if s >= config.min_cluster_size)
    remap = {c: j for j, c in enumerate(surviving)}

    final = [i for i in kept if int(assignment.labels[i]) in remap]
    if not final:
        raise EmptyResultError("purification removed every item")

    result = ClusterAssignment(
        ids=[assignment.ids[i] for i in final],
        labels=np.array([remap[int(assignment.labels[i])] for i in final]),
        centroids=assignment.centroids[surviving],
        distances=assignment.distances[final],
    )
    stats = RoundStats(round_index, retained=len(final), clusters=len(surviving))
    return result, stats


def pseudo_label_round(
    embeddings: EmbeddingSet,
    manifest: Manifest,
    k: int,
    config: PurifyConfig,
    seed: int,
    round_index: int = 1,
) -> tuple[dict[str, int], RoundStats]:
    """One labeling round: average by video, cluster, propagate, purify.

    Returns the surviving utterance -> cluster mapping plus round statistics.
    Confidence is measured from each utterance embedding to its video's
    cluster centroid, so outlier utterances inside a good video can still be
    dropped.
    """
    video_level = average_by_video(embeddings, manifest)
    km = kmeans(video_level.vectors, k, seed, ids=video_level.ids)
    cluster_of_video = km.labels_by_id()

    video_of = manifest.video_of()
    labels = np.array(
        [cluster_of_video[video_of[utt]] for utt in embeddings.ids], dtype=np.int64
    )
    diffs = embeddings.vectors.astype(np.float64) - km.centroids[labels]
    distances = (diffs * diffs).sum(axis=1)

    utt_assignment = ClusterAssignment(
        ids=list(embeddings.ids),
        labels=labels,
        centroids=km.centroids,
        distances=distances,
    )
    purified, stats = purify(utt_assignment, config, round_index=round_index)
    return purified.labels_by_id(), stats


def write_labels(labels: dict[str, int]) -> str:
    """Emit pseudo labels as ``utterance<TAB>cluster`` lines."""
    return "".join(f"{utt}\t{cluster}\n" for utt, cluster in labels.items())


def parse_labels(text: str) -> dict[str, int]:
    labels = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        utt, cluster = line.split("\t")
        labels[utt] = int(cluster)
    return labels
