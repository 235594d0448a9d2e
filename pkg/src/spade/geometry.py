"""Exact nearest-neighbour distances and latent-space diagnostics.

All distances go through :func:`distances_to`, so every operation shares one
floating-point expression and brute-force checks can match exactly.
"""

from __future__ import annotations

import math

import numpy as np

from .config import LatentConfig
from .errors import (
    DimensionMismatch,
    DuplicateInput,
    InsufficientClassSize,
    InvalidArgument,
    NonFiniteValue,
    SingleClass,
    UnknownClass,
    ZeroVector,
)
from .store import EmbeddingDataset

_NORM_FLOOR = 1e-300


def _norms(a: np.ndarray) -> np.ndarray:
    # one expression for single vectors and rows alike
    return np.sqrt(np.sum(a * a, axis=-1, keepdims=True))


def normalize(vector) -> np.ndarray:
    """Project ``vector`` onto the unit sphere."""
    v = np.asarray(vector, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise NonFiniteValue("vector contains NaN or infinity")
    norm = _norms(v)
    if not norm[0] >= _NORM_FLOOR:
        raise ZeroVector("cannot normalize a zero vector")
    return v / norm


def normalize_rows(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    norms = _norms(m)
    if np.any(~(norms >= _NORM_FLOOR)):
        raise ZeroVector("cannot normalize a zero vector")
    return m / norms


def distances_to(query: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Euclidean distances from ``query`` to every row of ``points``."""
    return np.sqrt(np.sum((points - query) ** 2, axis=1))


def latent_vectors(dataset: EmbeddingDataset, config: LatentConfig) -> np.ndarray:
    """The vectors distances are computed on (unit-normalized iff configured)."""
    return normalize_rows(dataset.vectors) if config.normalize else dataset.vectors


def prepare_query(query, d: int, do_normalize: bool) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (d,):
        raise DimensionMismatch(f"query has shape {q.shape}, expected ({d},)")
    if not np.all(np.isfinite(q)):
        raise NonFiniteValue("query contains NaN or infinity")
    return normalize(q) if do_normalize else q


def kth_smallest(values: np.ndarray, k: int) -> float:
    return float(np.partition(values, k - 1)[k - 1])


def kth_nn_distance_same_class(
    dataset: EmbeddingDataset, query_position: int, config: LatentConfig
) -> float:
    """Leave-one-out distance from a training record to its k-th same-class neighbour."""
    label = int(dataset.labels[query_position])
    members = dataset.class_index[label]
    if members.size <= config.k:
        raise InsufficientClassSize(
            f"class {label} has {members.size} members, need more than k={config.k}"
        )
    vectors = latent_vectors(dataset, config)
    others = members[members != query_position]
    return kth_smallest(distances_to(vectors[query_position], vectors[others]), config.k)


def kth_nn_distance_to_class(
    query, dataset: EmbeddingDataset, target_class: int, config: LatentConfig
) -> float:
    """Distance from an external query to its k-th nearest member of ``target_class``."""
    if target_class not in dataset.class_index:
        raise UnknownClass(f"class {target_class} has no members")
    members = dataset.class_index[target_class]
    if members.size < config.k:
        raise InsufficientClassSize(
            f"class {target_class} has {members.size} members, need at least k={config.k}"
        )
    q = prepare_query(query, dataset.d, config.normalize)
    vectors = latent_vectors(dataset, config)
    return kth_smallest(distances_to(q, vectors[members]), config.k)


def class_loo_distances(points: np.ndarray, k: int) -> np.ndarray:
    """Leave-one-out k-th neighbour distance of every row of ``points`` within ``points``."""
    n = points.shape[0]
    if n <= k:
        raise InsufficientClassSize(f"{n} points, need more than k={k}")
    out = np.empty(n)
    for i in range(n):
        dist = distances_to(points[i], points)
        dist[i] = math.inf
        out[i] = kth_smallest(dist, k)
    return out


def cross_class_distances(sources: np.ndarray, targets: np.ndarray, k: int) -> np.ndarray:
    """k-th nearest distance from every row of ``sources`` into ``targets``."""
    if targets.shape[0] < k:
        raise InsufficientClassSize(f"{targets.shape[0]} target points, need at least k={k}")
    return np.array([kth_smallest(distances_to(s, targets), k) for s in sources])


def variation(dataset: EmbeddingDataset, config: LatentConfig | None = None) -> float:
    """Largest within-class diameter."""
    vectors = latent_vectors(dataset, config or LatentConfig(normalize=False))
    best = 0.0
    for members in dataset.class_index.values():
        pts = vectors[members]
        for i in range(pts.shape[0] - 1):
            best = max(best, float(distances_to(pts[i], pts[i + 1 :]).max()))
    return best


def informativeness(dataset: EmbeddingDataset, config: LatentConfig | None = None) -> float:
    """Mean, over ordered pairs of distinct classes, of the closest cross-class distance."""
    classes = sorted(dataset.class_index)
    if len(classes) < 2:
        raise SingleClass("informativeness needs at least two classes")
    vectors = latent_vectors(dataset, config or LatentConfig(normalize=False))
    total = 0.0
    for a in classes:
        pa = vectors[dataset.class_index[a]]
        for b in classes:
            if a == b:
                continue
            pb = vectors[dataset.class_index[b]]
            total += min(float(distances_to(x, pb).min()) for x in pa)
    n_c = len(classes)
    return total / (n_c * (n_c - 1))


def empirical_lipschitz(pairs) -> float:
    """Largest observed ratio of embedding distance to input distance.

    This is only a lower bound on the true Lipschitz constant of the
    embedding.
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise InvalidArgument("need at least two (input, embedding) pairs")
    inputs = np.array([np.asarray(p[0], dtype=np.float64) for p in pairs])
    embeds = np.array([np.asarray(p[1], dtype=np.float64) for p in pairs])
    best = 0.0
    for i in range(len(pairs) - 1):
        d_in = distances_to(inputs[i], inputs[i + 1 :])
        d_out = distances_to(embeds[i], embeds[i + 1 :])
        if np.any(d_in == 0):
            raise DuplicateInput("two identical inputs make the ratio undefined")
        best = max(best, float(np.max(d_out / d_in)))
    return best
