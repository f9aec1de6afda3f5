"""PCA of fingerprint vectors and a class-separability statistic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True, eq=False)
class PCAResult:
    scores: np.ndarray  # (count, k)
    explained_variance_ratio: np.ndarray  # (k,)
    components: np.ndarray  # (k, 2D)
    mean: np.ndarray  # (2D,)
    degenerate: bool = False


def to_real(theta: np.ndarray) -> np.ndarray:
    """Stack real parts then imaginary parts: (count, D) complex -> (count, 2D) real."""
    theta = np.atleast_2d(np.asarray(theta))
    return np.hstack([theta.real, theta.imag])


def pca_project(features, k: int) -> PCAResult:
    """Project onto the top-``k`` principal directions.

    ``features`` is a sequence of :class:`FeatureVector` or a complex array of
    shape ``(count, D)``. Each direction's largest-magnitude entry is made
    positive so results are reproducible.
    """
    if isinstance(features, np.ndarray):
        theta = features
    else:
        theta = np.array([f.theta for f in features])
    if theta.ndim != 2 or theta.shape[0] < 2:
        raise ConfigError("PCA needs at least 2 feature vectors of equal length")
    x = to_real(theta)
    if not 1 <= k <= x.shape[1]:
        raise ConfigError(f"k must be in [1, {x.shape[1]}], got {k}")
    mean = x.mean(axis=0)
    xc = x - mean
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    total = float(np.sum(s**2))
    count = x.shape[0]
    if total <= np.finfo(float).tiny or s[0] <= 1e-12 * np.sqrt(count) * np.abs(x).max(initial=0.0):
        return PCAResult(np.zeros((count, k)), np.zeros(k), np.zeros((k, x.shape[1])), mean, True)
    comps = vt[:k].copy()
    if comps.shape[0] < k:
        comps = np.vstack([comps, np.zeros((k - comps.shape[0], x.shape[1]))])
    for c in comps:
        if np.any(c):
            if c[np.argmax(np.abs(c))] < 0:
                c *= -1.0
    ratios = np.zeros(k)
    ratios[: min(k, s.size)] = s[:k] ** 2 / total
    return PCAResult(xc @ comps.T, ratios, comps, mean, False)


def separability(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean pairwise distance between class centroids over mean within-class RMS scatter.

    Values above 1 mean classes sit further apart than they spread.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ConfigError("separability needs at least 2 classes")
    cents = np.array([scores[labels == c].mean(axis=0) for c in classes])
    scatter = np.mean([
        np.sqrt(np.mean(np.sum((scores[labels == c] - cents[i]) ** 2, axis=1)))
        for i, c in enumerate(classes)
    ])
    diffs = cents[:, None, :] - cents[None, :, :]
    dist = np.sqrt(np.sum(diffs**2, axis=-1))
    iu = np.triu_indices(classes.size, 1)
    between = float(np.mean(dist[iu]))
    if scatter == 0.0:
        return float("inf") if between > 0 else 0.0
    return between / float(scatter)
