"""Diagonal-covariance GMM-UBM: EM training and Baum-Welch statistics."""

from dataclasses import dataclass, field

import numpy as np

from ..features import concat_feature_matrices
from .kernels import gmm_accumulate

KMEANS_SUBSAMPLE = 100_000
VARIANCE_FLOOR_SCALE = 1e-3


@dataclass
class DiagGmm:
    """Mixture weights, means and diagonal covariances."""

    weights: np.ndarray    # (C,)
    means: np.ndarray      # (C, D)
    variances: np.ndarray  # (C, D)
    log_likelihood_history: list = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {self.weights.sum()}, not 1")
        if np.any(self.weights < 0):
            raise ValueError("negative mixture weight")
        if np.any(self.variances <= 0):
            raise ValueError("variance at or below zero")

    @property
    def n_components(self):
        return self.weights.size

    @property
    def dim(self):
        return self.means.shape[1]


@dataclass
class BaumWelchStats:
    """Zeroth-order counts and UBM-mean-centered first-order statistics."""

    n: np.ndarray           # (C,)
    f: np.ndarray           # (C, D), sum_t gamma_t(c) (x_t - m_c)
    total_frames: int

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.float64)
        self.f = np.asarray(self.f, dtype=np.float64)
        if np.any(self.n < -1e-12):
            raise ValueError("negative occupancy count")
        if abs(self.n.sum() - self.total_frames) > 1e-6:
            raise ValueError(
                f"occupancies sum to {self.n.sum()}, expected {self.total_frames}"
            )

    def __add__(self, other):
        return BaumWelchStats(self.n + other.n, self.f + other.f,
                              self.total_frames + other.total_frames)


def _kmeanspp_centers(frames, n_components, rng):
    """k-means++ seeding: spread initial means over the data."""
    n = frames.shape[0]
    centers = np.empty((n_components, frames.shape[1]))
    centers[0] = frames[rng.integers(n)]
    d2 = np.sum((frames - centers[0]) ** 2, axis=1)
    for c in range(1, n_components):
        total = d2.sum()
        if total <= 0:
            centers[c] = frames[rng.integers(n)]
            continue
        idx = np.searchsorted(np.cumsum(d2), rng.random() * total)
        centers[c] = frames[min(idx, n - 1)]
        d2 = np.minimum(d2, np.sum((frames - centers[c]) ** 2, axis=1))
    return centers


def train_ubm(features, n_components=256, n_iters=20, seed=0,
              variance_floor_scale=VARIANCE_FLOOR_SCALE):
    """EM-train the UBM on the pooled frames of all utterances.

    Means are initialized by seeded k-means++ on a subsample; variances are
    floored at `variance_floor_scale` times the global per-dimension
    variance, so numerical collapse is never fatal. The recorded total
    log-likelihood (one entry per EM iteration, evaluated before the
    parameter update) is non-decreasing.
    """
    frames = np.vstack([fm.frames for fm in features])
    n_frames, dim = frames.shape
    if n_frames < 10 * n_components:
        raise ValueError(
            f"{n_frames} frames is too few for {n_components} components "
            f"(need at least {10 * n_components})"
        )
    rng = np.random.default_rng(seed)
    global_var = np.maximum(frames.var(axis=0), 1e-12)
    floor = variance_floor_scale * global_var

    if n_frames > KMEANS_SUBSAMPLE:
        subsample = frames[rng.choice(n_frames, KMEANS_SUBSAMPLE, replace=False)]
    else:
        subsample = frames
    means = _kmeanspp_centers(subsample, n_components, rng)
    weights = np.full(n_components, 1.0 / n_components)
    variances = np.tile(np.maximum(global_var, floor), (n_components, 1))

    history = []
    for _ in range(n_iters):
        total_ll, n, f_raw, s_raw = gmm_accumulate(frames, weights, means, variances)
        history.append(total_ll)
        occupied = n > 1e-10
        n_safe = np.where(occupied, n, 1.0)
        new_means = np.where(occupied[:, None], f_raw / n_safe[:, None], means)
        new_vars = np.where(occupied[:, None],
                            s_raw / n_safe[:, None] - new_means ** 2, variances)
        means = new_means
        variances = np.maximum(new_vars, floor)
        weights = np.maximum(n, 1e-10)
        weights = weights / weights.sum()
    return DiagGmm(weights, means, variances, history)


def log_likelihood(ubm, features):
    """Total log-likelihood of a FeatureMatrix under the UBM."""
    total_ll, _, _, _ = gmm_accumulate(features.frames, ubm.weights, ubm.means,
                                       ubm.variances)
    return total_ll


def accumulate_stats(ubm, features):
    """Baum-Welch statistics of an utterance against the UBM."""
    if features.dim != ubm.dim:
        raise ValueError(f"feature dim {features.dim} != UBM dim {ubm.dim}")
    _, n, f_raw, _ = gmm_accumulate(features.frames, ubm.weights, ubm.means,
                                    ubm.variances)
    f = f_raw - n[:, None] * ubm.means
    return BaumWelchStats(n, f, features.n_frames)


def accumulate_stats_concat(ubm, parts):
    """Stats of the concatenated utterance (equals the sum of part stats)."""
    return accumulate_stats(ubm, concat_feature_matrices(parts))
