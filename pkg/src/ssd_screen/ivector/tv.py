"""Total-variability model: EM training and i-vector extraction.

The super-vector of an utterance is modeled as mu = m + T w with a
standard-normal prior on the latent factor w. Training alternates the
exact Gaussian posterior of w per utterance (E-step) with a per-component
row-block least-squares update of T (M-step).
"""

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

MSTEP_RIDGE = 1e-8


@dataclass
class TotalVariability:
    """Super-vector mean m, low-rank matrix T and shared diagonal covariance."""

    m: np.ndarray         # (C*D,)
    t_matrix: np.ndarray  # (C*D, R)
    sigma: np.ndarray     # (C*D,)
    n_components: int
    dim: int
    objective_history: list = field(default_factory=list)

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=np.float64)
        self.t_matrix = np.asarray(self.t_matrix, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        cd = self.n_components * self.dim
        if self.m.shape != (cd,) or self.sigma.shape != (cd,):
            raise ValueError("m/sigma shape inconsistent with C*D")
        if self.t_matrix.shape[0] != cd:
            raise ValueError("T row count inconsistent with C*D")
        if self.rank > cd:
            raise ValueError(f"rank {self.rank} exceeds super-vector size {cd}")
        if np.any(self.sigma <= 0):
            raise ValueError("sigma must be positive")
        for arr in (self.m, self.t_matrix, self.sigma):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite total-variability parameter")

    @property
    def rank(self):
        return self.t_matrix.shape[1]


@dataclass(frozen=True)
class IVector:
    """Posterior-mean latent factor for one utterance or speaker."""

    w: np.ndarray
    source_id: str = ""
    feature_kind: str = ""

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=np.float64))
        if not np.all(np.isfinite(self.w)):
            raise ValueError("non-finite i-vector")


def _posterior(tv, stats):
    """Posterior precision L, mean w_hat and projection vector b for one utterance."""
    rank = tv.rank
    t_blocks = tv.t_matrix.reshape(tv.n_components, tv.dim, rank)
    sigma_blocks = tv.sigma.reshape(tv.n_components, tv.dim)
    t_over_sigma = t_blocks / sigma_blocks[:, :, None]
    # G_c = T_c' Sigma_c^-1 T_c
    g = np.einsum("cdr,cds->crs", t_blocks, t_over_sigma)
    precision = np.eye(rank) + np.einsum("c,crs->rs", stats.n, g)
    b = np.einsum("cdr,cd->r", t_over_sigma, stats.f)
    w_hat = np.linalg.solve(precision, b)
    return precision, w_hat, b


def extract_ivector(tv, stats, source_id="", feature_kind=""):
    """Posterior mean of w given Baum-Welch statistics.

    L = I + sum_c N_c T_c' Sigma_c^-1 T_c is at least the identity, so the
    solve never fails; empty statistics give the prior mean w = 0.
    """
    if stats.n.size != tv.n_components or stats.f.shape[1] != tv.dim:
        raise ValueError("statistics shape does not match the model")
    _, w_hat, _ = _posterior(tv, stats)
    return IVector(w_hat, source_id, feature_kind)


def init_tv(ubm, rank, seed=0):
    """Fresh model around the UBM: Gaussian T scaled by 0.1 sqrt(mean variance)."""
    cd = ubm.n_components * ubm.dim
    if rank > cd:
        raise ValueError(f"rank {rank} exceeds super-vector size {cd}")
    rng = np.random.default_rng(seed)
    scale = 0.1 * np.sqrt(ubm.variances.mean())
    t_matrix = scale * rng.standard_normal((cd, rank))
    return TotalVariability(ubm.means.ravel(), t_matrix, ubm.variances.ravel(),
                            ubm.n_components, ubm.dim)


def train_tv(ubm, stats_list, rank=100, n_iters=10, seed=0):
    """EM-train T on per-utterance Baum-Welch statistics.

    The recorded per-iteration objective is the exact marginal log-density
    of the first-order statistics under the current T (up to a T-independent
    constant): sum_i [ b_i' w_i / 2 - log det L_i / 2 ]. It is
    non-decreasing over iterations.
    """
    if len(stats_list) < 2:
        raise ValueError("need at least 2 utterances to train T")
    tv = init_tv(ubm, rank, seed)
    c, d = ubm.n_components, ubm.dim
    history = []
    for _ in range(n_iters):
        objective = 0.0
        a = np.zeros((c, rank, rank))   # sum_i N_ic E[w w']
        b_acc = np.zeros((c, d, rank))  # sum_i F_ic w_i'
        for stats in stats_list:
            precision, w_hat, b = _posterior(tv, stats)
            sign, logdet = np.linalg.slogdet(precision)
            objective += 0.5 * (b @ w_hat) - 0.5 * sign * logdet
            second_moment = np.linalg.inv(precision) + np.outer(w_hat, w_hat)
            a += stats.n[:, None, None] * second_moment
            b_acc += stats.f[:, :, None] * w_hat[None, None, :]
        history.append(objective)
        t_blocks = np.empty((c, d, rank))
        for comp in range(c):
            try:
                t_blocks[comp] = np.linalg.solve(a[comp], b_acc[comp].T).T
            except np.linalg.LinAlgError:
                logger.warning("singular M-step matrix for component %d; "
                               "adding ridge %g", comp, MSTEP_RIDGE)
                ridge = a[comp] + MSTEP_RIDGE * np.eye(rank)
                t_blocks[comp] = np.linalg.solve(ridge, b_acc[comp].T).T
        tv = TotalVariability(tv.m, t_blocks.reshape(c * d, rank), tv.sigma,
                              c, d, history)
    return tv


def length_normalize(ivec):
    """Project an i-vector onto the unit sphere (no-op for the zero vector)."""
    norm = np.linalg.norm(ivec.w)
    if norm == 0:
        return ivec
    return IVector(ivec.w / norm, ivec.source_id, ivec.feature_kind)
