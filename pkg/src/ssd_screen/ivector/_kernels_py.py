"""Pure-numpy fallback for the diagonal-GMM accumulation kernel."""

import numpy as np

BACKEND = "numpy"


def gmm_accumulate(frames, weights, means, variances):
    """One pass over frames against a diagonal GMM.

    Returns (total log-likelihood, zeroth-order counts n (C,),
    first-order sums f_raw (C, D) = sum_t gamma_t(c) x_t,
    second-order sums s_raw (C, D) = sum_t gamma_t(c) x_t**2).
    """
    frames = np.asarray(frames, dtype=np.float64)
    inv_var = 1.0 / variances
    # log N(x; mu_c, sigma_c) expanded in x**2, x and constants
    const = (np.log(weights)
             - 0.5 * (frames.shape[1] * np.log(2.0 * np.pi)
                      + np.log(variances).sum(axis=1)
                      + (means ** 2 * inv_var).sum(axis=1)))
    logp = (frames @ (means * inv_var).T
            - 0.5 * (frames ** 2) @ inv_var.T
            + const)
    lse = np.logaddexp.reduce(logp, axis=1)
    gamma = np.exp(logp - lse[:, None])
    n = gamma.sum(axis=0)
    f_raw = gamma.T @ frames
    s_raw = gamma.T @ (frames ** 2)
    return float(lse.sum()), n, f_raw, s_raw
