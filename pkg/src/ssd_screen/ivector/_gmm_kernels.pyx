# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled diagonal-GMM accumulation kernel.

Fuses per-frame log-likelihood, responsibilities and sufficient-statistic
accumulation into one pass without materializing the T x C posterior matrix.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, M_PI

BACKEND = "cython"


def gmm_accumulate(object frames_in, object weights_in, object means_in,
                   object variances_in):
    """Same contract as the numpy fallback: one pass over frames.

    Returns (total log-likelihood, n, f_raw, s_raw).
    """
    cdef double[:, ::1] frames = np.ascontiguousarray(frames_in, dtype=np.float64)
    cdef double[::1] weights = np.ascontiguousarray(weights_in, dtype=np.float64)
    cdef double[:, ::1] means = np.ascontiguousarray(means_in, dtype=np.float64)
    cdef double[:, ::1] variances = np.ascontiguousarray(variances_in, dtype=np.float64)

    cdef Py_ssize_t T = frames.shape[0]
    cdef Py_ssize_t D = frames.shape[1]
    cdef Py_ssize_t C = weights.shape[0]

    cdef cnp.ndarray[double, ndim=1] n_arr = np.zeros(C)
    cdef cnp.ndarray[double, ndim=2] f_arr = np.zeros((C, D))
    cdef cnp.ndarray[double, ndim=2] s_arr = np.zeros((C, D))
    cdef cnp.ndarray[double, ndim=2] inv_var_arr = 1.0 / np.asarray(variances_in,
                                                                    dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] const_arr = (
        np.log(np.asarray(weights_in, dtype=np.float64))
        - 0.5 * (D * log(2.0 * M_PI)
                 + np.log(np.asarray(variances_in, dtype=np.float64)).sum(axis=1))
    )
    cdef cnp.ndarray[double, ndim=1] logp_arr = np.empty(C)

    cdef double[::1] n = n_arr
    cdef double[:, ::1] f = f_arr
    cdef double[:, ::1] s = s_arr
    cdef double[:, ::1] inv_var = inv_var_arr
    cdef double[::1] const = const_arr
    cdef double[::1] logp = logp_arr

    cdef double total_ll = 0.0
    cdef double acc, diff, mx, lse, g, x
    cdef Py_ssize_t t, c, d

    for t in range(T):
        mx = -1e300
        for c in range(C):
            acc = const[c]
            for d in range(D):
                diff = frames[t, d] - means[c, d]
                acc -= 0.5 * diff * diff * inv_var[c, d]
            logp[c] = acc
            if acc > mx:
                mx = acc
        lse = 0.0
        for c in range(C):
            lse += exp(logp[c] - mx)
        lse = mx + log(lse)
        total_ll += lse
        for c in range(C):
            g = exp(logp[c] - lse)
            n[c] += g
            for d in range(D):
                x = frames[t, d]
                f[c, d] += g * x
                s[c, d] += g * x * x

    return total_ll, n_arr, f_arr, s_arr
