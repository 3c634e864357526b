"""GMM-UBM training, Baum-Welch statistics and i-vector extraction."""

from .gmm import (BaumWelchStats, DiagGmm, accumulate_stats, log_likelihood,
                  train_ubm)
from .io import read_model, write_model
from .kernels import BACKEND, available_backends
from .tv import (IVector, TotalVariability, extract_ivector, init_tv,
                 length_normalize, train_tv)

__all__ = [
    "BaumWelchStats", "DiagGmm", "IVector", "TotalVariability", "BACKEND",
    "accumulate_stats", "available_backends", "extract_ivector", "init_tv",
    "length_normalize", "log_likelihood", "read_model", "train_tv",
    "train_ubm", "write_model",
]
