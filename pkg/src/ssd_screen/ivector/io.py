"""Binary model container for the UBM and total-variability matrix.

Layout (little-endian): magic ``SSDM``, version:u8, C:u32, D:u32, R:u32,
then weights (C), means (C*D), variances (C*D), m (C*D), T (C*D*R) and
sigma (C*D), all float64. R = 0 means no total-variability matrix yet.
"""

import struct

import numpy as np

from ..errors import ArchiveFormatError
from .gmm import DiagGmm
from .tv import TotalVariability

MODEL_MAGIC = b"SSDM"
MODEL_VERSION = 1


def write_model(path, ubm, tv=None):
    c, d = ubm.n_components, ubm.dim
    rank = tv.rank if tv is not None else 0
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<BIII", MODEL_VERSION, c, d, rank))
        fh.write(ubm.weights.astype("<f8").tobytes())
        fh.write(ubm.means.astype("<f8").tobytes())
        fh.write(ubm.variances.astype("<f8").tobytes())
        if tv is not None:
            fh.write(tv.m.astype("<f8").tobytes())
            fh.write(tv.t_matrix.astype("<f8").tobytes())
            fh.write(tv.sigma.astype("<f8").tobytes())
        else:
            fh.write(ubm.means.ravel().astype("<f8").tobytes())
            fh.write(ubm.variances.ravel().astype("<f8").tobytes())


def _read_array(fh, count, what):
    raw = fh.read(8 * count)
    if len(raw) != 8 * count:
        raise ArchiveFormatError(f"truncated model file while reading {what}")
    return np.frombuffer(raw, dtype="<f8").copy()


def read_model(path):
    """Return (DiagGmm, TotalVariability or None)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MODEL_MAGIC:
            raise ArchiveFormatError(f"{path}: bad magic {magic!r}")
        header = fh.read(13)
        if len(header) != 13:
            raise ArchiveFormatError(f"{path}: truncated header")
        version, c, d, rank = struct.unpack("<BIII", header)
        if version != MODEL_VERSION:
            raise ArchiveFormatError(f"{path}: unsupported version {version}")
        weights = _read_array(fh, c, "weights")
        means = _read_array(fh, c * d, "means").reshape(c, d)
        variances = _read_array(fh, c * d, "variances").reshape(c, d)
        ubm = DiagGmm(weights, means, variances)
        m = _read_array(fh, c * d, "m")
        if rank == 0:
            return ubm, None
        t_matrix = _read_array(fh, c * d * rank, "T").reshape(c * d, rank)
        sigma = _read_array(fh, c * d, "sigma")
        return ubm, TotalVariability(m, t_matrix, sigma, c, d)
