"""Shared frame-feature containers.

A FeatureMatrix is the lingua franca between pipeline stages: a T x D
matrix of frame vectors tagged with its kind, frame shift and utterance id.
"""

from dataclasses import dataclass, field

import numpy as np

FEATURE_KINDS = ("filterbank", "mfcc", "lpr", "embedding", "posterior")


@dataclass(frozen=True)
class AudioBuffer:
    """Mono audio with samples normalized to [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.ndim != 1:
            raise ValueError("samples must be a 1-D array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")
        if samples.size and np.max(np.abs(samples)) > 1.0 + 1e-12:
            raise ValueError("samples exceed the [-1, 1] range")

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


@dataclass
class FeatureMatrix:
    """T x D frame features with kind, frame shift and utterance id."""

    frames: np.ndarray
    frame_shift: float
    feature_kind: str
    utterance_id: str = ""

    def __post_init__(self):
        self.frames = np.atleast_2d(np.asarray(self.frames, dtype=np.float64))
        if self.feature_kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature_kind {self.feature_kind!r}")
        if self.frames.size == 0:
            raise ValueError("feature matrix must have at least one frame")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("feature matrix contains non-finite entries")
        if self.frame_shift <= 0:
            raise ValueError("frame_shift must be positive")

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def dim(self):
        return self.frames.shape[1]


@dataclass(frozen=True)
class CmvnStats:
    """Per-dimension mean and variance used for normalization."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "variance", np.asarray(self.variance, dtype=np.float64))
        if self.mean.shape != self.variance.shape:
            raise ValueError("mean and variance dimensions differ")
        if np.any(self.variance < 0):
            raise ValueError("variance entries must be non-negative")


def concat_feature_matrices(parts):
    """Stack FeatureMatrix parts in order; all must agree on kind, D, shift."""
    if not parts:
        raise ValueError("no parts to concatenate")
    first = parts[0]
    for p in parts[1:]:
        if p.feature_kind != first.feature_kind:
            raise ValueError(
                f"mixed feature kinds: {first.feature_kind!r} vs {p.feature_kind!r}"
            )
        if p.dim != first.dim:
            raise ValueError(f"dimension mismatch: {first.dim} vs {p.dim}")
        if abs(p.frame_shift - first.frame_shift) > 1e-12:
            raise ValueError("frame_shift mismatch")
    frames = np.vstack([p.frames for p in parts])
    utt_id = "+".join(p.utterance_id for p in parts)
    return FeatureMatrix(frames, first.frame_shift, first.feature_kind, utt_id)
