"""Acoustic front-end: WAV loading, log-mel filter-bank, MFCC, CMVN.

All operations are pure functions; defaults are 25 ms frames, 10 ms shift,
80 mel bands, 20 cepstra, pre-emphasis 0.97 and log floor 1e-10.
"""

import wave
from dataclasses import dataclass

import numpy as np
from scipy.fftpack import dct

from .errors import AudioFormatError
from .features import AudioBuffer, CmvnStats, FeatureMatrix, concat_feature_matrices

LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class FrontendConfig:
    frame_length: float = 0.025
    frame_shift: float = 0.010
    n_mels: int = 80
    n_ceps: int = 20
    pre_emphasis: float = 0.97
    log_floor: float = LOG_FLOOR

    def __post_init__(self):
        if not self.frame_length >= self.frame_shift > 0:
            raise ValueError("need frame_length >= frame_shift > 0")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if not 1 <= self.n_ceps <= self.n_mels:
            raise ValueError("need 1 <= n_ceps <= n_mels")


def load_wav(path):
    """Read a 16-bit PCM mono RIFF/WAVE file into an AudioBuffer.

    Samples are scaled by 1/32768 so the range is [-1, 1).
    """
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getnchannels() != 1:
                raise AudioFormatError(
                    f"{path}: expected mono, got {wf.getnchannels()} channels"
                )
            if wf.getsampwidth() != 2:
                raise AudioFormatError(
                    f"{path}: expected 16-bit PCM, got sample width {wf.getsampwidth()}"
                )
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: unsupported encoding ({exc})") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioBuffer(samples, rate)


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank_matrix(n_mels, n_fft, sample_rate, f_min=20.0):
    """Triangular mel filters from f_min to Nyquist, each normalized to unit area.

    Returns (n_mels, n_fft//2 + 1) weights and the band center frequencies in Hz.
    """
    nyquist = sample_rate / 2.0
    mel_points = np.linspace(hz_to_mel(f_min), hz_to_mel(nyquist), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    fft_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    weights = np.zeros((n_mels, fft_freqs.size))
    for m in range(n_mels):
        lo, center, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        up = (fft_freqs - lo) / (center - lo)
        down = (hi - fft_freqs) / (hi - center)
        tri = np.maximum(0.0, np.minimum(up, down))
        area = tri.sum()
        if area > 0:
            tri /= area
        weights[m] = tri
    return weights, hz_points[1:-1]


def frame_count(n_samples, frame_samples, shift_samples):
    """Number of full frames: 1 + floor((N - frame) / shift); 0 if too short."""
    if n_samples < frame_samples:
        return 0
    return 1 + (n_samples - frame_samples) // shift_samples


def _frame_signal(samples, frame_samples, shift_samples):
    n_frames = frame_count(samples.size, frame_samples, shift_samples)
    idx = np.arange(frame_samples)[None, :] + shift_samples * np.arange(n_frames)[:, None]
    return samples[idx]


def compute_filterbank(audio, config=FrontendConfig(), utterance_id=""):
    """Log-mel filter-bank features (natural log, floored at config.log_floor)."""
    frame_samples = int(round(config.frame_length * audio.sample_rate))
    shift_samples = int(round(config.frame_shift * audio.sample_rate))
    if audio.samples.size < frame_samples:
        raise ValueError(
            f"audio has {audio.samples.size} samples, shorter than one frame "
            f"({frame_samples})"
        )
    emphasized = np.empty_like(audio.samples)
    emphasized[0] = audio.samples[0]
    emphasized[1:] = audio.samples[1:] - config.pre_emphasis * audio.samples[:-1]

    frames = _frame_signal(emphasized, frame_samples, shift_samples)
    frames = frames * np.hamming(frame_samples)

    n_fft = 1
    while n_fft < frame_samples:
        n_fft *= 2
    power = np.abs(np.fft.rfft(frames, n_fft)) ** 2

    fbank, _ = mel_filterbank_matrix(config.n_mels, n_fft, audio.sample_rate)
    energies = power @ fbank.T
    logmel = np.log(np.maximum(energies, config.log_floor))
    return FeatureMatrix(logmel, config.frame_shift, "filterbank", utterance_id)


def compute_mfcc(fbank, n_ceps=20):
    """Orthonormal DCT-II of each log-mel frame, keeping coefficients 0..n_ceps-1."""
    if fbank.feature_kind != "filterbank":
        raise ValueError(f"expected filterbank input, got {fbank.feature_kind!r}")
    if not 1 <= n_ceps <= fbank.dim:
        raise ValueError(f"need 1 <= n_ceps <= {fbank.dim}, got {n_ceps}")
    ceps = dct(fbank.frames, type=2, axis=1, norm="ortho")[:, :n_ceps]
    return FeatureMatrix(ceps, fbank.frame_shift, "mfcc", fbank.utterance_id)


def cmvn(features):
    """Normalize to zero mean, unit variance per dimension.

    Zero-variance dimensions are centered only. Returns the normalized
    matrix and the stats used, for reuse on other matrices.
    """
    if features.n_frames < 2:
        raise ValueError("cmvn needs at least 2 frames")
    mean = features.frames.mean(axis=0)
    var = features.frames.var(axis=0)
    stats = CmvnStats(mean, var)
    return apply_cmvn(features, stats), stats


def apply_cmvn(features, stats):
    """Apply precomputed CMVN stats to a matrix of matching dimension."""
    if stats.mean.size != features.dim:
        raise ValueError(f"cmvn stats dim {stats.mean.size} != features dim {features.dim}")
    scale = np.where(stats.variance > 0, np.sqrt(stats.variance), 1.0)
    frames = (features.frames - stats.mean) / scale
    return FeatureMatrix(frames, features.frame_shift, features.feature_kind,
                         features.utterance_id)


def concat_utterances(parts):
    """Stack word-level feature matrices into one long utterance."""
    return concat_feature_matrices(parts)


def append_deltas(features, window=2):
    """Append first-order regression deltas (standard +-window slope)."""
    frames = features.frames
    denom = 2.0 * sum(i * i for i in range(1, window + 1))
    padded = np.pad(frames, ((window, window), (0, 0)), mode="edge")
    delta = np.zeros_like(frames)
    for i in range(1, window + 1):
        delta += i * (padded[window + i:padded.shape[0] - window + i]
                      - padded[window - i:-window - i])
    delta /= denom
    return FeatureMatrix(np.hstack([frames, delta]), features.frame_shift,
                         features.feature_kind, features.utterance_id)
