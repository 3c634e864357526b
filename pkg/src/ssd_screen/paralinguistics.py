"""Frame-level low-level descriptors and utterance-level functionals.

A transparent, testable subset: log-energy, autocorrelation pitch,
zero-crossing rate, spectral centroid and slope, two band-energy ratios,
jitter and shimmer proxies. Each descriptor is summarized by mean, std,
20th/50th/80th percentiles and slope-over-time; a voiced-frame fraction
completes the vector.
"""

from dataclasses import dataclass

import numpy as np

from .frontend import FrontendConfig, frame_count

LLD_NAMES = ("log_energy", "pitch", "zcr", "centroid", "spectral_slope",
             "band_ratio_low", "band_ratio_mid", "jitter", "shimmer")
FUNCTIONAL_NAMES = ("mean", "std", "p20", "p50", "p80", "slope")

PITCH_MIN_HZ = 60.0
PITCH_MAX_HZ = 500.0
VOICING_THRESHOLD = 0.3
ENERGY_FLOOR = 1e-10
BAND_LOW_HZ = 1000.0
BAND_MID_HZ = 4000.0


@dataclass
class LldTrack:
    """Per-frame descriptor values; tracks[name] is a (T,) array."""

    tracks: dict
    frame_shift: float

    def __post_init__(self):
        for name in LLD_NAMES:
            if name not in self.tracks:
                raise ValueError(f"missing descriptor {name!r}")
            arr = np.asarray(self.tracks[name], dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in {name!r}")
            self.tracks[name] = arr
        if np.any(self.tracks["pitch"] < 0):
            raise ValueError("negative pitch")

    @property
    def n_frames(self):
        return self.tracks["log_energy"].size

    @property
    def voiced(self):
        return self.tracks["pitch"] > 0


def functional_dim():
    return len(LLD_NAMES) * len(FUNCTIONAL_NAMES) + 1


def _autocorr_pitch(frame, sample_rate):
    """Pitch in Hz from the normalized autocorrelation peak; 0 if unvoiced."""
    lag_min = int(np.floor(sample_rate / PITCH_MAX_HZ))
    lag_max = int(np.ceil(sample_rate / PITCH_MIN_HZ))
    if lag_max >= frame.size:
        lag_max = frame.size - 1
    if lag_min < 1 or lag_min >= lag_max:
        return 0.0
    frame = frame - frame.mean()
    r0 = float(frame @ frame)
    if r0 <= 0:
        return 0.0
    n = 1
    while n < 2 * frame.size:
        n *= 2
    spectrum = np.fft.rfft(frame, n)
    acf = np.fft.irfft(spectrum * np.conj(spectrum))[:lag_max + 1]
    window = acf[lag_min:lag_max + 1]
    best = int(np.argmax(window)) + lag_min
    peak = acf[best] / r0
    if peak < VOICING_THRESHOLD:
        return 0.0
    # parabolic interpolation around the peak lag
    lag = float(best)
    if lag_min < best < lag_max:
        y0, y1, y2 = acf[best - 1], acf[best], acf[best + 1]
        denom = y0 - 2 * y1 + y2
        if denom < 0:
            lag = best + 0.5 * (y0 - y2) / denom
    return sample_rate / lag


def compute_llds(audio, config=FrontendConfig()):
    """Low-level descriptor tracks with the same framing as the front-end."""
    frame_samples = int(round(config.frame_length * audio.sample_rate))
    shift_samples = int(round(config.frame_shift * audio.sample_rate))
    n_frames = frame_count(audio.samples.size, frame_samples, shift_samples)
    if n_frames < 1:
        raise ValueError("audio shorter than one frame")

    n_fft = 1
    while n_fft < frame_samples:
        n_fft *= 2
    freqs = np.arange(n_fft // 2 + 1) * audio.sample_rate / n_fft
    hamming = np.hamming(frame_samples)

    tracks = {name: np.zeros(n_frames) for name in LLD_NAMES}
    prev_period = 0.0
    prev_peak = 0.0
    for t in range(n_frames):
        frame = audio.samples[t * shift_samples:t * shift_samples + frame_samples]
        energy = float(frame @ frame)
        tracks["log_energy"][t] = np.log(max(energy, ENERGY_FLOOR))
        signs = np.sign(frame)
        signs[signs == 0] = 1
        tracks["zcr"][t] = np.mean(signs[1:] != signs[:-1])

        power = np.abs(np.fft.rfft(frame * hamming, n_fft)) ** 2
        total = power.sum()
        if total > 0:
            tracks["centroid"][t] = float(freqs @ power) / total
            norm = power / total
            fc = freqs - freqs.mean()
            tracks["spectral_slope"][t] = float(fc @ norm) / float(fc @ fc)
            tracks["band_ratio_low"][t] = norm[freqs < BAND_LOW_HZ].sum()
            tracks["band_ratio_mid"][t] = norm[(freqs >= BAND_LOW_HZ)
                                               & (freqs < BAND_MID_HZ)].sum()

        pitch = _autocorr_pitch(frame, audio.sample_rate)
        tracks["pitch"][t] = pitch
        if pitch > 0:
            period = 1.0 / pitch
            if prev_period > 0:
                tracks["jitter"][t] = abs(period - prev_period) / prev_period
            prev_period = period
        else:
            prev_period = 0.0

        peak = float(np.max(np.abs(frame))) if frame.size else 0.0
        if prev_peak > 0:
            tracks["shimmer"][t] = abs(peak - prev_peak) / prev_peak
        prev_peak = peak
    return LldTrack(tracks, config.frame_shift)


def _slope_over_time(values):
    """Least-squares slope of values against the frame index."""
    n = values.size
    if n < 2:
        return 0.0
    idx = np.arange(n, dtype=np.float64)
    idx -= idx.mean()
    denom = float(idx @ idx)
    return float(idx @ (values - values.mean())) / denom


def _functionals(values):
    return np.array([
        values.mean(),
        values.std(),
        np.percentile(values, 20),
        np.percentile(values, 50),
        np.percentile(values, 80),
        _slope_over_time(values),
    ])


def apply_functionals(track):
    """Fixed-dimension functional vector; pitch statistics use voiced frames only."""
    if track.n_frames < 2:
        raise ValueError("need at least 2 frames for functionals")
    voiced = track.voiced
    parts = []
    for name in LLD_NAMES:
        values = track.tracks[name]
        if name == "pitch":
            values = values[voiced]
            if values.size == 0:
                parts.append(np.zeros(len(FUNCTIONAL_NAMES)))
                continue
            if values.size == 1:
                values = np.repeat(values, 2)
        parts.append(_functionals(values))
    parts.append(np.array([voiced.mean()]))
    return np.concatenate(parts)
