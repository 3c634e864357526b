import time

import numpy as np
import pytest
from scipy.optimize import minimize

from ssd_screen.errors import ArchiveFormatError
from ssd_screen.features import FeatureMatrix
from ssd_screen.ivector.gmm import (BaumWelchStats, DiagGmm, accumulate_stats,
                                    train_ubm)
from ssd_screen.ivector.io import read_model, write_model
from ssd_screen.ivector.tv import (IVector, TotalVariability, extract_ivector,
                                   init_tv, length_normalize, train_tv)


def _small_tv(rng, c=2, d=2, rank=2):
    m = rng.standard_normal(c * d)
    t = rng.standard_normal((c * d, rank))
    sigma = rng.uniform(0.5, 2.0, c * d)
    return TotalVariability(m, t, sigma, c, d)


def _random_stats(rng, c=2, d=2, frames=50):
    n = rng.uniform(1.0, frames, c)
    n *= frames / n.sum()
    f = rng.standard_normal((c, d)) * 5.0
    return BaumWelchStats(n, f, frames)


class TestExtraction:
    def test_matches_numerical_posterior_mode(self, rng):
        # the posterior is Gaussian, so its mode equals its mean; the
        # log-density of w given stats (up to a constant) is
        #   b' w - w' L w / 2
        # with L = I + sum_c N_c T_c' Sigma_c^-1 T_c. Maximize it directly.
        start = time.monotonic()
        tv = _small_tv(rng)
        t_blocks = tv.t_matrix.reshape(2, 2, 2)
        sigma_blocks = tv.sigma.reshape(2, 2)
        for _ in range(20):
            stats = _random_stats(rng)
            precision = np.eye(2)
            b = np.zeros(2)
            for c in range(2):
                tc = t_blocks[c] / sigma_blocks[c][:, None]
                precision += stats.n[c] * (t_blocks[c].T @ tc)
                b += tc.T @ stats.f[c]

            def neg_log_post(w):
                return 0.5 * w @ precision @ w - b @ w

            res = minimize(neg_log_post, np.zeros(2), method="BFGS",
                           options={"gtol": 1e-12})
            ivec = extract_ivector(tv, stats)
            assert np.allclose(ivec.w, res.x, atol=1e-4)
        assert time.monotonic() - start < 10.0

    def test_empty_stats_give_zero(self, rng):
        tv = _small_tv(rng)
        stats = BaumWelchStats(np.zeros(2), np.zeros((2, 2)), 0)
        assert np.array_equal(extract_ivector(tv, stats).w, np.zeros(2))

    def test_zero_t_gives_zero(self, rng):
        tv = TotalVariability(np.zeros(4), np.zeros((4, 2)), np.ones(4), 2, 2)
        ivec = extract_ivector(tv, _random_stats(rng))
        assert np.array_equal(ivec.w, np.zeros(2))

    def test_linear_in_first_order_stats(self, rng):
        tv = _small_tv(rng)
        stats = _random_stats(rng)
        scaled = BaumWelchStats(stats.n, 3.0 * stats.f, stats.total_frames)
        w1 = extract_ivector(tv, stats).w
        w3 = extract_ivector(tv, scaled).w
        assert np.allclose(w3, 3.0 * w1, atol=1e-9)

    def test_shape_mismatch(self, rng):
        tv = _small_tv(rng)
        stats = BaumWelchStats(np.zeros(3), np.zeros((3, 2)), 0)
        with pytest.raises(ValueError):
            extract_ivector(tv, stats)

    def test_metadata_carried(self, rng):
        ivec = extract_ivector(_small_tv(rng), _random_stats(rng),
                               source_id="spk1", feature_kind="lpr")
        assert ivec.source_id == "spk1"
        assert ivec.feature_kind == "lpr"


class TestTraining:
    def _synthetic(self, rng, n_utts=200, c=4, d=5, rank=3, frames=120):
        # components far apart so UBM responsibilities are near-hard and the
        # first-order statistics carry an unbiased view of the latent shift
        means = 10.0 * rng.standard_normal((c, d))
        ubm = DiagGmm(np.full(c, 1.0 / c), means, np.ones((c, d)))
        t_true = rng.standard_normal((c * d, rank))
        stats_list = []
        for _ in range(n_utts):
            w = rng.standard_normal(rank)
            shift = (t_true @ w).reshape(c, d)
            frames_x = []
            for _ in range(frames):
                comp = rng.integers(c)
                frames_x.append(means[comp] + shift[comp]
                                + rng.standard_normal(d))
            fm = FeatureMatrix(np.array(frames_x), 0.01, "mfcc", "u")
            stats_list.append(accumulate_stats(ubm, fm))
        return ubm, t_true, stats_list

    def test_subspace_recovery(self, rng):
        start = time.monotonic()
        ubm, t_true, stats_list = self._synthetic(rng)
        tv = train_tv(ubm, stats_list, rank=3, n_iters=10, seed=0)
        q_true, _ = np.linalg.qr(t_true)
        q_est, _ = np.linalg.qr(tv.t_matrix)
        cosines = np.clip(np.linalg.svd(q_true.T @ q_est)[1], 0, 1)
        angles = np.degrees(np.arccos(cosines))
        assert np.all(angles < 5.0)
        assert time.monotonic() - start < 30.0

    def test_objective_monotone(self, rng):
        ubm, _, stats_list = self._synthetic(rng, n_utts=40)
        tv = train_tv(ubm, stats_list, rank=2, n_iters=8, seed=0)
        hist = np.array(tv.objective_history)
        assert hist.size == 8
        scale = max(np.abs(hist).max(), 1.0)
        assert np.all(np.diff(hist) >= -1e-6 * scale)

    def test_needs_two_utterances(self, rng):
        ubm, _, stats_list = self._synthetic(rng, n_utts=2, frames=20)
        with pytest.raises(ValueError):
            train_tv(ubm, stats_list[:1], rank=2)

    def test_rank_exceeds_supervector(self, rng):
        ubm = DiagGmm(np.array([1.0]), np.zeros((1, 2)), np.ones((1, 2)))
        with pytest.raises(ValueError):
            init_tv(ubm, rank=3)


class TestLengthNormalize:
    def test_unit_norm(self, rng):
        ivec = IVector(rng.standard_normal(5), "s", "lpr")
        out = length_normalize(ivec)
        assert np.linalg.norm(out.w) == pytest.approx(1.0)
        assert out.source_id == "s" and out.feature_kind == "lpr"

    def test_zero_vector_unchanged(self):
        out = length_normalize(IVector(np.zeros(3)))
        assert np.array_equal(out.w, np.zeros(3))


class TestModelIo:
    def test_round_trip_with_tv(self, tmp_path, rng):
        frames = [FeatureMatrix(rng.standard_normal((400, 3)), 0.01, "mfcc", "u")]
        ubm = train_ubm(frames, n_components=2, n_iters=3, seed=0)
        tv = init_tv(ubm, rank=2, seed=1)
        path = tmp_path / "model.ssdm"
        write_model(path, ubm, tv)
        ubm2, tv2 = read_model(path)
        assert np.array_equal(ubm2.weights, ubm.weights)
        assert np.array_equal(ubm2.means, ubm.means)
        assert np.array_equal(ubm2.variances, ubm.variances)
        assert np.array_equal(tv2.t_matrix, tv.t_matrix)
        assert np.array_equal(tv2.m, tv.m)
        assert np.array_equal(tv2.sigma, tv.sigma)

    def test_round_trip_ubm_only(self, tmp_path, rng):
        frames = [FeatureMatrix(rng.standard_normal((300, 2)), 0.01, "mfcc", "u")]
        ubm = train_ubm(frames, n_components=2, n_iters=2, seed=0)
        path = tmp_path / "model.ssdm"
        write_model(path, ubm)
        ubm2, tv2 = read_model(path)
        assert tv2 is None
        assert np.array_equal(ubm2.means, ubm.means)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "model.ssdm"
        path.write_bytes(b"XXXX" + bytes(20))
        with pytest.raises(ArchiveFormatError):
            read_model(path)

    def test_truncated(self, tmp_path, rng):
        frames = [FeatureMatrix(rng.standard_normal((300, 2)), 0.01, "mfcc", "u")]
        ubm = train_ubm(frames, n_components=2, n_iters=2, seed=0)
        path = tmp_path / "model.ssdm"
        write_model(path, ubm, init_tv(ubm, rank=2))
        data = path.read_bytes()
        path.write_bytes(data[:len(data) - 9])
        with pytest.raises(ArchiveFormatError, match="truncated"):
            read_model(path)
