import numpy as np
import pytest
from scipy.optimize import minimize

from ssd_screen.backend import (evaluate, lda_fit, logreg_objective,
                                logreg_train, majority_vote, pairwise_compare,
                                stack_accuracies, svm_objective, svm_train,
                                train_pair_classifier)


def _svm_oracle(x, y, c_param):
    """Minimize the exact hinge objective with a smoothed-start BFGS polish."""
    y_signed = np.where(np.asarray(y) == 1, 1.0, -1.0)
    ones = np.ones(len(y))

    def obj(params):
        return svm_objective(params[:-1], params[-1], x, y_signed, c_param, ones)

    best = None
    for start in (np.zeros(x.shape[1] + 1), np.r_[y_signed @ x / len(y), 0.0]):
        res = minimize(obj, start, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12,
                                "maxiter": 20000, "maxfev": 20000})
        if best is None or res.fun < best:
            best = res.fun
    return best


class TestSvm:
    FIXTURES = [
        (np.array([[-2.0], [-1.0], [1.0], [2.0]]), np.array([0, 0, 1, 1]), 1.0),
        (np.array([[0.0, 1.0], [1.0, 0.0], [2.0, 2.0], [3.0, 3.0]]),
         np.array([0, 0, 1, 1]), 1.0),
        (np.array([[-1.0, 0.5], [-0.5, -1.0], [0.5, 1.0], [1.0, -0.5],
                   [0.2, 0.2], [-0.2, -0.2]]),
         np.array([0, 0, 1, 1, 1, 0]), 0.5),
        (np.array([[0.0], [0.5], [1.0], [1.5], [0.75]]),
         np.array([0, 0, 1, 1, 0]), 2.0),
        (np.array([[1.0, 1.0], [2.0, 2.0], [1.1, 0.9], [2.1, 1.9]]),
         np.array([0, 1, 0, 1]), 1.0),
    ]

    @pytest.mark.parametrize("idx", range(5))
    def test_within_one_percent_of_oracle(self, idx):
        x, y, c = self.FIXTURES[idx]
        model = svm_train(x, y, c_param=c)
        y_signed = np.where(y == 1, 1.0, -1.0)
        achieved = svm_objective(model.weights, model.bias, x, y_signed, c,
                                 np.ones(len(y)))
        oracle = _svm_oracle(x, y, c)
        assert achieved <= oracle * 1.01 + 1e-9

    def test_separable_one_dimensional(self):
        x = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        y = np.array([0, 0, 1, 1])
        model = svm_train(x, y)
        assert np.array_equal(model.predict(x).ravel(), y)

    def test_xor_not_linearly_separable(self):
        x = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        y = np.array([0, 0, 1, 1])
        model = svm_train(x, y)
        acc = np.mean(model.predict(x).ravel() == y)
        assert acc <= 0.75

    def test_class_weights_shift_boundary(self):
        # 1 positive vs 5 negatives at the same margin; upweighting the
        # positive class pulls the boundary toward the negatives
        x = np.array([[1.0], [-1.0], [-1.0], [-1.0], [-1.0], [-1.0]])
        y = np.array([1, 0, 0, 0, 0, 0])
        plain = svm_train(x, y)
        balanced = svm_train(x, y, class_weights={0: 0.6, 1: 3.0})
        assert balanced.decision(np.array([[0.0]]))[0] \
            > plain.decision(np.array([[0.0]]))[0]

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            svm_train(np.zeros((3, 2)), np.array([1, 1, 1]))


class TestLda:
    def test_direction_matches_fisher_closed_form(self, rng):
        mu0, mu1 = np.array([0.0, 0.0]), np.array([3.0, 1.0])
        cov = np.array([[2.0, 0.4], [0.4, 0.5]])
        chol = np.linalg.cholesky(cov)
        x0 = rng.standard_normal((300, 2)) @ chol.T + mu0
        x1 = rng.standard_normal((300, 2)) @ chol.T + mu1
        x = np.vstack([x0, x1])
        y = np.array([0] * 300 + [1] * 300)
        model = lda_fit(x, y)
        s_w = (np.cov(x0.T, bias=False) * 299 + np.cov(x1.T, bias=False) * 299)
        expected = np.linalg.solve(s_w, x1.mean(0) - x0.mean(0))
        got = model.projection[:, 0]
        cosine = abs(got @ expected) / (np.linalg.norm(got)
                                        * np.linalg.norm(expected))
        assert cosine > 0.99

    def test_projected_separation(self, rng):
        x = rng.standard_normal((100, 5))
        x[50:, 0] += 4
        y = np.array([0] * 50 + [1] * 50)
        model = lda_fit(x, y)
        z = model.transform(x).ravel()
        assert abs(z[:50].mean() - z[50:].mean()) > 2 * (z[:50].std()
                                                         + z[50:].std())

    def test_degenerate_flag_on_identical_means(self, rng):
        x = rng.standard_normal((60, 3))
        y = np.array([0, 1] * 30)  # random split: class means nearly equal
        x[y == 1] = x[y == 0]      # exactly equal class distributions
        model = lda_fit(x, y)
        assert model.degenerate

    def test_n_dims_bound(self, rng):
        x = rng.standard_normal((40, 3))
        y = np.array([0, 1] * 20)
        with pytest.raises(ValueError):
            lda_fit(x, y, n_dims=2)

    def test_single_class_rejected(self, rng):
        with pytest.raises(ValueError):
            lda_fit(rng.standard_normal((10, 2)), np.zeros(10, dtype=int))

    def test_tiny_class_rejected(self, rng):
        x = rng.standard_normal((5, 2))
        with pytest.raises(ValueError):
            lda_fit(x, np.array([0, 0, 0, 0, 1]))


class TestLogreg:
    def test_loss_non_increasing(self, rng):
        x = rng.standard_normal((80, 3))
        y = (x[:, 0] + 0.5 * rng.standard_normal(80) > 0).astype(int)
        model = logreg_train(x, y, n_iters=100)
        hist = np.array(model.loss_history)
        assert np.all(np.diff(hist) <= 1e-12)

    def test_near_optimal(self, rng):
        x = rng.standard_normal((40, 2))
        y = (x[:, 0] > 0).astype(int)
        model = logreg_train(x, y, n_iters=500)
        y_signed = np.where(y == 1, 1.0, -1.0)

        def obj(params):
            return logreg_objective(params[:-1], params[-1], x, y_signed, 1.0)

        res = minimize(obj, np.zeros(3), method="BFGS")
        achieved = logreg_objective(model.weights, model.bias, x, y_signed, 1.0)
        assert achieved <= res.fun * 1.001 + 1e-6

    def test_symmetric_data_zero_bias(self):
        x = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        y = np.array([0, 0, 1, 1])
        model = logreg_train(x, y)
        assert abs(model.bias) < 1e-6

    def test_proba_monotone_in_decision(self, rng):
        x = rng.standard_normal((30, 2))
        y = (x[:, 0] > 0).astype(int)
        model = logreg_train(x, y, n_iters=100)
        grid = np.linspace(-3, 3, 50)[:, None] * np.array([[1.0, 0.0]])
        probs = model.predict_proba(grid).ravel()
        assert np.all(np.diff(probs) >= 0)
        assert np.all((probs > 0) & (probs < 1))

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            logreg_train(np.zeros((3, 1)), np.array([0, 0, 0]))


class TestMajorityVote:
    def test_clear_majority(self):
        assert majority_vote([1, 1, 0]) == 1
        assert majority_vote([0, 0, 1]) == 0

    def test_tie_goes_positive(self):
        assert majority_vote([1, 0]) == 1

    def test_single_vote(self):
        assert majority_vote([0]) == 0
        assert majority_vote([1]) == 1

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            majority_vote([])


class TestPairwise:
    def _groups(self, rng):
        centers = {"p": np.array([0.0, 0.0]), "t": np.array([10.0, 0.0]),
                   "k": np.array([0.0, 10.0])}
        return {c: [mu + 0.1 * rng.standard_normal(2) for _ in range(6)]
                for c, mu in centers.items()}

    def test_same_consonant_judged_same(self, rng):
        groups = self._groups(rng)
        lr = train_pair_classifier(groups, seed=0)
        segments = [("p", groups["p"][0]), ("t", groups["t"][0])]
        acc = pairwise_compare(segments, groups, lr)
        assert acc["p"] > 0.9 and acc["t"] > 0.9

    def test_substituted_consonant_judged_different(self, rng):
        groups = self._groups(rng)
        lr = train_pair_classifier(groups, seed=0)
        # a /t/-like embedding claimed to be /p/ sits far from every reference
        acc = pairwise_compare([("p", groups["t"][0])], groups, lr)
        assert acc["p"] < 0.1

    def test_missing_reference(self, rng):
        groups = self._groups(rng)
        lr = train_pair_classifier(groups, seed=0)
        with pytest.raises(ValueError):
            pairwise_compare([("s", np.zeros(2))], groups, lr)

    def test_single_group_rejected(self, rng):
        with pytest.raises(ValueError):
            train_pair_classifier({"p": [rng.standard_normal(2)
                                         for _ in range(3)]})


class TestAccuracyStack:
    def test_ordering_and_missing(self, caplog):
        per = {"p": 0.9, "t": 0.4}
        stack = stack_accuracies(per, ("t", "k", "p"))
        assert np.allclose(stack.values, [0.4, 0.5, 0.9])
        assert stack.missing == ("k",)

    def test_missing_logged(self, caplog):
        import logging
        with caplog.at_level(logging.WARNING, logger="ssd_screen.backend"):
            stack_accuracies({}, ("p",))
        assert any("no observations" in r.message for r in caplog.records)

    def test_order_permutation(self):
        per = {"p": 0.9, "t": 0.4, "k": 0.7}
        a = stack_accuracies(per, ("p", "t", "k"))
        b = stack_accuracies(per, ("k", "p", "t"))
        assert np.allclose(a.values[[2, 0, 1]], b.values)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            stack_accuracies({"p": 1.5}, ("p",))


class TestEvaluate:
    def test_hand_example(self):
        # 10 positives with 6 correct, 10 negatives with 8 correct:
        # UAR = (0.6 + 0.8) / 2 = 0.7
        truths = np.array([1] * 10 + [0] * 10)
        preds = np.array([1] * 6 + [0] * 4 + [0] * 8 + [1] * 2)
        m = evaluate(preds, truths)
        assert m.uar == pytest.approx(0.7)
        assert (m.tp, m.fn, m.tn, m.fp) == (6, 4, 8, 2)

    def test_perfect(self):
        truths = np.array([0, 1, 0, 1])
        m = evaluate(truths, truths)
        assert m.uar == 1.0 and m.macro_f1 == 1.0

    def test_brute_force_cross_check(self, rng):
        for _ in range(1000):
            n = rng.integers(4, 20)
            truths = rng.integers(0, 2, n)
            if np.unique(truths).size < 2:
                continue
            preds = rng.integers(0, 2, n)
            m = evaluate(preds, truths)
            recalls = []
            f1s = []
            for cls in (0, 1):
                members = truths == cls
                correct = np.sum(preds[members] == cls)
                recall = correct / members.sum()
                recalls.append(recall)
                claimed = preds == cls
                precision = (np.sum(truths[claimed] == cls) / claimed.sum()
                             if claimed.any() else 0.0)
                f1s.append(0.0 if precision + recall == 0
                           else 2 * precision * recall / (precision + recall))
            assert m.uar == pytest.approx(np.mean(recalls), abs=1e-12)
            assert m.macro_f1 == pytest.approx(np.mean(f1s), abs=1e-12)

    def test_single_class_truths_rejected(self):
        with pytest.raises(ValueError):
            evaluate(np.array([0, 1]), np.array([1, 1]))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            evaluate(np.array([0, 1]), np.array([0, 1, 0]))
