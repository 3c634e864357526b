"""Supervised back-ends and decision logic.

LDA reduction with shrinkage, a linear SVM trained by deterministic
subgradient descent, L2-regularized logistic regression, majority-vote and
pairwise accuracy-stacking fusion, and UAR / macro-F1 metrics. Positive
label 1 marks disordered speakers.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# LDA

@dataclass
class LdaModel:
    projection: np.ndarray   # (D, K)
    class_means: dict        # label -> projected mean
    eigenvalues: np.ndarray
    degenerate: bool = False

    def transform(self, x):
        return np.atleast_2d(x) @ self.projection


def lda_fit(vectors, labels, n_dims=None):
    """Fisher LDA: top generalized eigenvectors of (S_w + lambda I)^-1 S_b.

    Shrinkage lambda = 1e-6 tr(S_w)/D keeps S_w invertible on small folds.
    `n_dims` defaults to (number of classes - 1) and may not exceed it.
    """
    x = np.asarray(vectors, dtype=np.float64)
    y = np.asarray(labels)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("LDA needs at least 2 classes")
    max_dims = classes.size - 1
    if n_dims is None:
        n_dims = max_dims
    if not 1 <= n_dims <= max_dims:
        raise ValueError(f"n_dims must be in [1, {max_dims}], got {n_dims}")
    dim = x.shape[1]
    overall_mean = x.mean(axis=0)
    s_w = np.zeros((dim, dim))
    s_b = np.zeros((dim, dim))
    for cls in classes:
        xc = x[y == cls]
        if xc.shape[0] < 2:
            raise ValueError(f"class {cls!r} has fewer than 2 samples")
        mu = xc.mean(axis=0)
        centered = xc - mu
        s_w += centered.T @ centered
        diff = (mu - overall_mean)[:, None]
        s_b += xc.shape[0] * (diff @ diff.T)
    lam = 1e-6 * np.trace(s_w) / dim
    if lam <= 0:
        lam = 1e-12
    eigvals, eigvecs = scipy.linalg.eigh(s_b, s_w + lam * np.eye(dim))
    order = np.argsort(eigvals)[::-1][:n_dims]
    projection = eigvecs[:, order]
    top = eigvals[order]
    degenerate = bool(top[0] < 1e-10)
    if degenerate:
        logger.warning("LDA: top discriminant eigenvalue %.3g is ~0 "
                       "(identical class means?)", top[0])
    class_means = {cls: (x[y == cls].mean(axis=0) @ projection) for cls in classes}
    return LdaModel(projection, class_means, top, degenerate)


# ---------------------------------------------------------------------------
# Linear SVM

@dataclass
class LinearSvmModel:
    weights: np.ndarray
    bias: float
    c_param: float = 1.0

    def decision(self, x):
        return np.atleast_2d(x) @ self.weights + self.bias

    def predict(self, x):
        return (self.decision(x) >= 0).astype(int)


def svm_objective(weights, bias, x, y_signed, c_param, sample_weights):
    margins = y_signed * (x @ weights + bias)
    hinge = np.maximum(0.0, 1.0 - margins)
    return 0.5 * float(weights @ weights) + c_param * float(sample_weights @ hinge)


def svm_train(vectors, labels, c_param=1.0, class_weights=None, n_iters=5000):
    """Hinge-loss linear SVM by deterministic subgradient descent.

    Minimizes 0.5 ||w||^2 + C sum_i s_i max(0, 1 - y_i (w'x_i + b)) with
    decreasing steps 1/(t+1), returning the best iterate seen (by exact
    objective value). `class_weights` maps label -> multiplier s_i.
    """
    x = np.asarray(vectors, dtype=np.float64)
    y = np.asarray(labels)
    if np.unique(y).size < 2:
        raise ValueError("SVM needs both classes in the training data")
    y_signed = np.where(y == 1, 1.0, -1.0)
    if class_weights is None:
        sample_weights = np.ones(y.size)
    else:
        sample_weights = np.array([class_weights[int(v)] for v in y], dtype=np.float64)

    weights = np.zeros(x.shape[1])
    bias = 0.0
    best = (svm_objective(weights, bias, x, y_signed, c_param, sample_weights),
            weights.copy(), bias)
    for t in range(n_iters):
        margins = y_signed * (x @ weights + bias)
        viol = margins < 1.0
        coef = c_param * sample_weights[viol] * y_signed[viol]
        grad_w = weights - coef @ x[viol]
        grad_b = -coef.sum()
        step = 1.0 / (t + 1.0)
        weights = weights - step * grad_w
        bias = bias - step * grad_b
        obj = svm_objective(weights, bias, x, y_signed, c_param, sample_weights)
        if obj < best[0]:
            best = (obj, weights.copy(), bias)
    return LinearSvmModel(best[1], best[2], c_param)


# ---------------------------------------------------------------------------
# Logistic regression

@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    c_param: float = 1.0
    loss_history: list = field(default_factory=list)

    def decision(self, x):
        return np.atleast_2d(x) @ self.weights + self.bias

    def predict_proba(self, x):
        return 0.5 * (1.0 + np.tanh(0.5 * self.decision(x)))

    def predict(self, x):
        return (self.decision(x) >= 0).astype(int)


def logreg_objective(weights, bias, x, y_signed, c_param):
    z = y_signed * (x @ weights + bias)
    # log(1 + exp(-z)) computed stably
    loss = np.logaddexp(0.0, -z).sum()
    return 0.5 * float(weights @ weights) + c_param * float(loss)


def logreg_train(vectors, labels, c_param=1.0, n_iters=500):
    """L2-regularized logistic regression by gradient descent with backtracking.

    The backtracking line search makes the recorded per-iteration loss
    non-increasing.
    """
    x = np.asarray(vectors, dtype=np.float64)
    y = np.asarray(labels)
    if np.unique(y).size < 2:
        raise ValueError("logistic regression needs both classes")
    y_signed = np.where(y == 1, 1.0, -1.0)

    weights = np.zeros(x.shape[1])
    bias = 0.0
    loss = logreg_objective(weights, bias, x, y_signed, c_param)
    history = [loss]
    step = 1.0 / max(1.0, c_param * x.shape[0])
    for _ in range(n_iters):
        z = y_signed * (x @ weights + bias)
        sig = 0.5 * (1.0 - np.tanh(0.5 * z))  # sigmoid(-z)
        grad_w = weights - c_param * ((sig * y_signed) @ x)
        grad_b = -c_param * float(sig @ y_signed)
        trial = step * 2.0
        while True:
            new_w = weights - trial * grad_w
            new_b = bias - trial * grad_b
            new_loss = logreg_objective(new_w, new_b, x, y_signed, c_param)
            if new_loss <= loss or trial < 1e-15:
                break
            trial *= 0.5
        step = trial
        weights, bias, loss = new_w, new_b, new_loss
        history.append(loss)
    return LogisticModel(weights, bias, c_param, history)


# ---------------------------------------------------------------------------
# Fusion

def majority_vote(word_decisions):
    """Subject decision by majority; ties go to the positive (disordered) class."""
    decisions = list(word_decisions)
    if not decisions:
        raise ValueError("no word decisions to vote on")
    positives = sum(1 for d in decisions if d == 1)
    return 1 if 2 * positives >= len(decisions) else 0


def train_pair_classifier(reference_groups, seed=0, negative_ratio=1.0):
    """LR on L1 distances of embedding pairs: same consonant vs different.

    `reference_groups` maps consonant -> list of embeddings from TD speech.
    Same-consonant pairs are labeled 1; different-consonant pairs (sampled
    at `negative_ratio` times the positive count) are labeled 0.
    """
    rng = np.random.default_rng(seed)
    consonants = sorted(reference_groups)
    pos = []
    for cons in consonants:
        embs = reference_groups[cons]
        for i in range(len(embs)):
            for j in range(i + 1, len(embs)):
                pos.append(np.abs(embs[i] - embs[j]).sum())
    if not pos:
        raise ValueError("no same-consonant pairs available")
    n_neg = max(1, int(round(negative_ratio * len(pos))))
    neg = []
    if len(consonants) < 2:
        raise ValueError("need at least 2 consonant groups for different pairs")
    for _ in range(n_neg):
        a, b = rng.choice(len(consonants), 2, replace=False)
        ea = reference_groups[consonants[a]]
        eb = reference_groups[consonants[b]]
        neg.append(np.abs(ea[rng.integers(len(ea))] - eb[rng.integers(len(eb))]).sum())
    feats = np.array(pos + neg)[:, None]
    labels = np.array([1] * len(pos) + [0] * len(neg))
    return logreg_train(feats, labels)


def pairwise_compare(test_segments, reference_groups, pair_lr):
    """Per-consonant detection accuracy from pairwise test-reference comparison.

    `test_segments` is a list of (consonant, embedding); each segment is
    compared with every reference embedding of its target consonant, and the
    accuracy for a consonant is the fraction of its pairs the classifier
    judges "same".
    """
    per_pair = {}
    for cons, emb in test_segments:
        if cons not in reference_groups or not len(reference_groups[cons]):
            raise ValueError(f"no reference embeddings for consonant {cons!r}")
        dists = np.array([np.abs(emb - ref).sum() for ref in reference_groups[cons]])
        same = pair_lr.predict(dists[:, None])
        per_pair.setdefault(cons, []).extend(same.tolist())
    return {cons: float(np.mean(v)) for cons, v in per_pair.items()}


@dataclass
class AccuracyStack:
    """Per-consonant accuracies in a fixed order; missing slots hold 0.5."""

    values: np.ndarray
    consonant_order: tuple
    missing: tuple

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any((self.values < 0) | (self.values > 1)):
            raise ValueError("accuracies must lie in [0, 1]")


MISSING_ACCURACY = 0.5


def stack_accuracies(per_consonant, consonant_order):
    """Stack accuracies into the configured order; absent consonants get 0.5."""
    values = np.empty(len(consonant_order))
    missing = []
    for i, cons in enumerate(consonant_order):
        if cons in per_consonant:
            values[i] = per_consonant[cons]
        else:
            values[i] = MISSING_ACCURACY
            missing.append(cons)
    if missing:
        logger.warning("accuracy stack: no observations for %s; filled with %.1f",
                       missing, MISSING_ACCURACY)
    return AccuracyStack(values, tuple(consonant_order), tuple(missing))


# ---------------------------------------------------------------------------
# Metrics

@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    tn: int
    fn: int
    uar: float
    macro_f1: float


def _f1(precision, recall):
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def evaluate(predictions, truths):
    """UAR and macro F1 over binary decisions (positive = disordered)."""
    preds = np.asarray(predictions)
    trues = np.asarray(truths)
    if preds.shape != trues.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {trues.shape}")
    if np.unique(trues).size < 2:
        raise ValueError("truth labels contain a single class")
    tp = int(np.sum((preds == 1) & (trues == 1)))
    fp = int(np.sum((preds == 1) & (trues == 0)))
    tn = int(np.sum((preds == 0) & (trues == 0)))
    fn = int(np.sum((preds == 0) & (trues == 1)))
    recall_pos = tp / (tp + fn)
    recall_neg = tn / (tn + fp)
    uar = 0.5 * (recall_pos + recall_neg)
    prec_pos = tp / (tp + fp) if (tp + fp) else 0.0
    prec_neg = tn / (tn + fn) if (tn + fn) else 0.0
    macro_f1 = 0.5 * (_f1(prec_pos, recall_pos) + _f1(prec_neg, recall_neg))
    return Metrics(tp, fp, tn, fn, uar, macro_f1)
