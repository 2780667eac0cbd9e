"""Heart-failure classifiers, rank AUC and the 7-chunk / 6-fold harness."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .features import FeatureMatrix, apply_standardizer, fit_standardizer
from .skipgram import AdadeltaState, adadelta_step

KINDS = ("logistic_regression", "linear_svm", "mlp", "knn")
N_CHUNKS = 7
N_FOLDS = 6


@dataclass
class ClassifierSpec:
    kind: str
    l2: float = 0.0
    hidden_size: int | None = None
    k_neighbors: int | None = None
    max_epoch: int = 100
    rho: float = 0.95
    eps: float = 1e-6

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        if self.kind == "mlp" and not (self.hidden_size and self.hidden_size > 0):
            raise ValueError("mlp needs a positive hidden_size")
        if self.kind == "knn" and not (self.k_neighbors and self.k_neighbors > 0):
            raise ValueError("knn needs a positive k_neighbors")
        if self.max_epoch < 1:
            raise ValueError("max_epoch must be >= 1")


# Default hyper-parameters per (classifier, feature kind).
DEFAULT_SPECS = {
    ("logistic_regression", "one_hot_counts"): dict(l2=0.1, max_epoch=100),
    ("logistic_regression", "concept_vector"): dict(l2=0.01, max_epoch=100),
    ("linear_svm", "one_hot_counts"): dict(l2=1e-6),
    ("linear_svm", "concept_vector"): dict(l2=1e-3),
    ("mlp", "one_hot_counts"): dict(l2=0.01, hidden_size=15, max_epoch=100),
    ("mlp", "concept_vector"): dict(l2=1e-3, hidden_size=100, max_epoch=100),
    ("knn", "one_hot_counts"): dict(k_neighbors=15),
    ("knn", "concept_vector"): dict(k_neighbors=100),
}


def default_spec(kind: str, feature_kind: str) -> ClassifierSpec:
    return ClassifierSpec(kind, **DEFAULT_SPECS[(kind, feature_kind)])


# ---------------------------------------------------------------- metric

def auc(scores, labels) -> float:
    """Mann-Whitney AUC with mid-ranks for tied scores."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    # boundaries of runs of equal scores
    starts = np.flatnonzero(np.r_[True, sorted_scores[1:] != sorted_scores[:-1]])
    ends = np.r_[starts[1:], len(scores)]
    mid = (starts + ends + 1) / 2.0  # average of 1-based ranks starts+1 .. ends
    ranks = np.empty(len(scores))
    ranks[order] = np.repeat(mid, ends - starts)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


# ---------------------------------------------------------------- folds

@dataclass
class Fold:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    validation_chunk: int
    test_chunk: int


def make_chunks(labels, seed: int) -> list[np.ndarray]:
    """Stratified split into 7 chunks: shuffle each class, deal round-robin.

    Controls continue dealing where cases stopped so chunk sizes stay within one.
    """
    labels = np.asarray(labels)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if len(pos) < N_CHUNKS or len(neg) < N_CHUNKS:
        raise ValueError(f"need at least {N_CHUNKS} patients per class")
    rng = np.random.default_rng(seed)
    pos = rng.permutation(pos)
    neg = rng.permutation(neg)
    chunk_of = np.empty(len(labels), dtype=np.int64)
    chunk_of[pos] = np.arange(len(pos)) % N_CHUNKS
    chunk_of[neg] = (np.arange(len(neg)) + len(pos)) % N_CHUNKS
    return [np.flatnonzero(chunk_of == c) for c in range(N_CHUNKS)]


def make_folds(labels, seed: int) -> list[Fold]:
    chunks = make_chunks(labels, seed)
    folds = []
    for i in range(N_FOLDS):
        train = np.sort(np.concatenate([chunks[c] for c in range(N_CHUNKS) if c not in (i, i + 1)]))
        folds.append(Fold(train, chunks[i], chunks[i + 1], i, i + 1))
    return folds


# ---------------------------------------------------------------- models

def _sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


def _log1pexp(s):
    return np.logaddexp(0.0, s)


def _check_inputs(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("rows must be 2-D with one label per row")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite training inputs")
    return X, y


def logreg_loss_grad(params, X, y, l2):
    """Mean cross-entropy + l2/2 * |w|^2 and its gradient."""
    w, b = params["w"], params["b"]
    s = X @ w + b
    loss = np.mean(_log1pexp(s) - y * s) + 0.5 * l2 * (w @ w)
    r = (_sigmoid(s) - y) / len(y)
    return loss, {"w": X.T @ r + l2 * w, "b": np.array([r.sum()])}


def svm_loss_grad(params, X, y, l2):
    """Mean squared hinge + l2/2 * |w|^2; ``y`` in {0, 1} is mapped to +-1."""
    w, b = params["w"], params["b"]
    t = 2.0 * y - 1.0
    margin = np.maximum(0.0, 1.0 - t * (X @ w + b))
    loss = np.mean(margin**2) + 0.5 * l2 * (w @ w)
    r = -2.0 * t * margin / len(y)
    return loss, {"w": X.T @ r + l2 * w, "b": np.array([r.sum()])}


def mlp_forward(params, X):
    h = np.tanh(X @ params["W1"] + params["b1"])
    return h, h @ params["w2"] + params["b2"]


def mlp_loss_grad(params, X, y, l2):
    """tanh hidden layer, sigmoid output; cross-entropy + l2/2 * sum of squared weights."""
    W1, w2 = params["W1"], params["w2"]
    h, s = mlp_forward(params, X)
    loss = (np.mean(_log1pexp(s) - y * s)
            + 0.5 * l2 * (np.sum(W1 * W1) + w2 @ w2))
    r = (_sigmoid(s) - y) / len(y)
    dh = np.outer(r, w2) * (1.0 - h * h)
    grads = {
        "W1": X.T @ dh + l2 * W1,
        "b1": dh.sum(axis=0),
        "w2": h.T @ r + l2 * w2,
        "b2": np.array([r.sum()]),
    }
    return loss, grads


@dataclass
class LinearModel:
    w: np.ndarray
    b: float
    probabilistic: bool
    best_epoch: int = 0
    losses: list = field(default_factory=list, repr=False)

    def score(self, X):
        s = np.asarray(X, dtype=np.float64) @ self.w + self.b
        return _sigmoid(s) if self.probabilistic else s


@dataclass
class MLPModel:
    params: dict
    best_epoch: int = 0
    losses: list = field(default_factory=list, repr=False)

    def score(self, X):
        _, s = mlp_forward(self.params, np.asarray(X, dtype=np.float64))
        return _sigmoid(s)


def _adadelta_fit(params, loss_grad, X, y, spec: ClassifierSpec, score_fn, validation):
    """Full-batch Adadelta descent for ``spec.max_epoch`` epochs.

    With ``validation=(Xv, yv)`` the parameters from the epoch with the best
    validation AUC are returned (earliest epoch on ties); otherwise the last.
    """
    states = {k: AdadeltaState.zeros_like(v) for k, v in params.items()}
    best, best_auc, best_epoch = None, -np.inf, spec.max_epoch
    losses = []
    for epoch in range(1, spec.max_epoch + 1):
        loss, grads = loss_grad(params, X, y, spec.l2)
        losses.append(float(loss))
        for k in params:
            adadelta_step(states[k], -grads[k], params[k], spec.rho, spec.eps)
        if validation is not None:
            v_auc = auc(score_fn(params, validation[0]), validation[1])
            if v_auc > best_auc:
                best_auc, best_epoch = v_auc, epoch
                best = {k: v.copy() for k, v in params.items()}
    return (best if best is not None else params), best_epoch, losses


def train_logreg(rows, labels, spec: ClassifierSpec, seed: int = 0, validation=None) -> LinearModel:
    X, y = _check_inputs(rows, labels)
    params = {"w": np.zeros(X.shape[1]), "b": np.zeros(1)}
    score = lambda p, Xv: Xv @ p["w"] + p["b"]
    p, epoch, losses = _adadelta_fit(params, logreg_loss_grad, X, y, spec, score, validation)
    return LinearModel(p["w"], float(p["b"][0]), True, epoch, losses)


def train_svm(rows, labels, spec: ClassifierSpec, seed: int = 0, validation=None) -> LinearModel:
    X, y = _check_inputs(rows, labels)
    params = {"w": np.zeros(X.shape[1]), "b": np.zeros(1)}
    score = lambda p, Xv: Xv @ p["w"] + p["b"]
    p, epoch, losses = _adadelta_fit(params, svm_loss_grad, X, y, spec, score, validation)
    return LinearModel(p["w"], float(p["b"][0]), False, epoch, losses)


def init_mlp(n_features: int, hidden: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    return {
        "W1": rng.uniform(-0.05, 0.05, size=(n_features, hidden)),
        "b1": np.zeros(hidden),
        "w2": rng.uniform(-0.05, 0.05, size=hidden),
        "b2": np.zeros(1),
    }


def train_mlp(rows, labels, spec: ClassifierSpec, seed: int = 0, validation=None) -> MLPModel:
    X, y = _check_inputs(rows, labels)
    params = init_mlp(X.shape[1], spec.hidden_size, seed)
    score = lambda p, Xv: mlp_forward(p, Xv)[1]
    p, epoch, losses = _adadelta_fit(params, mlp_loss_grad, X, y, spec, score, validation)
    return MLPModel(p, epoch, losses)


def knn_scores(train_rows, train_labels, queries, k: int, chunk_bytes: int = 1 << 24) -> np.ndarray:
    """Positive fraction among the k Euclidean-nearest training rows, per query.

    Distance ties go to the lower training row index.
    """
    X = np.asarray(train_rows, dtype=np.float64)
    y = np.asarray(train_labels, dtype=np.float64)
    Q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if not 1 <= k <= len(X):
        raise ValueError(f"k={k} must be between 1 and the number of training rows ({len(X)})")
    step = max(1, chunk_bytes // max(1, X.size * 8))
    out = np.empty(len(Q))
    for start in range(0, len(Q), step):
        q = Q[start:start + step]
        d2 = np.sum((q[:, None, :] - X[None, :, :]) ** 2, axis=2)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        out[start:start + step] = y[nearest].mean(axis=1)
    return out


def knn_score(train_rows, train_labels, query_row, k: int) -> float:
    return float(knn_scores(train_rows, train_labels, [query_row], k)[0])


TRAINERS = {"logistic_regression": train_logreg, "linear_svm": train_svm, "mlp": train_mlp}


# ---------------------------------------------------------------- experiment

@dataclass
class EvalReport:
    classifier: ClassifierSpec
    feature_kind: str
    per_fold_auc: list[float]
    mean_auc: float
    std_auc: float
    train_seconds_per_fold: list[float] | None = None
    best_epoch_per_fold: list[int] | None = None

    def to_dict(self, timing: bool = True) -> dict:
        return {
            "classifier": asdict(self.classifier),
            "feature_kind": self.feature_kind,
            "per_fold_auc": self.per_fold_auc,
            "mean_auc": self.mean_auc,
            "std_auc": self.std_auc,
            "train_seconds_per_fold": self.train_seconds_per_fold if timing else None,
            "best_epoch_per_fold": self.best_epoch_per_fold,
        }

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True) + "\n"


def run_fold(features: FeatureMatrix, fold: Fold, spec: ClassifierSpec, seed: int):
    """Return (test AUC, seconds, best epoch) for one fold."""
    scaler = fit_standardizer(features.rows[fold.train])
    Xtr = apply_standardizer(scaler, features.rows[fold.train])
    Xva = apply_standardizer(scaler, features.rows[fold.validation])
    Xte = apply_standardizer(scaler, features.rows[fold.test])
    ytr = features.labels[fold.train]
    yva = features.labels[fold.validation]
    yte = features.labels[fold.test]
    t0 = time.perf_counter()
    if spec.kind == "knn":
        scores = knn_scores(Xtr, ytr, Xte, spec.k_neighbors)
        seconds = time.perf_counter() - t0
        return auc(scores, yte), seconds, 0
    model = TRAINERS[spec.kind](Xtr, ytr, spec, seed=seed, validation=(Xva, yva))
    seconds = time.perf_counter() - t0
    return auc(model.score(Xte), yte), seconds, model.best_epoch


def run_experiment(features: FeatureMatrix, spec: ClassifierSpec, seed: int) -> EvalReport:
    """6-fold evaluation: standardize on train, select epoch on validation, score test."""
    aucs, secs, epochs = [], [], []
    for fold in make_folds(features.labels, seed):
        a, s, e = run_fold(features, fold, spec, seed)
        aucs.append(a)
        secs.append(s)
        epochs.append(e)
    arr = np.array(aucs)
    return EvalReport(spec, features.feature_kind, aucs, float(arr.mean()), float(arr.std()),
                      secs, epochs)
