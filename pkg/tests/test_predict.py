import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ehrvec.features import FeatureMatrix
from ehrvec.predict import (
    DEFAULT_SPECS,
    ClassifierSpec,
    auc,
    init_mlp,
    knn_score,
    knn_scores,
    logreg_loss_grad,
    make_chunks,
    make_folds,
    mlp_loss_grad,
    default_spec,
    run_experiment,
    svm_loss_grad,
    train_logreg,
    train_mlp,
    train_svm,
)

XOR_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_Y = np.array([0.0, 1.0, 1.0, 0.0])


def brute_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def separable(seed=0, n=40):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(float)
    X[:, 0] += np.where(y == 1, 0.5, -0.5)
    return X, y


# ---------------------------------------------------------------- auc

@pytest.mark.parametrize("pos,neg,expected", [
    ([0.9, 0.8], [0.7, 0.1], 1.0), ([0.8, 0.3], [0.5, 0.5], 0.5), ([0.5], [0.5], 0.5),
    ([0.1], [0.9], 0.0)])
def test_auc_examples(pos, neg, expected):
    assert auc(pos + neg, [1] * len(pos) + [0] * len(neg)) == expected


def test_auc_errors():
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        auc([0.1], [1, 0])


@st.composite
def scored_labels(draw):
    n = draw(st.integers(2, 50))
    labels = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda l: 0 < sum(l) < len(l)))
    scores = draw(st.lists(st.integers(0, 6).map(lambda v: v / 4), min_size=n, max_size=n))
    return scores, labels


@given(scored_labels())
def test_auc_matches_brute_force(data):
    scores, labels = data
    assert abs(auc(scores, labels) - brute_auc(scores, labels)) < 1e-12


@given(scored_labels())
def test_auc_invariant_under_increasing_transform(data):
    scores, labels = data
    a = auc(scores, labels)
    assert auc(np.exp(3 * np.asarray(scores)) - 7, labels) == a
    assert auc(np.asarray(scores) * 2.5 + 1, labels) == a
    # reversing the ranking complements the AUC
    assert auc(-np.asarray(scores), labels) == pytest.approx(1 - a, abs=1e-12)


# ---------------------------------------------------------------- folds

def test_fourteen_patients():
    labels = [1] * 7 + [0] * 7
    for chunk in make_chunks(labels, seed=3):
        assert len(chunk) == 2 and sorted(np.asarray(labels)[chunk]) == [0, 1]


def test_fold_rotation():
    labels = np.r_[np.ones(20), np.zeros(50)]
    folds = make_folds(labels, seed=1)
    assert len(folds) == 6
    assert sorted(f.test_chunk for f in folds) == [1, 2, 3, 4, 5, 6]
    assert [f.validation_chunk for f in folds] == [0, 1, 2, 3, 4, 5]
    for f in folds:
        parts = np.concatenate([f.train, f.validation, f.test])
        assert sorted(parts.tolist()) == list(range(70))
    a, b = make_folds(labels, seed=1), make_folds(labels, seed=1)
    assert all(np.array_equal(x.test, y.test) and np.array_equal(x.train, y.train) for x, y in zip(a, b))


def test_fold_too_small():
    with pytest.raises(ValueError):
        make_chunks([1] * 6 + [0] * 20, 0)


@given(st.integers(7, 60), st.integers(7, 200), st.integers(0, 2**31))
@settings(max_examples=50)
def test_chunks_stratified(n_pos, n_neg, seed):
    labels = np.random.default_rng(seed).permutation(np.r_[np.ones(n_pos), np.zeros(n_neg)])
    chunks = make_chunks(labels, seed)
    assert sorted(np.concatenate(chunks).tolist()) == list(range(len(labels)))
    rate = n_pos / len(labels)
    for c in chunks:
        assert abs(labels[c].sum() - rate * len(c)) <= 1
    sizes = [len(c) for c in chunks]
    assert max(sizes) - min(sizes) <= 1


# ---------------------------------------------------------------- gradients

def fd_check(loss_grad, params, X, y, l2, h=1e-5):
    _, grads = loss_grad(params, X, y, l2)
    worst = 0.0
    for k, v in params.items():
        for idx in np.ndindex(v.shape):
            up = {kk: vv.copy() for kk, vv in params.items()}
            dn = {kk: vv.copy() for kk, vv in params.items()}
            up[k][idx] += h
            dn[k][idx] -= h
            fd = (loss_grad(up, X, y, l2)[0] - loss_grad(dn, X, y, l2)[0]) / (2 * h)
            worst = max(worst, abs(fd - grads[k][idx]) / max(abs(fd), abs(grads[k][idx]), 1e-6))
    return worst


@given(st.integers(0, 2**31))
@settings(max_examples=30)
def test_logreg_and_svm_gradients(seed):
    rng = np.random.default_rng(seed)
    X, y = rng.normal(size=(5, 3)), rng.integers(0, 2, 5).astype(float)
    params = {"w": rng.normal(size=3), "b": rng.normal(size=1)}
    assert fd_check(logreg_loss_grad, params, X, y, 0.3) < 1e-4
    assert fd_check(svm_loss_grad, params, X, y, 0.3) < 1e-4


@given(st.integers(0, 2**31))
@settings(max_examples=30)
def test_mlp_gradient(seed):
    rng = np.random.default_rng(seed)
    X, y = rng.normal(size=(3, 4)), rng.integers(0, 2, 3).astype(float)
    params = {"W1": rng.normal(size=(4, 3)), "b1": rng.normal(size=3),
              "w2": rng.normal(size=3), "b2": rng.normal(size=1)}
    assert fd_check(mlp_loss_grad, params, X, y, 0.05) < 1e-4


# ---------------------------------------------------------------- models

@pytest.mark.parametrize("trainer", [train_logreg, train_svm])
def test_separable_toy(trainer):
    X, y = separable()
    m = trainer(X, y, ClassifierSpec("logistic_regression", max_epoch=300))
    s = m.score(X)
    assert auc(s, y) == 1.0
    threshold = 0.5 if m.probabilistic else 0.0
    assert np.mean((s > threshold) == (y == 1)) == 1.0


def test_logreg_heavy_l2():
    X, y = separable()
    m = train_logreg(X, y, ClassifierSpec("logistic_regression", l2=1e6, max_epoch=100))
    assert np.linalg.norm(m.w) < 1e-2


def test_logreg_flipped_labels():
    X, y = separable()
    X = np.vstack([X, -X])
    y = np.r_[y, 1 - y]
    spec = ClassifierSpec("logistic_regression", l2=0.01, max_epoch=50)
    a = train_logreg(X, y, spec).score(X)
    b = train_logreg(X, 1 - y, spec).score(X)
    np.testing.assert_allclose(a + b, 1.0, atol=1e-9)


def test_svm_scores_unbounded_and_affine_invariant():
    X, y = separable()
    m = train_svm(X * 10, y, ClassifierSpec("linear_svm", max_epoch=200))
    s = m.score(X * 10)
    assert s.max() > 1 or s.min() < -1
    assert auc(3 * s + 2, y) == auc(s, y)


def test_training_deterministic():
    X, y = separable(5)
    spec = ClassifierSpec("mlp", l2=1e-3, hidden_size=5, max_epoch=30)
    a, b = train_mlp(X, y, spec, seed=2), train_mlp(X, y, spec, seed=2)
    assert all(a.params[k].tobytes() == b.params[k].tobytes() for k in a.params)


def test_nonfinite_inputs_rejected():
    X, y = separable()
    X[0, 0] = np.inf
    for trainer in (train_logreg, train_svm):
        with pytest.raises(ValueError):
            trainer(X, y, ClassifierSpec("logistic_regression"))


def test_mlp_xor_hidden4():
    m = train_mlp(XOR_X, XOR_Y, ClassifierSpec("mlp", hidden_size=4, max_epoch=5000), seed=0)
    assert m.losses[-1] < 0.1
    assert auc(m.score(XOR_X), XOR_Y) == 1.0


def _isotonic_xent(y):
    """Minimal mean cross-entropy of a non-decreasing probability sequence (PAVA)."""
    blocks = []  # [sum, count]
    for v in y:
        blocks.append([v, 1])
        while len(blocks) > 1 and blocks[-2][0] / blocks[-2][1] > blocks[-1][0] / blocks[-1][1]:
            s, c = blocks.pop()
            blocks[-1][0] += s
            blocks[-1][1] += c
    loss = 0.0
    for s, c in blocks:
        p = s / c
        for q, w in ((p, s), (1 - p, c - s)):
            if w:
                loss -= w * math.log(q)
    return loss / len(y)


def test_xor_one_hidden_unit_lower_bound():
    # A single tanh unit makes the output a monotone function of one projection
    # of the input, so the loss is at least the best isotonic fit over every
    # ordering a projection can induce (orderings only change at 45-degree steps).
    bound = math.inf
    for k in range(8):
        a = np.array([math.cos(math.pi / 8 + k * math.pi / 4), math.sin(math.pi / 8 + k * math.pi / 4)])
        order = np.argsort(XOR_X @ a)
        bound = min(bound, _isotonic_xent(XOR_Y[order]))
    assert bound > 0.3
    for seed in range(3):
        m = train_mlp(XOR_X, XOR_Y, ClassifierSpec("mlp", hidden_size=1, max_epoch=5000), seed=seed)
        assert min(m.losses) >= bound - 1e-9 > 0.3


def test_isotonic_helper():
    assert _isotonic_xent([0, 0, 1, 1]) == 0
    assert _isotonic_xent([1, 0]) == pytest.approx(math.log(2))


def test_mlp_init_range():
    p = init_mlp(7, 5, seed=1)
    assert np.all(np.abs(p["W1"]) <= 0.05) and np.all(np.abs(p["w2"]) <= 0.05)
    assert not np.any(p["b1"]) and not np.any(p["b2"])


# ---------------------------------------------------------------- knn

def brute_knn(X, y, q, k):
    d = sorted((sum((a - b) ** 2 for a, b in zip(row, q)), i) for i, row in enumerate(X))
    return sum(y[i] for _, i in d[:k]) / k


def test_knn_examples():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 3.0], [1.0, 1.0]])
    y = np.array([1, 0, 1, 0, 0])
    assert knn_score(X, y, X[2], 1) == 1.0
    assert knn_score(X, y, [9.0, -9.0], 5) == pytest.approx(0.4)
    for q in ([0.5, 0.0], [0.0, 1.0], [2.0, 2.0], [0.5, 0.5]):
        for k in range(1, 6):
            assert knn_score(X, y, q, k) == brute_knn(X, y, q, k)
    with pytest.raises(ValueError):
        knn_score(X, y, X[0], 6)


@given(st.integers(0, 2**31), st.integers(1, 30))
@settings(max_examples=50)
def test_knn_matches_brute_force(seed, k):
    rng = np.random.default_rng(seed)
    # integer grid points give plenty of distance ties
    X = rng.integers(-2, 3, size=(30, 2)).astype(float)
    y = rng.integers(0, 2, 30)
    Q = rng.integers(-2, 3, size=(6, 2)).astype(float)
    got = knn_scores(X, y, Q, k, chunk_bytes=1)
    assert got.tolist() == [brute_knn(X, y, q, k) for q in Q]


# ---------------------------------------------------------------- experiment

def _specs(feature_kind, max_epoch=20):
    out = []
    for kind in ("logistic_regression", "linear_svm", "mlp", "knn"):
        spec = default_spec(kind, feature_kind)
        if kind != "knn":
            spec.max_epoch = max_epoch
        else:
            spec.k_neighbors = 5
        out.append(spec)
    return out


def test_default_specs_complete():
    assert len(DEFAULT_SPECS) == 8
    assert default_spec("mlp", "concept_vector").hidden_size == 100
    assert default_spec("knn", "one_hot_counts").k_neighbors == 15
    assert default_spec("linear_svm", "one_hot_counts").l2 == 1e-6


def test_null_run():
    rng = np.random.default_rng(0)
    labels = rng.permutation(np.r_[np.ones(150), np.zeros(450)]).astype(int)
    fm = FeatureMatrix(rng.normal(size=(600, 5)), labels, [str(i) for i in range(600)], "concept_vector")
    for spec in _specs("concept_vector"):
        rep = run_experiment(fm, spec, seed=0)
        assert 0.4 <= rep.mean_auc <= 0.6, spec.kind


def test_oracle_feature():
    rng = np.random.default_rng(1)
    labels = rng.permutation(np.r_[np.ones(40), np.zeros(100)]).astype(int)
    rows = (labels + 0.01 * rng.normal(size=140))[:, None]
    fm = FeatureMatrix(rows, labels, [str(i) for i in range(140)], "one_hot_counts")
    for spec in _specs("one_hot_counts"):
        rep = run_experiment(fm, spec, seed=4)
        assert rep.mean_auc > 0.99, spec.kind
        assert len(rep.per_fold_auc) == 6
        assert rep.mean_auc == float(np.mean(rep.per_fold_auc))
        assert rep.std_auc == float(np.std(rep.per_fold_auc))
        assert all(0 <= a <= 1 for a in rep.per_fold_auc)


def test_oracle_feature_among_noise():
    # Adadelta moves every weight at a similar rate early on and small
    # validation chunks can saturate at AUC 1.0, so noise columns still cost a bit.
    rng = np.random.default_rng(1)
    labels = rng.permutation(np.r_[np.ones(40), np.zeros(100)]).astype(int)
    rows = np.c_[labels + 0.01 * rng.normal(size=140), rng.normal(size=(140, 2))]
    fm = FeatureMatrix(rows, labels, [str(i) for i in range(140)], "one_hot_counts")
    for spec in _specs("one_hot_counts", max_epoch=100):
        assert run_experiment(fm, spec, seed=4).mean_auc > 0.9, spec.kind


def test_report_json_without_timing():
    rng = np.random.default_rng(2)
    labels = np.r_[np.ones(14), np.zeros(14)].astype(int)
    fm = FeatureMatrix(rng.normal(size=(28, 3)), labels, [str(i) for i in range(28)], "concept_vector")
    spec = ClassifierSpec("logistic_regression", l2=0.01, max_epoch=5)
    a = run_experiment(fm, spec, seed=1).to_json(timing=False)
    b = run_experiment(fm, spec, seed=1).to_json(timing=False)
    assert a == b and '"train_seconds_per_fold": null' in a


@pytest.mark.parametrize("kwargs", [dict(kind="tree"), dict(kind="mlp"), dict(kind="knn"),
                                    dict(kind="logistic_regression", l2=-1),
                                    dict(kind="logistic_regression", max_epoch=0)])
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        ClassifierSpec(**kwargs)
