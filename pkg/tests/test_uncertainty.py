"""Entropy weights, weighted classifier and the alternating loop."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_hypergraph
from hypertv.diffusion import FlowParams, run_multiclass
from hypertv.labels import LabelState
from hypertv.uncertainty import (ClassifierParams, LoopParams, alternate,
                                 entropy_weights, promote_pseudo_labels,
                                 train_weighted_classifier,
                                 weighted_ce_loss_grad)


def test_entropy_one_hot_row():
    uw = entropy_weights(np.array([[1.0, 0.0, 0.0]]))
    assert uw.gamma[0] == 1.0
    assert uw.entropy[0] == 0.0


def test_entropy_uniform_row():
    for L in (2, 3, 5):
        uw = entropy_weights(np.full((1, L), 1.0 / L))
        assert abs(uw.gamma[0]) < 1e-12
        assert abs(uw.entropy[0] - np.log(L)) < 1e-12


def test_entropy_two_class_reference_value():
    # recomputed by hand: H = -(0.9 ln 0.9 + 0.1 ln 0.1) = 0.3250830,
    # gamma = 1 - H/ln 2 = 0.5310044 (see the decisions ledger for the
    # provenance of this constant)
    uw = entropy_weights(np.array([[0.9, 0.1]]))
    assert abs(uw.gamma[0] - 0.5310044) < 1e-6
    H = -(0.9 * np.log(0.9) + 0.1 * np.log(0.1))
    assert abs(uw.entropy[0] - H) < 1e-12
    assert abs(uw.gamma[0] - (1.0 - H / np.log(2))) < 1e-12


def test_entropy_flat_row_after_shift():
    uw = entropy_weights(np.array([[2.0, 2.0], [0.0, 0.0]]))
    assert np.allclose(uw.gamma, 0.0)


def test_entropy_negative_rows_shifted():
    uw = entropy_weights(np.array([[-1.0, 1.0]]))
    # shift gives (0, 2) -> one-hot
    assert uw.gamma[0] == 1.0


def test_entropy_rejects_bad_shapes():
    with pytest.raises(ValueError):
        entropy_weights(np.ones(3))
    with pytest.raises(ValueError):
        entropy_weights(np.ones((3, 1)))


@settings(max_examples=50, deadline=None)
@given(data=st.data())
def test_entropy_scale_invariance_property(data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31 - 1)))
    U = rng.uniform(0.01, 1.0, size=(4, 3))
    alpha = 10 ** rng.uniform(-3, 3)
    a = entropy_weights(U).gamma
    b = entropy_weights(alpha * U).gamma
    assert np.allclose(a, b, atol=1e-10)
    assert np.all((a >= 0) & (a <= 1))


def supervised_ce(X, y, mask, W, b, decay):
    Z = X[mask] @ W.T + b
    Z = Z - Z.max(axis=1, keepdims=True)
    P = np.exp(Z) / np.exp(Z).sum(axis=1, keepdims=True)
    ce = -np.log(P[np.arange(mask.sum()), y[mask]])
    return float(ce.sum()) + 0.5 * decay * float(np.sum(W**2))


def test_weighted_ce_gamma_zero_reduces_to_supervised():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(8, 4))
    given = -np.ones(8, dtype=int)
    given[[0, 1, 2]] = [0, 1, 0]
    labels = LabelState.from_given(given, 2)
    y_hat = rng.integers(0, 2, size=8)
    y_hat[:3] = given[:3]
    W = rng.normal(size=(2, 4))
    b = rng.normal(size=2)
    targets = np.where(labels.given_mask, labels.y, y_hat)
    weights = np.where(labels.given_mask, 1.0, 0.0)
    obj, _, _, _ = weighted_ce_loss_grad(X, targets, weights, W, b, 0.01)
    ref = supervised_ce(X, targets, labels.given_mask, W, b, 0.01)
    assert abs(obj - ref) < 1e-12


def test_weighted_ce_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    checked = 0
    for _ in range(20):
        n, p, L = 5, 3, 3
        X = rng.normal(size=(n, p))
        targets = rng.integers(0, L, size=n)
        weights = rng.uniform(0.0, 1.0, size=n)
        W = rng.normal(size=(L, p))
        b = rng.normal(size=L)
        decay = 0.01
        _, _, gW, gb = weighted_ce_loss_grad(X, targets, weights, W, b, decay)
        eps = 1e-6
        for arr, grad in ((W, gW), (b, gb)):
            fd = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + eps
                up, _, _, _ = weighted_ce_loss_grad(X, targets, weights, W, b, decay)
                arr[idx] = orig - eps
                dn, _, _, _ = weighted_ce_loss_grad(X, targets, weights, W, b, decay)
                arr[idx] = orig
                fd[idx] = (up - dn) / (2 * eps)
                it.iternext()
            rel = np.abs(grad - fd) / (np.abs(fd) + 1e-8)
            assert rel.max() < 1e-5
        checked += 1
    assert checked >= 20


def test_classifier_fits_separable_toy():
    X = np.array([[2.0, 0.1], [1.8, -0.2], [-2.1, 0.3], [-1.9, -0.1]])
    given = np.array([0, 0, 1, 1])
    labels = LabelState.from_given(given, 2)
    gamma = np.zeros(4)
    params = ClassifierParams(epochs=1500, weight_decay=0.0)
    fitted, P = train_weighted_classifier(X, labels, given, gamma, params)
    ce = -np.log(P[np.arange(4), given])
    assert ce.sum() < 0.01


def test_classifier_objective_monotone():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(12, 5))
    given = -np.ones(12, dtype=int)
    given[:4] = [0, 1, 0, 1]
    labels = LabelState.from_given(given, 2)
    y_hat = rng.integers(0, 2, size=12)
    y_hat[:4] = given[:4]
    gamma = rng.uniform(0, 1, size=12)
    params = ClassifierParams(epochs=50)
    targets = np.where(labels.given_mask, labels.y, y_hat)
    weights = np.where(labels.given_mask, 1.0, gamma)
    fitted, _ = train_weighted_classifier(X, labels, y_hat, gamma, params)
    start, _, _, _ = weighted_ce_loss_grad(
        X, targets, weights,
        np.random.default_rng(0).normal(0.0, 0.01, size=(2, 5)),
        np.zeros(2), params.weight_decay)
    end, _, _, _ = weighted_ce_loss_grad(X, targets, weights, fitted.weights,
                                         fitted.bias, params.weight_decay)
    assert end <= start + 1e-9


def make_label_state(n, given_pairs, classes=2):
    given = -np.ones(n, dtype=int)
    for i, y in given_pairs:
        given[i] = y
    return LabelState.from_given(given, classes)


def test_promotion_threshold_one_blocks_everything():
    labels = make_label_state(5, [(0, 0), (1, 1)])
    y_hat = np.array([0, 1, 0, 1, 0])
    probs = np.tile([0.8, 0.2], (5, 1))
    gamma = np.array([1.0, 1.0, 0.99, 0.8, 0.7])
    out = promote_pseudo_labels(y_hat, probs, gamma, 1.0, labels)
    assert out.pseudo_mask.sum() == 0


def test_promotion_threshold_zero_promotes_all_agreed():
    labels = make_label_state(5, [(0, 0), (1, 1)])
    y_hat = np.array([0, 1, 0, 0, 0])
    probs = np.tile([0.9, 0.1], (5, 1))  # argmax 0 everywhere: agrees on 2,3,4
    gamma = np.zeros(5)
    out = promote_pseudo_labels(y_hat, probs, gamma, 0.0, labels)
    assert np.array_equal(np.where(out.pseudo_mask)[0], [2, 3, 4])
    assert np.array_equal(out.y[[0, 1]], [0, 1])


def test_promotion_disagreement_blocks():
    labels = make_label_state(4, [(0, 0), (1, 1)])
    y_hat = np.array([0, 1, 1, 1])
    probs = np.tile([0.9, 0.1], (4, 1))  # classifier says 0, diffusion says 1
    gamma = np.ones(4)
    out = promote_pseudo_labels(y_hat, probs, gamma, 0.5, labels)
    assert out.pseudo_mask.sum() == 0


def test_promotion_never_touches_given():
    labels = make_label_state(4, [(0, 0), (1, 1)])
    y_hat = np.array([1, 0, 1, 0])
    probs = np.tile([0.5, 0.5], (4, 1))
    out = promote_pseudo_labels(y_hat, probs, np.ones(4), 0.0, labels)
    assert np.array_equal(out.y[[0, 1]], [0, 1])
    assert all(out.source[[0, 1]] == "given")


def test_promotion_rejects_bad_threshold():
    labels = make_label_state(3, [(0, 0), (1, 1)])
    with pytest.raises(ValueError):
        promote_pseudo_labels(np.zeros(3, int), np.tile([0.5, 0.5], (3, 1)),
                              np.ones(3), 1.5, labels)


def loop_fixture(seed=0):
    H = random_hypergraph(seed, n_range=(10, 11))
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(H.n, 4))
    labels = make_label_state(H.n, [(0, 0), (1, 1)])
    return H, X, labels


def test_alternate_degenerate_equals_multiclass():
    H, X, labels = loop_fixture(3)
    flow = FlowParams()
    y_loop, funcs_loop, _ = alternate(
        X, labels, H, flow, LoopParams(epochs=1, promote_threshold=1.0))
    funcs, y_plain = run_multiclass(H, labels.drop_pseudo(), flow)
    assert np.array_equal(y_loop, y_plain)
    assert np.allclose(funcs_loop.U, funcs.U, atol=1e-12)


def test_alternate_given_labels_immutable_each_epoch():
    H, X, labels = loop_fixture(4)
    want = labels.y[labels.given_mask].copy()
    y_hat, _, hist = alternate(X, labels, H, FlowParams(),
                               LoopParams(epochs=3, promote_threshold=0.5))
    assert all(rec["labels"]["given"] == int(labels.given_mask.sum())
               for rec in hist["epochs"])
    final = hist["final_labels"]
    assert np.array_equal(final.y[labels.given_mask], want)
    assert np.array_equal(y_hat[labels.given_mask], want)


def test_alternate_history_records_accuracy_when_truth_given():
    H, X, labels = loop_fixture(5)
    y_true = np.zeros(H.n, dtype=int)
    y_true[1] = 1
    _, _, hist = alternate(X, labels, H, FlowParams(),
                           LoopParams(epochs=2), y_true=y_true)
    assert all("unlabeled_accuracy" in rec for rec in hist["epochs"])


def test_alternate_rejects_zero_epochs():
    H, X, labels = loop_fixture(6)
    with pytest.raises(ValueError):
        alternate(X, labels, H, FlowParams(), LoopParams(epochs=0))
