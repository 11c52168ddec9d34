"""Entropy-uncertainty weighting and the alternating refinement loop.

After each diffusion pass the per-node prediction entropy gives a certainty
weight; a softmax-affine classifier trained with those weights confirms or
vetoes diffusion predictions, and agreed confident predictions are promoted
to pseudo labels for the next diffusion epoch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffusion import FlowParams, run_multiclass
from .labels import LabelState

__all__ = [
    "UncertaintyWeights",
    "ClassifierParams",
    "LoopParams",
    "entropy_weights",
    "train_weighted_classifier",
    "promote_pseudo_labels",
    "alternate",
]


@dataclass
class UncertaintyWeights:
    gamma: np.ndarray  # 1 - H/log L, in [0, 1]
    entropy: np.ndarray


@dataclass
class ClassifierParams:
    weights: np.ndarray | None = None  # L x p
    bias: np.ndarray | None = None  # L
    learning_rate: float = 5e-2
    weight_decay: float = 2e-4
    epochs: int = 180
    cosine_annealing: bool = True


@dataclass
class LoopParams:
    epochs: int = 5
    promote_threshold: float = 0.7
    classifier: ClassifierParams = field(default_factory=ClassifierParams)


def entropy_weights(U) -> UncertaintyWeights:
    """Certainty weight per row of the stacked diffusion functions.

    Rows are shifted to be nonnegative and normalised to the simplex; the
    weight is 1 - H/log(L).  A flat row has no information and gets weight 0.
    """
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[1] < 2:
        raise ValueError("need an n x L matrix with L >= 2")
    L = U.shape[1]
    # shift only rows with negative entries; an already-nonneg row keeps its
    # proportions (a pure shift would turn (0.9, 0.1) into a one-hot row)
    P = U - np.minimum(U.min(axis=1, keepdims=True), 0.0)
    s = P.sum(axis=1, keepdims=True)
    flat = s[:, 0] == 0
    s[flat] = 1.0
    P = P / s
    P[flat] = 1.0 / L
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(P), 0.0)
    H = -terms.sum(axis=1)
    gamma = np.clip(1.0 - H / np.log(L), 0.0, 1.0)
    return UncertaintyWeights(gamma=gamma, entropy=H)


def _softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def weighted_ce_loss_grad(X, targets, weights, W, b, weight_decay):
    """Objective, probabilities and analytic gradients of the weighted CE.

    Objective is sum_i weights_i * CE(softmax(x_i W^T + b), targets_i) plus
    the ridge term (decay/2)||W||^2.
    """
    Z = X @ W.T + b
    P = _softmax(Z)
    eps = 1e-300
    ce = -np.log(P[np.arange(X.shape[0]), targets] + eps)
    obj = float(np.dot(weights, ce)) + 0.5 * weight_decay * float(np.sum(W**2))
    G = P.copy()
    G[np.arange(X.shape[0]), targets] -= 1.0
    G *= weights[:, None]
    grad_W = G.T @ X + weight_decay * W
    grad_b = G.sum(axis=0)
    return obj, P, grad_W, grad_b


def train_weighted_classifier(X, labels: LabelState, y_hat, gamma,
                              params: ClassifierParams):
    """Fit the softmax-affine classifier on given labels plus weighted pseudo
    targets.

    Given labels enter with unit weight, unlabelled nodes with their
    certainty weight against the diffusion prediction.  Steps that would
    raise the objective are retried with a halved rate, so the objective is
    non-increasing.  Returns the fitted parameters and class probabilities
    for all nodes.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    L = labels.classes
    given = labels.given_mask
    targets = np.where(given, labels.y, np.asarray(y_hat, dtype=int))
    weights = np.where(given, 1.0, np.asarray(gamma, dtype=float))
    rng = np.random.default_rng(0)
    W = params.weights.copy() if params.weights is not None \
        else rng.normal(0.0, 0.01, size=(L, p))
    b = params.bias.copy() if params.bias is not None else np.zeros(L)
    obj, P, gW, gb = weighted_ce_loss_grad(X, targets, weights, W, b,
                                           params.weight_decay)
    for epoch in range(params.epochs):
        if not np.isfinite(obj):
            raise RuntimeError(f"classifier loss not finite at epoch {epoch}")
        lr = params.learning_rate
        if params.cosine_annealing and params.epochs > 1:
            lr *= 0.5 * (1.0 + np.cos(np.pi * epoch / (params.epochs - 1)))
        accepted = False
        for _ in range(30):
            W_try = W - lr * gW
            b_try = b - lr * gb
            obj_try, P_try, gW_try, gb_try = weighted_ce_loss_grad(
                X, targets, weights, W_try, b_try, params.weight_decay)
            if np.isfinite(obj_try) and obj_try <= obj + 1e-12:
                W, b, obj, P, gW, gb = W_try, b_try, obj_try, P_try, gW_try, gb_try
                accepted = True
                break
            lr *= 0.5
        if not accepted:
            break
    fitted = ClassifierParams(weights=W, bias=b,
                              learning_rate=params.learning_rate,
                              weight_decay=params.weight_decay,
                              epochs=params.epochs,
                              cosine_annealing=params.cosine_annealing)
    return fitted, P


def promote_pseudo_labels(y_hat, probs, gamma, threshold, labels: LabelState
                          ) -> LabelState:
    """Promote confident, classifier-confirmed diffusion predictions.

    An unlabelled node becomes a pseudo label exactly when its certainty
    weight reaches the threshold and the classifier argmax agrees with the
    diffusion prediction.  Given labels are never touched.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    y_hat = np.asarray(y_hat, dtype=int)
    gamma = np.asarray(gamma, dtype=float)
    agree = np.argmax(probs, axis=1) == y_hat
    out = labels.drop_pseudo()
    for i in np.where(~labels.given_mask & agree & (gamma >= threshold))[0]:
        out.set_pseudo(int(i), int(y_hat[i]), float(min(gamma[i], 1.0)))
    return out


def alternate(X, labels: LabelState, H, flow_params: FlowParams,
              loop: LoopParams, y_true=None, log=None):
    """Alternating diffusion / classifier refinement over several epochs.

    Each epoch diffuses with the given labels plus the previous epoch's
    promotions, derives certainty weights, trains the weighted classifier and
    promotes agreed predictions from scratch.  Returns the last epoch's
    predictions, node functions and a per-epoch history.
    """
    if loop.epochs < 1:
        raise ValueError("need at least one epoch")
    labels.require_given_per_class()
    current = labels.drop_pseudo()
    history = []
    funcs, y_hat, gamma = None, None, None
    for epoch in range(loop.epochs):
        funcs, y_hat = run_multiclass(H, current, flow_params, log=log)
        uw = entropy_weights(funcs.U)
        gamma = uw.gamma
        _, probs = train_weighted_classifier(X, current, y_hat, gamma,
                                             loop.classifier)
        promoted = promote_pseudo_labels(y_hat, probs, gamma,
                                         loop.promote_threshold, labels)
        record = {
            "epoch": epoch,
            "labels": promoted.counts(),
            "mean_gamma": float(np.mean(gamma[~labels.given_mask]))
            if (~labels.given_mask).any() else 1.0,
        }
        if y_true is not None:
            unl = ~labels.given_mask
            record["unlabeled_accuracy"] = float(
                np.mean(np.asarray(y_true)[unl] == y_hat[unl]))
        history.append(record)
        current = promoted
    return y_hat, funcs, {"epochs": history, "gamma": gamma,
                          "final_labels": current}
