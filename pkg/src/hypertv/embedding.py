"""Perturbation-invariance priors for hypergraph construction.

Feature-space and hypergraph-level augmentations, the temperature-scaled
contrastive loss over two augmented views, and a minimal affine encoder
trained to make embeddings invariant to those perturbations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hypergraph import Hyperedge, Hypergraph

__all__ = [
    "AugmentPolicy",
    "EncoderParams",
    "cosine_sim",
    "ntxent_loss",
    "augment_features",
    "augment_hypergraph",
    "train_encoder",
]


@dataclass
class AugmentPolicy:
    feature_noise_sigma: float = 0.1
    feature_mask_prob: float = 0.1
    node_drop_prob: float = 0.1
    edge_perturb_ratio: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.feature_noise_sigma < 0:
            raise ValueError("noise sigma must be nonnegative")
        for name in ("feature_mask_prob", "node_drop_prob", "edge_perturb_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass
class EncoderParams:
    weight: np.ndarray  # p x p'
    bias: np.ndarray  # p'
    temperature: float = 0.5
    step_size: float = 0.05
    steps: int = 200

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @classmethod
    def initialize(cls, p, p_out, *, temperature=0.5, step_size=0.05,
                   steps=200, seed=0) -> "EncoderParams":
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(p)
        return cls(weight=rng.normal(0.0, scale, size=(p, p_out)),
                   bias=np.zeros(p_out), temperature=temperature,
                   step_size=step_size, steps=steps)


def cosine_sim(a, b) -> float:
    """Cosine similarity of two nonzero vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity undefined for the zero vector")
    return float(np.dot(a, b) / (na * nb))


def ntxent_loss(view_a, view_b, tau):
    """Contrastive loss over two views plus its gradient.

    Row i of each view is a positive pair; every other row of either view is
    a negative.  Per anchor the loss is -log softmax(cos/tau) at the positive
    among the 2n-1 other embeddings; the value is averaged over all 2n
    anchors.  Returns (loss, gradient) with the gradient taken with respect
    to the stacked 2n x p' embedding matrix (cosines are computed with
    explicit normalisation, so inputs need not be unit norm).
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    A = np.asarray(view_a, dtype=float)
    B = np.asarray(view_b, dtype=float)
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] < 2:
        raise ValueError("views must share shape n x p' with n >= 2")
    V = np.vstack([A, B])
    n2 = V.shape[0]
    norms = np.linalg.norm(V, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero embedding row")
    Vh = V / norms[:, None]
    S = Vh @ Vh.T
    logits = S / tau
    np.fill_diagonal(logits, -np.inf)
    logits -= logits.max(axis=1, keepdims=True)
    expl = np.exp(logits)
    P = expl / expl.sum(axis=1, keepdims=True)
    pos = (np.arange(n2) + n2 // 2) % n2
    loss = float(np.mean(-np.log(P[np.arange(n2), pos])))
    M = P.copy()
    M[np.arange(n2), pos] -= 1.0
    M /= n2 * tau
    W = M + M.T
    grad_vh = W @ Vh - (W * S).sum(axis=1)[:, None] * Vh
    grad = grad_vh / norms[:, None]
    return loss, grad


def augment_features(X, policy: AugmentPolicy, rng=None):
    """Gaussian feature noise followed by independent coordinate masking."""
    rng = policy.rng() if rng is None else rng
    X = np.asarray(X, dtype=float)
    out = X + rng.normal(0.0, policy.feature_noise_sigma, size=X.shape) \
        if policy.feature_noise_sigma > 0 else X.copy()
    if policy.feature_mask_prob > 0:
        keep = rng.random(X.shape) >= policy.feature_mask_prob
        out = out * keep
    return out


def augment_hypergraph(H: Hypergraph, policy: AugmentPolicy, rng=None) -> Hypergraph:
    """Node dropping and edge perturbation, seed-reproducible.

    Each vertex is removed from every edge independently with the drop
    probability; edges shrinking below two members are deleted.  A fraction
    of the surviving edges then has one member swapped for a uniformly random
    non-member (the newcomer inherits the leaver's incidence value).
    """
    rng = policy.rng() if rng is None else rng
    dropped = rng.random(H.n) < policy.node_drop_prob
    edges = []
    for e in H.edges:
        kept = [(v, h) for v, h in zip(e.verts, e.incidence) if not dropped[v]]
        if len(kept) >= 2:
            verts, inc = zip(*kept)
            edges.append(Hyperedge(verts, e.weight, inc))
    if not edges:
        raise RuntimeError("augmentation destroyed hypergraph")
    n_perturb = int(round(policy.edge_perturb_ratio * len(edges)))
    if n_perturb > 0:
        chosen = rng.choice(len(edges), size=n_perturb, replace=False)
        for j in chosen:
            e = edges[j]
            outside = np.setdiff1d(np.arange(H.n), e.verts)
            if outside.size == 0:
                continue
            slot = int(rng.integers(e.cardinality))
            newcomer = int(rng.choice(outside))
            verts = list(e.verts)
            verts[slot] = newcomer
            edges[j] = Hyperedge(tuple(verts), e.weight, e.incidence)
    return Hypergraph(H.n, edges)


def _embed(X, params: EncoderParams):
    Z = X @ params.weight + params.bias
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return Z / norms


def train_encoder(X, policy: AugmentPolicy, params: EncoderParams):
    """Fit the affine encoder by gradient descent on the contrastive loss.

    Each step draws two augmented views of X, evaluates the loss on their
    embeddings and updates weight and bias.  Parameters with the lowest loss
    on a fixed seeded batch are kept, so the returned loss never exceeds the
    step-0 value.  Returns the trained parameters and the unit-normalised
    embeddings of the clean input.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("need at least two rows to train")
    W = params.weight.copy()
    b = params.bias.copy()
    rng = policy.rng()
    probe_a = augment_features(X, policy, np.random.default_rng(policy.seed + 1))
    probe_b = augment_features(X, policy, np.random.default_rng(policy.seed + 2))

    def probe_loss(W, b):
        loss, _ = ntxent_loss(probe_a @ W + b, probe_b @ W + b, params.temperature)
        return loss

    best = (probe_loss(W, b), W.copy(), b.copy())
    for step in range(params.steps):
        Xa = augment_features(X, policy, rng)
        Xb = augment_features(X, policy, rng)
        Za = Xa @ W + b
        Zb = Xb @ W + b
        loss, grad = ntxent_loss(Za, Zb, params.temperature)
        if not np.isfinite(loss):
            raise RuntimeError(f"training diverged at step {step}")
        n = X.shape[0]
        Ga, Gb = grad[:n], grad[n:]
        W -= params.step_size * (Xa.T @ Ga + Xb.T @ Gb)
        b -= params.step_size * (Ga.sum(axis=0) + Gb.sum(axis=0))
        pl = probe_loss(W, b)
        if np.isfinite(pl) and pl < best[0]:
            best = (pl, W.copy(), b.copy())
    _, W, b = best
    trained = EncoderParams(weight=W, bias=b, temperature=params.temperature,
                            step_size=params.step_size, steps=params.steps)
    return trained, _embed(X, trained)
