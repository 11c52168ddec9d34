"""Synthetic planted-partition data, exact small-instance oracles and metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffusion import center_d, norm_and_subgrad, tv_h, WEIGHTED_L1
from .hypergraph import Hyperedge, Hypergraph, ModalityTable

__all__ = [
    "PlantedSpec",
    "MetricsReport",
    "gen_planted",
    "brute_force_best_ratio",
    "indicator_ratio",
    "metrics",
]


@dataclass
class PlantedSpec:
    n: int = 60
    blocks: int = 2
    edge_cardinality: tuple = (3, 3)
    intra_edges: int = 90
    cross_fraction: float = 0.05
    feature_dim: int = 8
    feature_noise: float = 0.3
    pheno_flip_prob: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.blocks < 2:
            raise ValueError("need at least two blocks")
        if not 0.0 <= self.cross_fraction <= 1.0:
            raise ValueError("cross fraction must lie in [0, 1]")
        if not 0.0 <= self.pheno_flip_prob <= 1.0:
            raise ValueError("flip probability must lie in [0, 1]")


def gen_planted(spec: PlantedSpec):
    """Block-structured hypergraph with correlated features and phenotype.

    Vertices split into near-equal blocks; intra edges draw their members
    from one block, a cross fraction of edges spans at least two blocks.
    Features are Gaussian around a per-block mean direction; the phenotypic
    column is the block id flipped with the configured probability.
    Deterministic under the seed.

    Returns (hypergraph, [imaging table, phenotypic table], true labels).
    """
    rng = np.random.default_rng(spec.seed)
    n, L = spec.n, spec.blocks
    y = np.repeat(np.arange(L), int(np.ceil(n / L)))[:n]
    blocks = [np.where(y == l)[0] for l in range(L)]
    lo, hi = spec.edge_cardinality
    if lo < 2:
        raise ValueError("edge cardinality must be at least 2")
    if lo > min(len(b) for b in blocks):
        raise ValueError("edge cardinality exceeds block size")
    # cross edges on top of the intra budget, so they make up roughly the
    # requested fraction of all edges
    f = spec.cross_fraction
    n_intra = spec.intra_edges
    n_cross = int(round(f * n_intra / (1.0 - f))) if f < 1.0 else n_intra
    edges = []
    for _ in range(n_intra):
        card = int(rng.integers(lo, hi + 1))
        block = blocks[int(rng.integers(L))]
        verts = tuple(sorted(int(v) for v in rng.choice(block, card, replace=False)))
        edges.append(Hyperedge(verts, 1.0, (1.0,) * card))
    for _ in range(n_cross):
        card = int(rng.integers(lo, hi + 1))
        while True:
            verts = rng.choice(n, card, replace=False)
            if np.unique(y[verts]).size > 1:
                break
        verts = tuple(sorted(int(v) for v in verts))
        edges.append(Hyperedge(verts, 1.0, (1.0,) * card))
    # every vertex must carry positive degree for the diffusion norm
    covered = np.zeros(n, dtype=bool)
    for e in edges:
        covered[list(e.verts)] = True
    for v in np.where(~covered)[0]:
        block = blocks[y[v]]
        others = rng.choice(block[block != v], lo - 1, replace=False)
        verts = tuple(sorted([int(v)] + [int(o) for o in others]))
        edges.append(Hyperedge(verts, 1.0, (1.0,) * lo))
    H = Hypergraph(n, edges)
    means = rng.normal(size=(L, spec.feature_dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    X = means[y] + rng.normal(0.0, spec.feature_noise, size=(n, spec.feature_dim))
    pheno = y.astype(float).copy()
    flips = rng.random(n) < spec.pheno_flip_prob
    shifts = rng.integers(1, L, size=n)
    pheno[flips] = (pheno[flips] + shifts[flips]) % L
    tables = [
        ModalityTable("imaging", X, "features"),
        ModalityTable("phenotypic", pheno, "block_phenotype", categorical=True),
    ]
    return H, tables, y


def indicator_ratio(H: Hypergraph, part, mode: str = WEIGHTED_L1) -> float:
    """Ratio of a two-level indicator after removing its degree component."""
    b = np.asarray(part, dtype=float)
    d = H.vertex_degrees
    b_hat = center_d(b, d)
    if not np.any(b_hat):
        raise ValueError("indicator collapses onto the degree direction")
    nrm, _ = norm_and_subgrad(b_hat, d, mode)
    return tv_h(H, b_hat / nrm) / 1.0


def brute_force_best_ratio(H: Hypergraph, mode: str = WEIGHTED_L1):
    """Exact minimiser of the TV/norm ratio over nontrivial +/-1 indicators.

    Enumerates every bipartition (up to global sign), removes the degree
    component and normalises before evaluating the ratio.  Guarded to n <= 16.
    """
    n = H.n
    if n > 16:
        raise ValueError("brute force oracle limited to n <= 16")
    d = H.vertex_degrees
    best = (np.inf, None)
    for code in range(1, 2 ** (n - 1)):
        b = np.where((code >> np.arange(n)) & 1, 1.0, -1.0)
        b_hat = center_d(b, d)
        if not np.any(b_hat):
            continue
        nrm, _ = norm_and_subgrad(b_hat, d, mode)
        ratio = tv_h(H, b_hat / nrm)
        if ratio < best[0]:
            best = (ratio, b > 0)
    ratio, subset_mask = best
    return np.where(subset_mask)[0], float(ratio)


@dataclass
class MetricsReport:
    acc: float
    sen: dict  # per class; None marks an undefined rate
    ppv: dict
    error_rate: float
    ci_half_width: float | None = None

    def for_class(self, c):
        return {"SEN": self.sen[c], "PPV": self.ppv[c]}


def metrics(y_true, y_pred, positive_class=None, rep_accs=None) -> MetricsReport:
    """Accuracy, per-class sensitivity and positive predictive value.

    Rates with empty denominators are reported as None rather than 0.  When
    per-repetition accuracies are supplied, a normal-approximation 95%
    confidence half-width is attached.
    """
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape:
        raise ValueError("prediction length mismatch")
    acc = float(np.mean(y_true == y_pred))
    classes = [positive_class] if positive_class is not None \
        else sorted(np.unique(np.concatenate([y_true, y_pred])).tolist())
    sen, ppv = {}, {}
    for c in classes:
        tp = int(np.sum((y_true == c) & (y_pred == c)))
        fn = int(np.sum((y_true == c) & (y_pred != c)))
        fp = int(np.sum((y_true != c) & (y_pred == c)))
        sen[c] = tp / (tp + fn) if tp + fn > 0 else None
        ppv[c] = tp / (tp + fp) if tp + fp > 0 else None
    ci = None
    if rep_accs is not None:
        rep_accs = np.asarray(rep_accs, dtype=float)
        ci = float(1.96 * rep_accs.std(ddof=1) / np.sqrt(rep_accs.size)) \
            if rep_accs.size > 1 else 0.0
    return MetricsReport(acc=acc, sen=sen, ppv=ppv, error_rate=1.0 - acc,
                         ci_half_width=ci)
