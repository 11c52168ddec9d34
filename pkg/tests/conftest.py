"""Shared generators and independent oracles for the test suite."""

import numpy as np
import pytest

from hypertv.hypergraph import Hyperedge, Hypergraph, build_hypergraph


def random_hypergraph(seed, n_range=(6, 13), edges_per_vertex=1.5,
                      card_range=(2, 4), weight_range=(0.5, 2.0)):
    """Seeded random hypergraph with every vertex covered."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(*n_range))
    m = int(edges_per_vertex * n)
    edges = []
    for _ in range(m):
        card = int(rng.integers(card_range[0], card_range[1] + 1))
        verts = tuple(sorted(int(v) for v in rng.choice(n, card, replace=False)))
        edges.append((verts, float(rng.uniform(*weight_range)), (1.0,) * card))
    covered = set(v for e in edges for v in e[0])
    for v in range(n):
        if v not in covered:
            o = int(rng.choice([u for u in range(n) if u != v]))
            edges.append(((min(v, o), max(v, o)), 1.0, (1.0, 1.0)))
    return build_hypergraph(edges, n)


def two_component_hypergraph(seed):
    """Two disconnected random components; returns (H, size of first)."""
    rng = np.random.default_rng(seed)
    nA = int(rng.integers(3, 6))
    nB = int(rng.integers(3, 6))
    edges = []
    for off, size in ((0, nA), (nA, nB)):
        for _ in range(2 * size):
            card = int(rng.integers(2, min(4, size) + 1))
            verts = tuple(sorted(off + int(v)
                                 for v in rng.choice(size, card, replace=False)))
            edges.append((verts, float(rng.uniform(0.5, 2.0)), (1.0,) * card))
    covered = set(v for e in edges for v in e[0])
    for v in range(nA + nB):
        if v not in covered:
            size, off = (nA, 0) if v < nA else (nB, nA)
            o = off + int(rng.choice([u for u in range(size) if off + u != v]))
            edges.append(((min(v, o), max(v, o)), 1.0, (1.0, 1.0)))
    return build_hypergraph(edges, nA + nB), nA


def tv_oracle(H, u):
    """Straightforward per-edge max-minus-min sum, independent of tv_h."""
    u = np.asarray(u, dtype=float)
    total = 0.0
    for e in H.edges:
        vals = [u[v] for v in e.verts]
        total += e.weight * (max(vals) - min(vals))
    return total


def prox_objective(H, x, z, t):
    return 0.5 * float(np.sum((np.asarray(x) - np.asarray(z)) ** 2)) \
        + t * tv_oracle(H, x)


def projected_subgradient_prox(H, z, t, iters=40000):
    """Generic subgradient descent oracle for the TV proximal problem.

    Diminishing steps, best iterate kept; slow but solver-independent.
    """
    z = np.asarray(z, dtype=float)
    x = z.copy()
    best = (prox_objective(H, x, z, t), x.copy())
    for k in range(iters):
        g = x - z
        for e in H.edges:
            vals = np.array([x[v] for v in e.verts])
            hi = e.verts[int(np.argmax(vals))]
            lo = e.verts[int(np.argmin(vals))]
            if hi != lo:
                g[hi] += t * e.weight
                g[lo] -= t * e.weight
        step = 0.5 / np.sqrt(k + 1.0)
        x = x - step * g
        f = prox_objective(H, x, z, t)
        if f < best[0]:
            best = (f, x.copy())
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(0)
