"""Hypergraph data model and per-modality hypergraph construction.

A hypergraph is a vertex set {0, .., n-1} together with weighted hyperedges,
each hyperedge carrying a positive incidence value for every member vertex.
Vertex degrees are the sum of the weights of incident edges.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Hyperedge",
    "Hypergraph",
    "ModalityTable",
    "build_hypergraph",
    "knn_modal_hypergraph",
    "phenotypic_hypergraph",
    "concat_hypergraphs",
    "save_hypergraph",
    "load_hypergraph",
]

# floor for rescaled cosine incidence; keeps membership values strictly positive
_INCIDENCE_FLOOR = 1e-12


@dataclass(frozen=True)
class Hyperedge:
    """One hyperedge: member vertices, weight and per-member incidence values."""

    verts: tuple
    weight: float
    incidence: tuple

    @property
    def cardinality(self) -> int:
        return len(self.verts)


class Hypergraph:
    """Immutable weighted hypergraph over vertices 0..n-1.

    Parameters
    ----------
    n : int
        Vertex count.
    edges : list of Hyperedge
        Hyperedges; order is preserved.

    Degrees are computed once at construction; the instance is safe for
    concurrent read.
    """

    def __init__(self, n: int, edges: list):
        if n <= 0:
            raise ValueError("vertex count must be positive")
        for e in edges:
            if len(e.verts) < 2:
                raise ValueError(f"hyperedge {e.verts} has cardinality < 2")
            if len(set(e.verts)) != len(e.verts):
                raise ValueError(f"duplicate vertex within hyperedge {e.verts}")
            if any(v < 0 or v >= n for v in e.verts):
                raise ValueError(f"vertex index out of range in {e.verts}")
            if not e.weight > 0:
                raise ValueError(f"hyperedge weight must be positive, got {e.weight}")
            if len(e.incidence) != len(e.verts):
                raise ValueError("incidence values must align with member vertices")
            if any(h <= 0 for h in e.incidence):
                raise ValueError("incidence values must be positive for members")
        self.n = n
        self.edges = list(edges)
        d = np.zeros(n)
        for e in self.edges:
            for v in e.verts:
                d[v] += e.weight
        self.vertex_degrees = d
        self._padded = None

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def edge_cardinalities(self) -> np.ndarray:
        return np.array([e.cardinality for e in self.edges], dtype=int)

    @property
    def edge_weights(self) -> np.ndarray:
        return np.array([e.weight for e in self.edges])

    def padded_members(self):
        """(idx, mask) with idx an m x c_max int matrix of member indices.

        Padding slots repeat the first member and are masked out; used by the
        vectorised solvers.
        """
        if self._padded is None:
            cmax = int(self.edge_cardinalities.max())
            idx = np.zeros((self.m, cmax), dtype=int)
            mask = np.zeros((self.m, cmax), dtype=bool)
            for j, e in enumerate(self.edges):
                idx[j, : e.cardinality] = e.verts
                idx[j, e.cardinality :] = e.verts[0]
                mask[j, : e.cardinality] = True
            self._padded = (idx, mask)
        return self._padded

    def adjacency_lists(self):
        """Vertex adjacency induced by shared hyperedge membership."""
        adj = [set() for _ in range(self.n)]
        for e in self.edges:
            for v in e.verts:
                adj[v].update(e.verts)
        for v in range(self.n):
            adj[v].discard(v)
        return adj

    def __eq__(self, other):
        if not isinstance(other, Hypergraph):
            return NotImplemented
        return self.n == other.n and self.edges == other.edges

    def __repr__(self):
        return f"Hypergraph(n={self.n}, m={self.m})"


@dataclass
class ModalityTable:
    """One modality of a dataset.

    kind "imaging" carries an n x p feature matrix; kind "phenotypic" carries a
    single measure column (numeric, or integer category codes when
    ``categorical`` is set).
    """

    kind: str
    features: np.ndarray
    name: str
    categorical: bool = False

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.kind not in ("imaging", "phenotypic"):
            raise ValueError(f"unknown modality kind {self.kind!r}")
        if self.features.ndim == 1:
            self.features = self.features[:, None]
        if self.kind == "phenotypic" and self.features.shape[1] != 1:
            raise ValueError("phenotypic modality must be a single column")
        if np.isnan(self.features).any():
            raise ValueError(f"modality {self.name!r} contains NaN entries")

    @property
    def n(self) -> int:
        return self.features.shape[0]


def build_hypergraph(edge_list, n) -> Hypergraph:
    """Assemble a hypergraph from (vertex-set, weight, incidence-values) triples.

    Edge order is preserved; degrees are computed from edge weights.
    """
    edge_list = list(edge_list)
    if not edge_list:
        raise ValueError("empty edge list")
    edges = [
        Hyperedge(tuple(verts), float(w), tuple(float(h) for h in inc))
        for verts, w, inc in edge_list
    ]
    return Hypergraph(n, edges)


def knn_modal_hypergraph(embeddings, k) -> Hypergraph:
    """Build one centroid hyperedge per node from cosine k-nearest neighbours.

    Hyperedge j joins node j with its k nearest neighbours under cosine
    similarity.  Member incidence is the cosine to the centroid node,
    rescaled by (1+cos)/2 when not positive so it stays in (0, 1].
    Edge weight is the mean member incidence.

    Rows must be unit-normalised and 1 <= k < n.
    """
    X = np.asarray(embeddings, dtype=float)
    n = X.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    norms = np.linalg.norm(X, axis=1)
    bad = np.where(np.abs(norms - 1.0) > 1e-8)[0]
    if bad.size:
        raise ValueError(
            "rows must be unit-normalised; offending rows and norms: "
            + ", ".join(f"{i}: {norms[i]:.6g}" for i in bad[:10])
        )
    sim = X @ X.T
    edges = []
    for j in range(n):
        s = sim[j].copy()
        s[j] = -np.inf
        nn = np.argsort(-s, kind="stable")[:k]
        verts = [j] + sorted(int(v) for v in nn)
        inc = []
        for i in verts:
            c = 1.0 if i == j else sim[i, j]
            h = c if c > 0 else (1.0 + c) / 2.0
            inc.append(max(h, _INCIDENCE_FLOOR))
        edges.append(Hyperedge(tuple(verts), float(np.mean(inc)), tuple(inc)))
    return Hypergraph(n, edges)


def phenotypic_hypergraph(measure: ModalityTable, k: int) -> Hypergraph:
    """Group subjects sharing similar phenotypic measures into hyperedges.

    Categorical measures give one hyperedge per category with at least two
    members.  Numeric measures give one hyperedge per subject joining its k
    nearest subjects by absolute difference in measure value; duplicate
    vertex sets are merged.  All weights and incidence values are 1.
    """
    if measure.kind != "phenotypic":
        raise ValueError("phenotypic_hypergraph needs a phenotypic modality")
    vals = measure.features[:, 0]
    n = vals.shape[0]
    edges = []
    if measure.categorical:
        for cat in np.unique(vals):
            members = np.where(vals == cat)[0]
            if members.size < 2:
                warnings.warn(
                    f"category {cat:g} of {measure.name!r} has < 2 members; no edge"
                )
                continue
            verts = tuple(int(v) for v in members)
            edges.append(Hyperedge(verts, 1.0, (1.0,) * len(verts)))
        if not edges:
            warnings.warn(f"measure {measure.name!r} produced no hyperedges")
    else:
        if np.ptp(vals) == 0:
            warnings.warn(
                f"constant numeric measure {measure.name!r}; single all-vertex edge"
            )
            verts = tuple(range(n))
            return Hypergraph(n, [Hyperedge(verts, 1.0, (1.0,) * n)])
        kk = min(k, n - 1)
        seen = set()
        for j in range(n):
            dist = np.abs(vals - vals[j])
            dist[j] = np.inf
            nn = np.argsort(dist, kind="stable")[:kk]
            verts = tuple(sorted([j] + [int(v) for v in nn]))
            if verts in seen:
                continue
            seen.add(verts)
            edges.append(Hyperedge(verts, 1.0, (1.0,) * len(verts)))
    return Hypergraph(n, edges)


def concat_hypergraphs(parts) -> Hypergraph:
    """Concatenate hypergraphs over the same vertex set; duplicates are kept."""
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to concatenate")
    n = parts[0].n
    for p in parts:
        if p.n != n:
            raise ValueError(f"vertex count mismatch: {p.n} != {n}")
    edges = [e for p in parts for e in p.edges]
    return Hypergraph(n, edges)


def hypergraph_to_dict(H: Hypergraph) -> dict:
    return {
        "n": H.n,
        "edges": [
            {"verts": list(e.verts), "w": e.weight, "h": list(e.incidence)}
            for e in H.edges
        ],
    }


def hypergraph_from_dict(doc: dict) -> Hypergraph:
    edges = [
        Hyperedge(tuple(e["verts"]), float(e["w"]), tuple(float(h) for h in e["h"]))
        for e in doc["edges"]
    ]
    return Hypergraph(int(doc["n"]), edges)


def save_hypergraph(H: Hypergraph, path):
    with open(path, "w") as fh:
        json.dump(hypergraph_to_dict(H), fh)


def load_hypergraph(path) -> Hypergraph:
    with open(path) as fh:
        return hypergraph_from_dict(json.load(fh))
