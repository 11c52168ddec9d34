"""Total-variation diffusion on hypergraphs.

Labels are spread by minimising the ratio of the hypergraph total variation
to a one-homogeneous norm of the node function.  The minimisation runs a
semi-explicit flow: the norm subgradient is treated explicitly, the total
variation implicitly through its proximal operator, which is solved by a
primal-dual iteration with one dual vector per hyperedge.
"""

from __future__ import annotations

import json
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ._proxkernel import HAVE_NUMBA, prox_kernel
from .hypergraph import Hypergraph
from .labels import LabelState

__all__ = [
    "InnerParams",
    "FlowParams",
    "NodeFunctions",
    "DiagnosticsLog",
    "tv_h",
    "norm_and_subgrad",
    "remove_d_component",
    "center_d",
    "prox_tv",
    "flow_step",
    "run_binary_flow",
    "run_multiclass",
]

WEIGHTED_L1 = "weighted_l1"
L2 = "l2"

# alternating-projection settings for the per-edge dual sets
_PROJ_ALTERNATIONS = 200
_PROJ_TOL = 1e-14


@dataclass
class InnerParams:
    """Primal-dual solver settings for the proximal step."""

    max_iters: int = 20000
    gap_tol: float = 1e-13
    step_primal: float | None = None  # None: derived from the operator norm
    step_dual: float | None = None


@dataclass
class FlowParams:
    dt: float = 0.1
    max_outer_iters: int = 500
    ratio_tol: float = 1e-6
    inner: InnerParams = field(default_factory=InnerParams)
    clamp_value: float | None = None  # None: 1 / (sum of labelled degrees)
    norm: str = WEIGHTED_L1
    init_smoothing: float = 1.0  # prox step smoothing the label indicator at start
    restarts: int = 0  # extra flows from seeded random signings, best kept

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.ratio_tol <= 0:
            raise ValueError("ratio_tol must be positive")
        if self.norm not in (WEIGHTED_L1, L2):
            raise ValueError(f"unknown norm {self.norm!r}")


@dataclass
class NodeFunctions:
    """Per-class diffusion functions and their flow diagnostics."""

    U: np.ndarray  # n x L
    ratio_history: list  # one list of ratios per class
    converged: list  # one flag per class


class DiagnosticsLog:
    """Line-delimited JSON sink for per-iteration flow records."""

    def __init__(self, path):
        self._fh = open(path, "a")

    def write(self, record: dict):
        self._fh.write(json.dumps(record) + "\n")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def tv_h(H: Hypergraph, u) -> float:
    """Hypergraph total variation: sum over edges of w_e (max - min) of u."""
    u = np.asarray(u, dtype=float)
    if u.shape != (H.n,):
        raise ValueError(f"expected length-{H.n} vector, got shape {u.shape}")
    idx, mask = H.padded_members()
    vals = u[idx]
    hi = np.where(mask, vals, -np.inf).max(axis=1)
    lo = np.where(mask, vals, np.inf).min(axis=1)
    return float(np.dot(H.edge_weights, hi - lo))


def norm_and_subgrad(u, d, mode: str = WEIGHTED_L1):
    """Norm of u and a subgradient, under the configured norm.

    Default is the degree-weighted 1-norm sum_i d_i |u_i| with subgradient
    q_i = d_i sign(u_i); mode "l2" uses the Euclidean norm with q = u/|u|.
    """
    u = np.asarray(u, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("degree vector must be strictly positive")
    if not np.any(u):
        raise ValueError("flow degenerate at zero")
    if mode == WEIGHTED_L1:
        return float(np.dot(d, np.abs(u))), d * np.sign(u)
    if mode == L2:
        nrm = float(np.linalg.norm(u))
        return nrm, u / nrm
    raise ValueError(f"unknown norm {mode!r}")


def remove_d_component(q, d):
    """Project q onto the orthogonal complement of the scaling vector d."""
    q = np.asarray(q, dtype=float)
    d = np.asarray(d, dtype=float)
    if not np.any(d):
        raise ValueError("scaling vector is zero")
    out = q - (np.dot(d, q) / np.dot(d, d)) * d
    res = abs(np.dot(d, out))
    assert res <= 1e-10 * (np.linalg.norm(d) * np.linalg.norm(q) + 1.0)
    return out


def center_d(u, d):
    """Shift u by a constant so its degree-weighted mean is zero.

    The total variation is invariant under constant shifts, so this is the
    projection pinning the quotient the ratio objective lives on; a
    disconnected component indicator keeps TV zero after centering.
    """
    u = np.asarray(u, dtype=float)
    d = np.asarray(d, dtype=float)
    tot = d.sum()
    if tot <= 0:
        raise ValueError("degree vector must have positive mass")
    return u - (np.dot(d, u) / tot)


class _ProxWorkspace:
    """Cached index structures for the primal-dual prox solver on one hypergraph."""

    def __init__(self, H: Hypergraph, inner: InnerParams):
        self.H = H
        self.idx, self.mask = H.padded_members()
        self.w = H.edge_weights
        counts = np.bincount(self.idx[self.mask], minlength=H.n)
        opnorm_sq = max(int(counts.max()), 1)
        s = 0.95 / np.sqrt(opnorm_sq)
        self.sigma = inner.step_dual if inner.step_dual is not None else s
        self.tau = inner.step_primal if inner.step_primal is not None else s
        self.flat_idx = self.idx[self.mask]

    def scatter(self, y):
        out = np.zeros(self.H.n)
        np.add.at(out, self.flat_idx, y[self.mask])
        return out


def _project_dual(y, mask, caps):
    """Alternating projection onto {zero sum} ∩ {sum of positives <= cap} per edge."""
    card = mask.sum(axis=1)
    for _ in range(_PROJ_ALTERNATIONS):
        prev = y
        # zero-sum: subtract the per-edge mean over members
        mean = y.sum(axis=1) / card
        y = np.where(mask, y - mean[:, None], 0.0)
        # cap the positive part by water-filling on violating edges
        pos = np.where(y > 0, y, 0.0)
        s = pos.sum(axis=1)
        viol = s > caps
        if viol.any():
            ps = np.sort(pos[viol], axis=1)[:, ::-1]
            cs = np.cumsum(ps, axis=1)
            j = np.arange(1, ps.shape[1] + 1)
            lam_cand = (cs - caps[viol, None]) / j
            rho = np.sum(ps > lam_cand, axis=1)
            lam = lam_cand[np.arange(ps.shape[0]), rho - 1]
            yv = y[viol]
            yv = np.where(yv > 0, np.maximum(yv - lam[:, None], 0.0), yv)
            y = y.copy()
            y[viol] = np.where(mask[viol], yv, 0.0)
        if np.max(np.abs(y - prev)) < _PROJ_TOL:
            break
    # end on an exact zero-sum so the dual bound is honest
    mean = y.sum(axis=1) / card
    return np.where(mask, y - mean[:, None], 0.0)


def prox_tv(H: Hypergraph, z, t, inner: InnerParams | None = None, *,
            warm_dual=None, return_info: bool = False):
    """Proximal operator of t * TV_H at z.

    Solves min_x 0.5 ||x - z||^2 + t * TV_H(x) with a primal-dual saddle-point
    iteration; one dual vector per hyperedge lives in the set
    {y supported on e : sum y = 0, sum max(y, 0) <= t w_e}.
    Stops when the duality gap drops below the tolerance.  On hitting the
    iteration cap the best iterate is returned with a warning.
    """
    if t <= 0:
        raise ValueError("prox step must be positive")
    inner = inner or InnerParams()
    z = np.asarray(z, dtype=float)
    ws = _ProxWorkspace(H, inner)
    caps = t * ws.w
    y = np.zeros_like(ws.mask, dtype=float) if warm_dual is None else warm_dual.copy()
    tau, sigma = ws.tau, ws.sigma
    if HAVE_NUMBA:
        card = H.edge_cardinalities
        x, y, gap, converged, _ = prox_kernel(
            ws.idx, card, ws.w, z, t, tau, sigma,
            inner.max_iters, inner.gap_tol, y)
    else:
        y = _project_dual(y, ws.mask, caps)
        x = z - ws.scatter(y)
        xbar = x
        gap = np.inf
        converged = False
        for it in range(inner.max_iters):
            y = _project_dual(np.where(ws.mask, y + sigma * xbar[ws.idx], 0.0),
                              ws.mask, caps)
            kty = ws.scatter(y)
            x_new = (x - tau * kty + tau * z) / (1.0 + tau)
            xbar = 2.0 * x_new - x
            x = x_new
            if it % 5 == 4 or it == inner.max_iters - 1:
                # rescale any edge whose positive cap slipped during the
                # zero-sum finish, keeping the dual objective a true bound
                possum = np.where(y > 0.0, y, 0.0).sum(axis=1)
                over = possum > caps
                if np.any(over):
                    fac = np.where(over, caps / np.maximum(possum, 1e-300), 1.0)
                    y = y * fac[:, None]
                    kty = ws.scatter(y)
                primal = 0.5 * np.sum((x - z) ** 2) + t * tv_h(H, x)
                dual = np.dot(kty, z) - 0.5 * np.sum(kty**2)
                gap = primal - dual
                if gap <= inner.gap_tol * max(1.0, abs(primal)):
                    converged = True
                    break
    if not converged:
        warnings.warn(f"prox_tv hit the iteration cap; final gap {gap:.3e}")
    # at the saddle point z - x equals the scattered dual, i.e. an element
    # of t * dTV_H(x); check the residual on exit
    if converged:
        resid = np.linalg.norm((z - x) - ws.scatter(y))
        assert resid <= 1e-4 * (1.0 + np.linalg.norm(z))
    if return_info:
        return x, {"gap": float(gap), "converged": converged, "dual": y}
    return x


def _clamp_targets(labels: LabelState | None, class_l: int, c: float):
    if labels is None:
        return np.array([], dtype=int), np.array([])
    idx = np.where(labels.labeled_mask)[0]
    vals = np.where(labels.y[idx] == class_l, c, -c)
    return idx, vals


def clamp_value(labels: LabelState, d, params: FlowParams) -> float:
    if params.clamp_value is not None:
        return params.clamp_value
    total = float(d[labels.labeled_mask].sum())
    if total <= 0:
        raise ValueError("no labelled nodes to derive the clamp value from")
    return 1.0 / total


def flow_step(H: Hypergraph, u_k, params: FlowParams, labels: LabelState | None,
              class_l: int, *, warm_dual=None, return_info: bool = False):
    """One semi-explicit flow step.

    Explicit in the norm subgradient (with its d-component removed), implicit
    in the total variation via the proximal operator; labelled nodes are
    clamped to +/- the clamp value before renormalisation.
    """
    d = H.vertex_degrees
    u_k = np.asarray(u_k, dtype=float)
    nrm, q = norm_and_subgrad(u_k, d, params.norm)
    lam = tv_h(H, u_k) / nrm
    q_perp = remove_d_component(q, d)
    drift = u_k + params.dt * lam * q_perp
    u_half, info = prox_tv(H, drift, params.dt, params.inner,
                           warm_dual=warm_dual, return_info=True)
    # keep the iterate on the quotient space the ratio lives on; otherwise the
    # proximal smoothing drifts towards a constant function and the flow
    # collapses onto spurious spike minimisers
    if np.any(u_half):
        u_half = center_d(u_half, d)
    if labels is not None and labels.labeled_mask.any():
        c = clamp_value(labels, d, params)
        idx, vals = _clamp_targets(labels, class_l, c)
        u_half = u_half.copy()
        u_half[idx] = vals
    nrm_half, _ = norm_and_subgrad(u_half, d, params.norm)
    # centring leaves roundoff residue, so a flattened iterate is detected by
    # norm, not by exact zeros
    if nrm_half <= 1e-12 * max(1.0, float(np.abs(drift).sum())):
        raise RuntimeError("flow collapsed to zero; reduce dt")
    u_next = u_half / nrm_half
    if return_info:
        return u_next, info
    return u_next


def _initial_function(H, labels, class_l, params):
    """Smoothed label indicator as the starting node function.

    A raw spike indicator (labels at +/-c, zero elsewhere) makes the flow
    collapse onto flat spurious minimisers, so the +/-1 indicator is spread
    by one large implicit TV step first; the spike form is the fallback when
    that smoothing washes the labels out entirely.
    """
    d = H.vertex_degrees
    u = np.zeros(H.n)
    idx, _ = _clamp_targets(labels, class_l, 1.0)
    u[idx] = np.where(labels.y[idx] == class_l, 1.0, -1.0)
    if params.init_smoothing > 0:
        # too much smoothing saturates the prox and washes the labels out, so
        # scan a short grid and keep the lowest-ratio candidate; the scan is
        # heuristic, so its solves run under a relaxed tolerance without the
        # iteration-cap warning
        relaxed = InnerParams(max_iters=min(params.inner.max_iters, 3000),
                              gap_tol=max(params.inner.gap_tol, 1e-8),
                              step_primal=params.inner.step_primal,
                              step_dual=params.inner.step_dual)
        best = None
        warm = None
        prev_t = None
        for scale in (1.0, 0.5, 0.25, 0.125, 0.0625):
            t = scale * params.init_smoothing
            if warm is not None:
                warm = warm * (t / prev_t)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                smoothed, info = prox_tv(H, u, t, relaxed,
                                         warm_dual=warm, return_info=True)
            warm, prev_t = info["dual"], t
            cand = center_d(smoothed, d)
            # centring can leave the candidate anti-correlated with the
            # labels; the ratio is sign-symmetric, so flip to align
            if idx.size and np.dot(cand[idx], u[idx]) < 0:
                cand = -cand
            if not np.any(cand):
                continue
            nrm, _ = norm_and_subgrad(cand, d, params.norm)
            cand = cand / nrm
            ratio = tv_h(H, cand)
            if best is None or ratio < best[0]:
                best = (ratio, cand)
        if best is not None:
            return best[1]
    c = clamp_value(labels, d, params)
    u = center_d(c * u, d)
    if not np.any(u):
        raise ValueError("degenerate initialisation; labels align with degrees")
    nrm, _ = norm_and_subgrad(u, d, params.norm)
    return u / nrm


def _best_threshold_indicator(H, u, labels, class_l, params):
    """Lowest-ratio two-level rounding of u over its super-level sets.

    Sweeps every split point of the sorted values; candidates that put a
    labelled node on the wrong side are skipped.  Returns (ratio, vector)
    with the vector degree-orthogonalised and normalised, or None when no
    admissible split exists.
    """
    d = H.vertex_degrees
    order = np.argsort(u, kind="stable")
    if labels is not None and labels.labeled_mask.any():
        lab = np.where(labels.labeled_mask)[0]
        pos = labels.y[lab] == class_l
        lo_ok = np.min(u[lab[pos]]) if pos.any() else np.inf
        hi_ok = np.max(u[lab[~pos]]) if (~pos).any() else -np.inf
    else:
        lo_ok, hi_ok = np.inf, -np.inf
    best = None
    vals = u[order]
    for s in range(1, H.n):
        if vals[s - 1] == vals[s]:
            continue
        theta = 0.5 * (vals[s - 1] + vals[s])
        # labelled nodes must keep their side of the split
        if theta >= lo_ok or theta <= hi_ok:
            continue
        b = np.where(u > theta, 1.0, -1.0)
        b_hat = center_d(b, d)
        if not np.any(b_hat):
            continue
        nrm, _ = norm_and_subgrad(b_hat, d, params.norm)
        b_hat = b_hat / nrm
        ratio = tv_h(H, b_hat)
        if best is None or ratio < best[0]:
            best = (ratio, b_hat)
    return best


def _flip_descent(H, u, labels, class_l, params):
    """Greedy single-vertex sign flips on the rounding of u.

    Starts from sign(u) with labelled vertices pinned to their class side
    (the iterate itself may carry them on the wrong side, e.g. a centred
    initial candidate), flips the unlabelled vertex giving the largest
    ratio decrease until none helps.  Returns (ratio, vector) in the same
    centred, normalised form as the threshold sweep, or None when the
    start is degenerate.
    """
    d = H.vertex_degrees
    b = np.where(u > 0, 1.0, -1.0)
    if labels is not None and labels.labeled_mask.any():
        lab = labels.labeled_mask
        b[lab] = np.where(labels.y[lab] == class_l, 1.0, -1.0)
        frozen = lab
    else:
        frozen = np.zeros(H.n, dtype=bool)

    def evaluate(bv):
        bh = center_d(bv, d)
        if not np.any(bh):
            return np.inf, None
        nrm, _ = norm_and_subgrad(bh, d, params.norm)
        bh = bh / nrm
        return tv_h(H, bh), bh

    cur, cur_vec = evaluate(b)
    if cur_vec is None:
        return None
    while True:
        best_i = -1
        for i in range(H.n):
            if frozen[i]:
                continue
            b[i] = -b[i]
            if np.any(b != b[0]):
                r, vec = evaluate(b)
                if r < cur - 1e-15:
                    cur, cur_vec, best_i = r, vec, i
            b[i] = -b[i]
        if best_i < 0:
            return cur, cur_vec
        b[best_i] = -b[best_i]


def _run_flow_from(H, u, labels, class_l, params, log=None):
    """Iterate the flow for one class from a given start until the ratio stalls.

    A step that would raise the ratio beyond the descent slack is retried
    with a halved time step.  After each accepted step the best two-level
    rounding of the iterate is tried, and the flow jumps to it when it
    lowers the ratio; at a stall a greedy flip descent on the rounding
    gets one chance to restart the flow.  The recorded history is
    therefore non-increasing and the returned function thresholds cleanly
    at zero.
    """
    d = H.vertex_degrees
    ratio = tv_h(H, u) / norm_and_subgrad(u, d, params.norm)[0]
    rounded = _best_threshold_indicator(H, u, labels, class_l, params)
    if rounded is not None and rounded[0] < ratio:
        ratio, u = rounded
    history = [ratio]
    converged = False
    warm = None
    for k in range(params.max_outer_iters):
        if ratio <= 1e-14:
            converged = True
            break
        dt = params.dt
        accepted = None
        trial_warm = warm
        for _ in range(12):
            step = FlowParams(dt=dt, max_outer_iters=params.max_outer_iters,
                              ratio_tol=params.ratio_tol, inner=params.inner,
                              clamp_value=params.clamp_value, norm=params.norm,
                              init_smoothing=params.init_smoothing)
            u_try, info = flow_step(H, u, step, labels, class_l,
                                    warm_dual=trial_warm, return_info=True)
            r_try = tv_h(H, u_try) / norm_and_subgrad(u_try, d, params.norm)[0]
            if r_try <= ratio + 1e-12:
                accepted = (u_try, r_try, info, dt)
                break
            # halving dt halves the dual caps; scale the warm start along
            trial_warm = info["dual"] * 0.5
            dt *= 0.5
        if accepted is None:
            jump = _flip_descent(H, u, labels, class_l, params)
            if jump is not None and jump[0] < ratio * (1.0 - 1e-10):
                ratio, u = jump
                history.append(ratio)
                warm = None
                continue
            converged = True
            break
        u, new_ratio, info, dt_used = accepted
        warm = info["dual"] * (params.dt / dt_used)
        rounded = _best_threshold_indicator(H, u, labels, class_l, params)
        if rounded is not None and rounded[0] < new_ratio:
            new_ratio, u = rounded
        history.append(min(new_ratio, ratio))
        if log is not None:
            log.write({"class": class_l, "iter": k, "ratio": new_ratio,
                       "gap": info["gap"]})
        if abs(ratio - new_ratio) <= params.ratio_tol * max(ratio, 1e-30):
            ratio = min(new_ratio, ratio)
            jump = _flip_descent(H, u, labels, class_l, params)
            if jump is not None and jump[0] < ratio * (1.0 - 1e-10):
                ratio, u = jump
                history.append(ratio)
                warm = None
                continue
            converged = True
            break
        ratio = min(new_ratio, ratio)
    return u, history, converged


def _run_single_flow(H, labels, class_l, params, log=None):
    """Best flow over the smoothed-label start plus seeded random restarts.

    Restart signings keep labelled nodes on their class side; the winner is
    the run with the lowest final ratio, ties going to the earliest start,
    so the result is deterministic.
    """
    d = H.vertex_degrees
    u0 = _initial_function(H, labels, class_l, params)
    best = _run_flow_from(H, u0, labels, class_l, params, log=log)
    for r in range(1, params.restarts + 1):
        rng = np.random.default_rng(1_000_003 * (class_l + 1) + r)
        b = rng.choice(np.array([-1.0, 1.0]), size=H.n)
        if labels is not None and labels.labeled_mask.any():
            lab = labels.labeled_mask
            b[lab] = np.where(labels.y[lab] == class_l, 1.0, -1.0)
        u0 = center_d(b, d)
        if not np.any(u0):
            continue
        nrm, _ = norm_and_subgrad(u0, d, params.norm)
        trial = _run_flow_from(H, u0 / nrm, labels, class_l, params, log=log)
        if trial[1][-1] < best[1][-1]:
            best = trial
    return best


def _hop_distance_tiebreak(H, labels, tied):
    """Class of the nearest labelled node in hop distance; lower index wins ties."""
    adj = H.adjacency_lists()
    out = {}
    for i in tied:
        best = (np.inf, labels.classes)
        seen = {i}
        frontier = deque([(i, 0)])
        while frontier:
            v, dist = frontier.popleft()
            if labels.labeled_mask[v] and (dist, labels.y[v]) < best:
                best = (dist, int(labels.y[v]))
            if dist < best[0]:
                for nb in adj[v]:
                    if nb not in seen:
                        seen.add(nb)
                        frontier.append((nb, dist + 1))
        out[i] = best[1] if best[1] < labels.classes else 0
    return out


def run_binary_flow(H: Hypergraph, labels: LabelState, params: FlowParams,
                    log=None):
    """Binary diffusion: flow for class 0, threshold at zero.

    Returns the converged node function and a +/-1 partition; +1 is the side
    clamped positive (class 0).  Ties at exactly zero go to the class of the
    nearest labelled node in hop distance, then to the lower class index.
    """
    if labels.classes != 2:
        raise ValueError("run_binary_flow needs exactly two classes")
    labels.require_given_per_class()
    u, history, _ = _run_single_flow(H, labels, 0, params, log=log)
    part = np.where(u > 0, 1, -1)
    tied = np.where(u == 0)[0]
    if tied.size:
        tb = _hop_distance_tiebreak(H, labels, tied.tolist())
        for i in tied:
            part[i] = 1 if tb[int(i)] == 0 else -1
    return u, part


def run_multiclass(H: Hypergraph, labels: LabelState, params: FlowParams,
                   log=None):
    """One-vs-rest flows for every class followed by an argmax labelling.

    Nodes with given labels keep their class.  Returns the stacked node
    functions with per-class diagnostics and the label vector.
    """
    labels.require_given_per_class()
    L = labels.classes
    U = np.zeros((H.n, L))
    histories, flags = [], []
    for l in range(L):
        u, history, conv = _run_single_flow(H, labels, l, params, log=log)
        U[:, l] = u
        histories.append(history)
        flags.append(conv)
    y_hat = np.argmax(U, axis=1)
    given = labels.given_mask
    y_hat[given] = labels.y[given]
    return NodeFunctions(U=U, ratio_history=histories, converged=flags), y_hat
