"""Max-flow analysis of the weighted Hilbert-space graph.

Off-diagonal magnitudes |H_jk| act as capacities of an undirected flow
network between a far-from-equilibrium source node and an equilibrium sink
node.  The maximum flow value is computed exactly with a highest-label
preflow-push algorithm (gap relabeling, BFS height initialization); its
anticorrelation with equilibration times, per-size linear fits, and the
extrapolation of equilibration times to larger systems live here too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .errors import ValidationError
from .spin_model import SparseHermitian

FLOW_EPS = 1e-12  # excess / residual comparisons


@dataclass(frozen=True)
class CapacityGraph:
    """Undirected capacitated graph with designated source and sink."""

    dim: int
    u: np.ndarray
    v: np.ndarray
    cap: np.ndarray
    source: int
    sink: int

    def __post_init__(self):
        for arr in (self.u, self.v, self.cap):
            arr.flags.writeable = False
        if not (0 <= self.source < self.dim and 0 <= self.sink < self.dim):
            raise ValidationError("source or sink out of range")
        if self.source == self.sink:
            raise ValidationError("source equals sink")
        if np.any(self.cap <= 0):
            raise ValidationError("capacities must be positive")


def capacity_graph(H: SparseHermitian, source: int, sink: int) -> CapacityGraph:
    """Flow network with capacities |H_jk| on the off-diagonal entries."""
    off = H.rows != H.cols
    return CapacityGraph(H.dim, H.rows[off], H.cols[off],
                         np.abs(H.vals[off]), source, sink)


class _PushRelabel:
    """Highest-label preflow-push with gap relabeling on antiparallel arcs."""

    def __init__(self, g: CapacityGraph):
        self.N = g.dim
        self.s, self.t = g.source, g.sink
        m = len(g.u)
        # arcs 2e (u->v) and 2e+1 (v->u), each with the edge capacity
        tail = np.empty(2 * m, dtype=np.int64)
        self.head = np.empty(2 * m, dtype=np.int64)
        tail[0::2], self.head[0::2] = g.u, g.v
        tail[1::2], self.head[1::2] = g.v, g.u
        self.resid = np.repeat(np.asarray(g.cap, dtype=float), 2)
        order = np.argsort(tail, kind="stable")
        self.arc_ids = order
        self.head_of = self.head[order]
        counts = np.bincount(tail, minlength=self.N)
        self.first = np.zeros(self.N + 1, dtype=np.int64)
        np.cumsum(counts, out=self.first[1:])
        self.partner = np.arange(2 * m) ^ 1

    def run(self) -> float:
        N, s, t = self.N, self.s, self.t
        resid, head_of, arc_ids, partner = self.resid, self.head_of, self.arc_ids, self.partner
        first = self.first
        height = np.full(N, N, dtype=np.int64)
        # BFS from the sink over the undirected support for exact initial heights
        height[t] = 0
        queue = [t]
        qi = 0
        while qi < len(queue):
            x = queue[qi]
            qi += 1
            for pos in range(first[x], first[x + 1]):
                y = head_of[pos]
                if height[y] == N and y != s:
                    height[y] = height[x] + 1
                    queue.append(y)
        height[s] = N

        excess = np.zeros(N)
        hcount = np.bincount(height, minlength=2 * N + 2).astype(np.int64)
        current = first[:-1].copy()
        lift_cap = 2 * N

        # buckets may hold stale or duplicate entries; pops validate height
        # and excess before discharging
        buckets: list[list[int]] = [[] for _ in range(lift_cap + 1)]
        max_h = 0

        def activate(x):
            nonlocal max_h
            if x != s and x != t and excess[x] > FLOW_EPS and height[x] < lift_cap:
                buckets[height[x]].append(x)
                if height[x] > max_h:
                    max_h = height[x]

        for pos in range(first[s], first[s + 1]):
            a = arc_ids[pos]
            c = resid[a]
            if c > FLOW_EPS:
                y = head_of[pos]
                resid[a] = 0.0
                resid[partner[a]] += c
                excess[y] += c
                excess[s] -= c
                activate(y)

        while max_h >= 0:
            if not buckets[max_h]:
                max_h -= 1
                continue
            x = buckets[max_h].pop()
            if height[x] != max_h or excess[x] <= FLOW_EPS or x in (s, t):
                continue
            while excess[x] > FLOW_EPS and height[x] < lift_cap:
                pos = current[x]
                end = first[x + 1]
                while pos < end:
                    a = arc_ids[pos]
                    y = head_of[pos]
                    if resid[a] > FLOW_EPS and height[x] == height[y] + 1:
                        delta = min(excess[x], resid[a])
                        resid[a] -= delta
                        resid[partner[a]] += delta
                        excess[x] -= delta
                        excess[y] += delta
                        activate(y)
                        if excess[x] <= FLOW_EPS:
                            break
                    pos += 1
                if pos < end:
                    current[x] = pos
                if excess[x] <= FLOW_EPS:
                    break
                # admissible arcs exhausted: relabel
                old_h = int(height[x])
                new_h = lift_cap
                for p2 in range(first[x], end):
                    if resid[arc_ids[p2]] > FLOW_EPS:
                        cand = height[head_of[p2]] + 1
                        if cand < new_h:
                            new_h = cand
                current[x] = first[x]
                hcount[old_h] -= 1
                height[x] = new_h
                hcount[new_h] += 1
                # gap heuristic: the band (old_h, N) is now unreachable
                if hcount[old_h] == 0 and old_h < N:
                    for y in range(N):
                        if y != s and old_h < height[y] < N:
                            hcount[height[y]] -= 1
                            height[y] = N + 1
                            hcount[N + 1] += 1
                            activate(y)
                if height[x] > max_h and height[x] < lift_cap:
                    max_h = int(height[x])

        self.excess = excess
        return float(excess[t])

    def edge_flows(self, g: CapacityGraph) -> np.ndarray:
        """Signed net flow per undirected edge, positive from u to v.

        Pushes on the two antiparallel arcs cancel in the residuals, so each
        arc's cap - resid already equals the signed net flow; the two arcs
        give it with opposite signs and their half-difference recovers it.
        """
        cap = np.asarray(g.cap, dtype=float)
        return 0.5 * ((cap - self.resid[0::2]) - (cap - self.resid[1::2]))


def max_flow(g: CapacityGraph) -> float:
    """Exact maximum flow value between source and sink (0 if disconnected)."""
    if len(g.u) == 0:
        return 0.0
    return _PushRelabel(g).run()


def max_flow_with_assignment(g: CapacityGraph) -> tuple[float, np.ndarray]:
    """Maximum flow value plus the signed per-edge flow decomposition."""
    if len(g.u) == 0:
        return 0.0, np.zeros(0)
    solver = _PushRelabel(g)
    value = solver.run()
    return value, solver.edge_flows(g)


def brute_force_min_cut(g: CapacityGraph) -> float:
    """Exhaustive minimum source/sink cut; oracle for small graphs."""
    free = [x for x in range(g.dim) if x not in (g.source, g.sink)]
    if len(free) > 22:
        raise ValidationError("graph too large for exhaustive cut enumeration")
    u, v, cap = g.u, g.v, g.cap
    best = math.inf
    for bits in range(1 << len(free)):
        side = np.zeros(g.dim, dtype=bool)
        side[g.source] = True
        for i, x in enumerate(free):
            if bits >> i & 1:
                side[x] = True
        cut = float(cap[side[u] != side[v]].sum())
        best = min(best, cut)
    return best


@dataclass(frozen=True)
class CorrelationReport:
    """Pearson correlation of (T_eq, f_max) pairs with a two-sided p-value."""

    coefficient: float
    p_value: float
    n_pairs: int


def correlate(pairs) -> CorrelationReport:
    """Pearson correlation over (T_eq, f_max) pairs; needs real variance."""
    pairs = [(float(a), float(b)) for a, b in pairs]
    if len(pairs) < 10:
        raise ValidationError("need at least 10 pairs to correlate")
    x = np.array([a for a, _ in pairs])
    y = np.array([b for _, b in pairs])
    if np.allclose(x, x[0]) or np.allclose(y, y[0]):
        raise ValidationError("degenerate variance in correlation input")
    r, p = scipy.stats.pearsonr(x, y)
    return CorrelationReport(float(r), float(p), len(pairs))


def group_means(values_by_key: dict) -> dict:
    """Mean and standard error per key of a dict of value lists."""
    out = {}
    for key, vals in values_by_key.items():
        arr = np.asarray(vals, dtype=float)
        se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
        out[key] = (float(arr.mean()), se, len(arr))
    return out


@dataclass(frozen=True)
class FlowFit:
    """Affine relation between per-size mean equilibration time and max flow."""

    slope: float
    intercept: float
    slope_se: float
    intercept_se: float
    n_points: int
    fmax_means: tuple[float, ...]
    teq_means: tuple[float, ...]
    residuals: tuple[float, ...]

    @property
    def fmax_range(self) -> tuple[float, float]:
        return min(self.fmax_means), max(self.fmax_means)


def fit_teq_vs_fmax(fmax_means, teq_means) -> FlowFit:
    """Least-squares line through the per-size (mean f_max, mean T_eq) points."""
    x = np.asarray(fmax_means, dtype=float)
    y = np.asarray(teq_means, dtype=float)
    if len(x) < 3:
        raise ValidationError("need means from at least 3 system sizes")
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ coef
    resid = y - fitted
    dof = len(x) - 2
    var = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = var * np.linalg.inv(design.T @ design)
    return FlowFit(float(coef[0]), float(coef[1]),
                   float(np.sqrt(cov[0, 0])), float(np.sqrt(cov[1, 1])),
                   len(x), tuple(x.tolist()), tuple(y.tolist()),
                   tuple(resid.tolist()))


def extrapolate_teq(fit: FlowFit, fmax: float,
                    trust_frac: float = 1.0) -> tuple[float, bool]:
    """Equilibration-time estimate slope*fmax + intercept.

    The boolean flags extrapolation beyond the fitted f_max range expanded by
    trust_frac of its span on either side.
    """
    lo, hi = fit.fmax_range
    span = hi - lo
    outside = not (lo - trust_frac * span <= fmax <= hi + trust_frac * span)
    return fit.slope * fmax + fit.intercept, outside
