"""Adjacency structure of Hamiltonians in the sorted observable basis.

Nodes are the observable eigenstates in ascending eigenvalue order; an edge
connects j and k wherever the (thresholded) matrix element H_jk is nonzero.
This module extracts those graphs, evaluates the closed-form constant degree
of the exact spin-chain family, and computes the node-dependent bandwidths
that bound how far from the diagonal entries can appear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ValidationError
from .spin_model import (
    DiagonalObservable,
    LocalitySpec,
    SparseHermitian,
    supports,
)


@dataclass(frozen=True)
class AdjacencyGraph:
    """Symmetric unweighted graph over basis nodes, no self-loops.

    Neighbor lists are stored CSR-style (indptr/indices, sorted per node);
    diag flags record which nodes carry a nonzero diagonal matrix element.
    """

    dim: int
    indptr: np.ndarray
    indices: np.ndarray
    diag: np.ndarray

    def __post_init__(self):
        for arr in (self.indptr, self.indices, self.diag):
            arr.flags.writeable = False

    def neighbors(self, j: int) -> np.ndarray:
        return self.indices[self.indptr[j]:self.indptr[j + 1]]

    @property
    def edge_count(self) -> int:
        return len(self.indices) // 2

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique edges as (u, v) arrays with u < v."""
        u = np.repeat(np.arange(self.dim), np.diff(self.indptr))
        v = self.indices
        keep = u < v
        return u[keep], v[keep]

    def has_edge(self, j: int, k: int) -> bool:
        nb = self.neighbors(j)
        i = np.searchsorted(nb, k)
        return i < len(nb) and nb[i] == k


def graph_from_edges(dim: int, u: np.ndarray, v: np.ndarray,
                     diag: np.ndarray | None = None) -> AdjacencyGraph:
    """Build an AdjacencyGraph from unique undirected edge arrays (u != v)."""
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    if np.any(u == v):
        raise ValidationError("self-loops are not allowed")
    src = np.concatenate([u, v])
    dst = np.concatenate([v, u])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(dim + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=dim), out=indptr[1:])
    if diag is None:
        diag = np.zeros(dim, dtype=bool)
    return AdjacencyGraph(dim, indptr, dst, np.asarray(diag, dtype=bool))


def adjacency_of(H: SparseHermitian) -> AdjacencyGraph:
    """Graph of the stored (post-threshold) off-diagonal entries of H."""
    off = H.rows != H.cols
    diag = np.zeros(H.dim, dtype=bool)
    diag[H.rows[~off]] = True
    return graph_from_edges(H.dim, H.rows[off], H.cols[off], diag)


def flip_masks(spec: LocalitySpec) -> np.ndarray:
    """Distinct spin-flip bitmasks realizable by one interaction term.

    A term on support chi with a given orientation tuple flips exactly the
    sites assigned x or y, i.e. an arbitrary subset of chi; the union over
    all supports gives every mask that can connect two basis states.  The
    zero mask (all-z orientations) is included and feeds the diagonal.
    """
    masks = {0}
    for chi in supports(spec):
        bits = [1 << (site - 1) for site in chi]
        for sub in range(1 << len(bits)):
            m = 0
            for i, b in enumerate(bits):
                if sub >> i & 1:
                    m |= b
            masks.add(m)
    return np.array(sorted(masks), dtype=np.uint32)


def structural_adjacency(spec: LocalitySpec, obs: DiagonalObservable) -> AdjacencyGraph:
    """Exact adjacency of the Hamiltonian family, without sampling couplings.

    Couplings are generic (i.i.d. normal), so cancellations have probability
    zero and the graph depends only on which flip masks occur.
    """
    if obs.L != spec.L:
        raise ValidationError("observable size does not match spec")
    N = spec.dim
    inv = obs.inverse_perm
    s = np.arange(N, dtype=np.uint32)
    us, vs = [], []
    for f in flip_masks(spec):
        if f == 0:
            continue
        t = s ^ f
        keep = s < t
        us.append(inv[s[keep]])
        vs.append(inv[t[keep]])
    u = np.concatenate(us)
    v = np.concatenate(vs)
    u2 = np.minimum(u, v)
    v2 = np.maximum(u, v)
    return graph_from_edges(N, u2, v2, diag=np.ones(N, dtype=bool))


def degree_formula(L: int, n: int, d: int) -> int:
    """Closed-form constant node degree of the exact adjacency graph.

    Evaluated in exact integer arithmetic as a sum of L*C(d,q) - q*C(d+1,q+1)
    terms, which is the integral form of the bracketed expression.
    """
    LocalitySpec(L, n, d)  # range validation
    return sum(L * math.comb(d, q) - q * math.comb(d + 1, q + 1) for q in range(n))


def degrees(g: AdjacencyGraph) -> np.ndarray:
    return np.diff(g.indptr)


def delta_o(H: SparseHermitian, obs: DiagonalObservable) -> float:
    """Largest diagonal element of H'OH - O over the observable eigenbasis.

    Literally max_j (sum_k |H_kj|^2 o_k - o_j).  Note this estimator does not
    generally bound the per-edge eigenvalue jumps; use observable_reach for
    the exact bound that defines the band.
    """
    if H.dim != obs.dim:
        raise ValidationError("dimension mismatch between H and observable")
    o = obs.o
    acc = -o.copy()
    w2 = np.abs(H.vals) ** 2
    # column j collects |H_kj|^2 o_k from stored entries and their mirrors
    np.add.at(acc, H.cols, w2 * o[H.rows])
    strict = H.rows < H.cols
    np.add.at(acc, H.rows[strict], w2[strict] * o[H.cols[strict]])
    return float(acc.max())


def observable_reach(obs: DiagonalObservable, n: int, d: int) -> float:
    """Largest observable shift a single interaction term can effect.

    A term flips at most its n support sites, changing the eigenvalue by at
    most (2/L) * (sum of site weights over the support); maximizing over the
    allowed supports (diameter <= d) gives the exact band half-width.  Equals
    2n/L for homogeneous weights.  Attained by an actual edge, so the band
    is tight.
    """
    L = obs.L
    if not 1 <= n <= L:
        raise ValidationError(f"n={n} outside [1, {L}]")
    if not max(n - 1, 0) <= d <= L - 1:
        raise ValidationError(f"d={d} outside [{max(n - 1, 0)}, {L - 1}]")
    w = np.abs(obs.weights)
    if n == 1:
        return float(2.0 * w.max() / L)
    best = 0.0
    for left in range(L - d):
        window = np.sort(w[left:left + d + 1])
        best = max(best, float(window[-n:].sum()))
    return 2.0 * best / L


def distance_to_equilibrium(obs: DiagonalObservable, diag_avg: float) -> np.ndarray:
    """Per-node distance |o_j - diag_avg| to the equilibrium value."""
    return np.abs(obs.o - diag_avg)


@dataclass(frozen=True)
class BandwidthProfile:
    """Per-node band extents: upper[j] nodes above j, lower[j] at or below.

    The allowed window of node j is [j - lower[j], j + upper[j]], clamped to
    the spectrum; kind records how the profile was derived (functional,
    constant, block or empirical).
    """

    upper: np.ndarray
    lower: np.ndarray
    kind: str

    def __post_init__(self):
        self.upper.flags.writeable = False
        self.lower.flags.writeable = False

    @property
    def dim(self) -> int:
        return len(self.upper)

    @cached_property
    def b(self) -> np.ndarray:
        """Single per-node half-band extent, max of the two directions."""
        out = np.maximum(self.upper, self.lower)
        out.flags.writeable = False
        return out

    def window_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Clamped inclusive (low, high) node index arrays."""
        j = np.arange(self.dim)
        lo = np.maximum(j - self.lower, 0)
        hi = np.minimum(j + self.upper, self.dim - 1)
        return lo, hi


def functional_bandwidth(obs: DiagonalObservable, delta: float) -> BandwidthProfile:
    """Band extents from the integrated density of states of the observable.

    upper[j] = G(o_j + delta) - G(o_j) counts eigenvalues in (o_j, o_j+delta];
    lower[j] = G(o_j) - G(o_j - delta) counts those in (o_j-delta, o_j].
    Comparisons are exact on the stored floats.
    """
    if delta < 0:
        raise ValidationError("delta must be nonnegative")
    o = obs.o
    G_up = np.searchsorted(o, o + delta, side="right")
    G_at = np.searchsorted(o, o, side="right")
    G_dn = np.searchsorted(o, o - delta, side="right")
    return BandwidthProfile((G_up - G_at).astype(np.int64),
                            (G_at - G_dn).astype(np.int64), "functional")


def constant_bandwidth(dim: int, bmax: int) -> BandwidthProfile:
    """Node-independent band of half-width bmax."""
    b = np.full(dim, int(bmax), dtype=np.int64)
    return BandwidthProfile(b, b.copy(), "constant")


def empirical_bandwidth(g: AdjacencyGraph) -> BandwidthProfile:
    """Actual distance of the nonzero entry furthest from the diagonal.

    upper/lower record the two directions separately; b gives the furthest
    neighbor distance |k - j| (0 for isolated nodes).
    """
    up = np.zeros(g.dim, dtype=np.int64)
    lo = np.zeros(g.dim, dtype=np.int64)
    j = np.repeat(np.arange(g.dim), np.diff(g.indptr))
    k = g.indices
    np.maximum.at(up, j, np.maximum(k - j, 0))
    np.maximum.at(lo, j, np.maximum(j - k, 0))
    return BandwidthProfile(up, lo, "empirical")


def block_bandwidth(obs: DiagonalObservable, n: int) -> BandwidthProfile:
    """Band extents for the degenerate homogeneous spectrum, by block counts.

    A node in the block with q up spins can reach blocks q-n..q+n; the stored
    extent is the binomial state count of the reachable blocks evaluated from
    the node's own block (constant within a block), so windows clamp at the
    spectrum edges.  upper counts blocks q..q+n, lower counts q-n..q.
    """
    if obs.mode != "homogeneous":
        raise ValidationError("block bandwidth requires a homogeneous observable")
    L = obs.L
    sizes = np.array([math.comb(L, q) for q in range(L + 1)], dtype=np.int64)
    cum = np.concatenate([[0], np.cumsum(sizes)])
    q = obs.up_counts
    hi_block = np.minimum(q + n, L)
    lo_block = np.maximum(q - n, 0)
    upper = cum[hi_block + 1] - cum[q]
    lower = cum[q + 1] - cum[lo_block]
    return BandwidthProfile(upper, lower, "block")


def band_violations(g: AdjacencyGraph, profile: BandwidthProfile) -> int:
    """Number of edges escaping the windows of both endpoints.

    An edge (j, k), j < k, is in band when k - j <= upper[j] and
    k - j <= lower[k].
    """
    u, v = g.edge_arrays()
    gap = v - u
    ok = (gap <= profile.upper[u]) & (gap <= profile.lower[v])
    return int(np.count_nonzero(~ok))


def value_band_violations(H: SparseHermitian, obs: DiagonalObservable,
                          delta: float) -> int:
    """Edges whose eigenvalue jump |o_k - o_j| exceeds delta."""
    off = H.rows != H.cols
    jump = np.abs(obs.o[H.cols[off]] - obs.o[H.rows[off]])
    return int(np.count_nonzero(jump > delta))
