"""The six random graph/matrix ensembles and their construction machinery.

Variants (by flag value): exh draws the exact coupled spin-chain Hamiltonian;
exa keeps its exact adjacency but resamples entries; brf/bvf/brc build banded
graphs (regular / variable-degree / constant-band) inside the observable's
band windows; reg samples uniform regular graphs.  All variants produce
Hermitian matrices with the same total nonzero count as the exact reference
at equal parameters, normalized to unit spectral norm (exact solve up to
2^12, affine extrapolation of the norm above).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .errors import ConstructionError, InfeasibleGraphError, ValidationError
from .graph_analysis import (
    AdjacencyGraph,
    BandwidthProfile,
    block_bandwidth,
    constant_bandwidth,
    degree_formula,
    functional_bandwidth,
    graph_from_edges,
    observable_reach,
    structural_adjacency,
)
from .rng import stream
from .spin_model import (
    DENSE_EIG_CUTOFF,
    DiagonalObservable,
    LocalitySpec,
    SparseHermitian,
    build_hamiltonian,
    build_observable,
    sample_couplings,
    spectral_norm,
)

VARIANTS = ("exh", "exa", "brf", "bvf", "brc", "reg")

# relative slack on the band half-width: the extremal edge attains the reach
# exactly, so searchsorted on o_j +- delta must not round it out of the window
BAND_SLACK = 1e-9

SHUFFLE_CAP = 100   # per-conflict repair attempts
RESTART_CAP = 50    # whole-matrix restarts


@dataclass(frozen=True)
class EnsembleSpec:
    """Which ensemble to sample, at which locality, observable mode and seed."""

    variant: str
    locality: LocalitySpec
    obs_mode: str = "randomised"
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}; pick from {VARIANTS}")
        if self.obs_mode not in ("randomised", "homogeneous"):
            raise ValidationError(f"unknown observable mode {self.obs_mode!r}")


@dataclass(frozen=True)
class WeightModel:
    """Entry statistics for graph-backed variants, at the raw (pre-norm) scale.

    Diagonal entries are real N(0, sigma_diag(L)) with sigma_diag affine in L;
    off-diagonal entries get independent N(0, sigma_off) real and imaginary
    parts (imaginary omitted when complex_off is false).
    """

    diag_coeffs: tuple[float, float]    # sigma_diag(L) = c0 + c1 * L
    sigma_off: float
    complex_off: bool = True

    def sigma_diag(self, L: int) -> float:
        c0, c1 = self.diag_coeffs
        value = c0 + c1 * L
        if value <= 0 or self.sigma_off < 0:
            raise ValidationError("weight model standard deviations must be positive")
        return value


@dataclass(frozen=True)
class ScalingFits:
    """Disorder-averaged size scalings used beyond the exact-solve range.

    The raw spectral norm is fitted affinely in L; the band statistic (the
    literal H'OH - O diagonal maximum on normalized samples) is fitted as
    exp(a * L^b).  Mean values, standard errors and residuals are retained
    for diagnostics.
    """

    sizes: tuple[int, ...]
    norm_coeffs: tuple[float, float]          # ||H|| ~ c0 + c1 * L
    delta_coeffs: tuple[float, float]         # delta ~ exp(a * L^b)
    norm_means: tuple[float, ...] = ()
    norm_ses: tuple[float, ...] = ()
    delta_means: tuple[float, ...] = ()
    delta_ses: tuple[float, ...] = ()
    norm_residuals: tuple[float, ...] = ()
    delta_residuals: tuple[float, ...] = ()

    def norm_at(self, L: int) -> float:
        c0, c1 = self.norm_coeffs
        return c0 + c1 * L

    def delta_at(self, L: int) -> float:
        a, b = self.delta_coeffs
        return float(np.exp(a * L ** b))


def reach_bandwidth(obs: DiagonalObservable, n: int, d: int) -> BandwidthProfile:
    """Band windows from the exact single-term reach of the observable.

    Uses the block-count profile for homogeneous weights (exact integer
    boundaries) and the integrated-density profile with an epsilon-inflated
    reach otherwise.
    """
    if obs.mode == "homogeneous":
        return block_bandwidth(obs, n)
    delta = observable_reach(obs, n, d) * (1.0 + BAND_SLACK)
    return functional_bandwidth(obs, delta)


def _mutual_windows(profile: BandwidthProfile) -> tuple[np.ndarray, np.ndarray]:
    """Inclusive per-node candidate ranges under mutual window membership.

    Requires monotone window ends (true for functional, block and constant
    profiles): an edge (j, k) needs k inside j's window and j inside k's.
    """
    N = profile.dim
    j = np.arange(N)
    lo = np.maximum(j - profile.lower, 0)
    hi = np.minimum(j + profile.upper, N - 1)
    if np.any(np.diff(lo) < 0) or np.any(np.diff(hi) < 0):
        raise ValidationError("band windows must have monotone ends")
    first_reaching = np.searchsorted(hi, j, side="left")     # min k with hi[k] >= j
    last_reaching = np.searchsorted(lo, j, side="right") - 1  # max k with lo[k] <= j
    return np.maximum(lo, first_reaching), np.minimum(hi, last_reaching)


class _BandedState:
    """Mutable bookkeeping for the row-by-row banded graph constructors.

    Tracks, per node: its placed neighbors, its degree e, the number of
    non-full nodes inside its mutual window, and the number of its neighbors
    that are non-full.  From these, the usable free slots z of an incomplete
    row are z = nonfull_in_window - self - nonfull_neighbors.
    """

    def __init__(self, N: int, rho: int, win_lo: np.ndarray, win_hi: np.ndarray):
        self.N = N
        self.rho = rho
        self.win_lo = win_lo
        self.win_hi = win_hi
        self.adj = [set() for _ in range(N)]
        self.e = np.zeros(N, dtype=np.int64)
        self.nonfull_inwin = (win_hi - win_lo + 1).astype(np.int64)
        self.adjn = np.zeros(N, dtype=np.int64)

    def _mark_full(self, x: int):
        self.nonfull_inwin[self.win_lo[x]:self.win_hi[x] + 1] -= 1
        for y in self.adj[x]:
            self.adjn[y] -= 1

    def _mark_nonfull(self, x: int):
        self.nonfull_inwin[self.win_lo[x]:self.win_hi[x] + 1] += 1
        for y in self.adj[x]:
            self.adjn[y] += 1

    def place(self, a: int, b: int):
        self.e[a] += 1
        self.e[b] += 1
        for x in (a, b):
            if self.e[x] == self.rho:
                self._mark_full(x)
        self.adj[a].add(b)
        self.adj[b].add(a)
        self.adjn[a] += self.e[b] < self.rho
        self.adjn[b] += self.e[a] < self.rho

    def remove(self, a: int, b: int):
        self.adjn[a] -= self.e[b] < self.rho
        self.adjn[b] -= self.e[a] < self.rho
        self.adj[a].discard(b)
        self.adj[b].discard(a)
        for x in (a, b):
            if self.e[x] == self.rho:
                self._mark_nonfull(x)
        self.e[a] -= 1
        self.e[b] -= 1

    def margins(self) -> np.ndarray:
        """z - need per node; only meaningful for incomplete rows."""
        z = self.nonfull_inwin - (self.e < self.rho) - self.adjn
        return z - (self.rho - self.e)

    def available(self, j: int) -> np.ndarray:
        ks = np.arange(self.win_lo[j], self.win_hi[j] + 1)
        mask = self.e[ks] < self.rho
        mask &= ks != j
        if self.adj[j]:
            mask &= ~np.isin(ks, list(self.adj[j]))
        return ks[mask]

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        us, vs = [], []
        for j in range(self.N):
            for k in self.adj[j]:
                if j < k:
                    us.append(j)
                    vs.append(k)
        return np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64)


def _check_feasible(N: int, rho: int, win_lo: np.ndarray, win_hi: np.ndarray):
    usable = win_hi - win_lo  # window size minus self
    if rho >= N:
        raise InfeasibleGraphError(f"degree {rho} impossible on {N} nodes")
    if usable.min() < rho:
        j = int(usable.argmin())
        raise InfeasibleGraphError(
            f"node {j} has only {usable[j]} usable in-band partners, needs {rho}"
        )


def _resolve_conflicts(st: _BandedState, rng: np.random.Generator,
                       shuffle_cap: int) -> bool:
    """Repair rows whose remaining window space is short of their need.

    Each repair re-draws one placed entry: pick a full in-window non-neighbor
    k of the deficient row, detach a random earlier edge (c, k), connect
    (r, k), and give row c a fresh uniformly drawn in-band replacement.
    """
    attempts = 0
    while True:
        margins = st.margins()
        bad = np.flatnonzero((st.e < st.rho) & (margins < 0))
        if len(bad) == 0:
            return True
        r = int(bad[0])
        repaired = False
        while attempts < shuffle_cap and not repaired:
            attempts += 1
            ks = np.arange(st.win_lo[r], st.win_hi[r] + 1)
            ks = ks[(st.e[ks] == st.rho) & (ks != r)]
            ks = ks[[k not in st.adj[r] for k in ks]]
            if len(ks) == 0:
                return False
            k = int(rng.choice(ks))
            cs = sorted(c for c in st.adj[k] if c != r)
            rng.shuffle(cs)
            for c in cs:
                st.remove(c, k)
                st.place(r, k)
                repl = st.available(c)
                repl = repl[repl != k]
                if len(repl) > 0:
                    st.place(c, int(rng.choice(repl)))
                    repaired = True
                    break
                st.remove(r, k)
                st.place(c, k)
        if not repaired:
            return False


def _fill_regular_banded(N: int, rho: int, win_lo, win_hi,
                         rng: np.random.Generator,
                         shuffle_cap: int) -> _BandedState | None:
    """One attempt at a banded graph with exact constant degree."""
    st = _BandedState(N, rho, win_lo, win_hi)
    while True:
        margins = st.margins()
        incomplete = st.e < rho
        if not incomplete.any():
            return st
        if (margins[incomplete] < 0).any():
            if not _resolve_conflicts(st, rng, shuffle_cap):
                return None
            continue
        forced = np.flatnonzero(incomplete & (margins == 0))
        j = int(forced[0]) if len(forced) else int(np.flatnonzero(incomplete)[0])
        avail = st.available(j)
        need = rho - st.e[j]
        picks = rng.choice(avail, size=int(need), replace=False)
        for k in sorted(int(k) for k in picks):
            st.place(j, k)


def build_banded_regular(N: int, rho: int, band: BandwidthProfile, seed: int,
                         shuffle_cap: int = SHUFFLE_CAP,
                         restart_cap: int = RESTART_CAP) -> AdjacencyGraph:
    """Random symmetric graph with degree exactly rho inside band windows.

    Rows are completed topmost-first with rows forced by exhausted space
    prioritized; detected conflicts are repaired by re-drawing offending
    earlier entries, and the construction restarts when repairs exhaust
    their budget.
    """
    if band.dim != N:
        raise ValidationError("band profile size does not match N")
    win_lo, win_hi = _mutual_windows(band)
    _check_feasible(N, rho, win_lo, win_hi)
    for attempt in range(restart_cap):
        rng = stream(seed, "banded-regular", attempt)
        st = _fill_regular_banded(N, rho, win_lo, win_hi, rng, shuffle_cap)
        if st is not None:
            u, v = st.edges()
            return graph_from_edges(N, u, v)
    raise ConstructionError(
        f"banded regular graph failed after {restart_cap} restarts"
    )


def first_attempt_success(N: int, rho: int, band: BandwidthProfile,
                          seed: int, shuffle_cap: int = SHUFFLE_CAP) -> bool:
    """Whether a single construction attempt succeeds without restarting."""
    win_lo, win_hi = _mutual_windows(band)
    _check_feasible(N, rho, win_lo, win_hi)
    rng = stream(seed, "banded-regular", 0)
    return _fill_regular_banded(N, rho, win_lo, win_hi, rng, shuffle_cap) is not None


def build_banded_variable(N: int, rho_avg: int, band: BandwidthProfile,
                          seed: int) -> AdjacencyGraph:
    """Banded graph with the exact total edge count but per-node degree free.

    Rows are topped up to the target degree without honoring other rows'
    completions, leaving the conflicts unresolved; the resulting edge surplus
    is then dropped uniformly at random down to the constant-degree count
    (topped up from unused in-band pairs in the rare undershoot case).
    """
    if band.dim != N:
        raise ValidationError("band profile size does not match N")
    win_lo, win_hi = _mutual_windows(band)
    _check_feasible(N, rho_avg, win_lo, win_hi)
    rng = stream(seed, "banded-variable")
    target = N * rho_avg // 2
    adj = [set() for _ in range(N)]
    e = np.zeros(N, dtype=np.int64)
    for j in range(N):
        need = rho_avg - e[j]
        if need <= 0:
            continue
        ks = np.arange(win_lo[j], win_hi[j] + 1)
        ks = ks[ks != j]
        if adj[j]:
            ks = ks[~np.isin(ks, list(adj[j]))]
        picks = rng.choice(ks, size=min(int(need), len(ks)), replace=False)
        for k in picks:
            k = int(k)
            adj[j].add(k)
            adj[k].add(j)
            e[j] += 1
            e[k] += 1
    edges = [(j, k) for j in range(N) for k in adj[j] if j < k]
    if len(edges) > target:
        drop = rng.choice(len(edges), size=len(edges) - target, replace=False)
        keep = np.ones(len(edges), dtype=bool)
        keep[drop] = False
        edges = [edge for edge, flag in zip(edges, keep) if flag]
    elif len(edges) < target:
        have = set(edges)
        pool = [(j, int(k)) for j in range(N)
                for k in range(win_lo[j], win_hi[j] + 1)
                if j < k and (j, k) not in have]
        if len(pool) < target - len(edges):
            raise InfeasibleGraphError("not enough in-band pairs to reach edge target")
        extra = rng.choice(len(pool), size=target - len(edges), replace=False)
        edges.extend(pool[i] for i in extra)
    u = np.array([a for a, _ in edges], dtype=np.int64)
    v = np.array([b for _, b in edges], dtype=np.int64)
    return graph_from_edges(N, u, v)


def build_banded_constant(N: int, rho: int, bmax: int, seed: int) -> AdjacencyGraph:
    """Regular graph whose edges all satisfy |k - j| <= bmax."""
    if rho >= 2 * bmax:
        raise InfeasibleGraphError(f"degree {rho} needs bandwidth > {rho // 2}")
    return build_banded_regular(N, rho, constant_bandwidth(N, bmax), seed)


# expected full-restart count of plain pairing rejection is ~exp((rho^2-1)/4);
# below this budget the exactly uniform sampler is affordable
_REJECTION_BUDGET = 2000.0


def _pairing_rejection(N: int, rho: int, rng: np.random.Generator,
                       restart_cap: int) -> set | None:
    """Exactly uniform simple-graph sampler: restart on any clash."""
    stubs = np.repeat(np.arange(N, dtype=np.int64), rho)
    for _ in range(restart_cap):
        rng.shuffle(stubs)
        a, b = stubs[0::2], stubs[1::2]
        if np.any(a == b):
            continue
        u, v = np.minimum(a, b), np.maximum(a, b)
        order = np.lexsort((v, u))
        u, v = u[order], v[order]
        if np.any((u[1:] == u[:-1]) & (v[1:] == v[:-1])):
            continue
        return set(zip(u.tolist(), v.tolist()))
    return None


def _pairing_rematch(N: int, rho: int, rng: np.random.Generator,
                     restart_cap: int) -> set | None:
    """Stub pairing with per-round rematching of clashing stubs.

    Asymptotically uniform; used where plain rejection would essentially
    never produce a simple graph.
    """

    def suitable(edges, stub_counts):
        if not stub_counts:
            return True
        nodes = sorted(stub_counts)
        for i, s1 in enumerate(nodes):
            for s2 in nodes[i + 1:]:
                if (s1, s2) not in edges:
                    return True
        return False

    def attempt():
        edges = set()
        stubs = list(range(N)) * rho
        while stubs:
            pending = {}
            arr = np.array(stubs)
            rng.shuffle(arr)
            it = iter(arr.tolist())
            for s1, s2 in zip(it, it):
                if s1 > s2:
                    s1, s2 = s2, s1
                if s1 != s2 and (s1, s2) not in edges:
                    edges.add((s1, s2))
                else:
                    pending[s1] = pending.get(s1, 0) + 1
                    pending[s2] = pending.get(s2, 0) + 1
            if not suitable(edges, pending):
                return None
            stubs = [node for node, cnt in pending.items() for _ in range(cnt)]
        return edges

    for _ in range(restart_cap):
        edges = attempt()
        if edges is not None:
            return edges
    return None


def build_regular(N: int, rho: int, seed: int) -> AdjacencyGraph:
    """Random simple rho-regular graph from the stub-pairing model.

    Whole pairings are rejected on any self-loop or duplicate edge, which
    samples exactly uniformly; when the expected number of rejections is
    impractical (large rho) the sampler falls back to rematching clashing
    stubs round by round, which is uniform only asymptotically.
    """
    if rho >= N:
        raise InfeasibleGraphError(f"degree {rho} impossible on {N} nodes")
    if (rho * N) % 2 != 0:
        raise ValidationError("rho * N must be even")
    rng = stream(seed, "regular")
    expected_restarts = math.exp((rho ** 2 - 1) / 4.0)
    if expected_restarts <= _REJECTION_BUDGET:
        cap = int(200 * expected_restarts) + 1000
        edges = _pairing_rejection(N, rho, rng, cap)
    else:
        edges = _pairing_rematch(N, rho, rng, restart_cap=1000)
    if edges is None:
        raise ConstructionError("regular graph sampling exhausted its retries")
    u = np.array([a for a, _ in edges], dtype=np.int64)
    v = np.array([b for _, b in edges], dtype=np.int64)
    return graph_from_edges(N, u, v)


def assign_weights(g: AdjacencyGraph, model: WeightModel, L: int,
                   seed: int) -> SparseHermitian:
    """Random Hermitian entries on a graph, at the raw (unnormalized) scale.

    Every node receives a real diagonal entry (generic couplings leave no
    diagonal zero); each edge gets a complex upper-triangle entry mirrored
    Hermitianly.  Draw order is fixed: diagonal first, then edges sorted.
    """
    rng = stream(seed, "weights")
    N = g.dim
    diag = rng.normal(0.0, model.sigma_diag(L), size=N)
    u, v = g.edge_arrays()
    order = np.lexsort((v, u))
    u, v = u[order], v[order]
    re = rng.normal(0.0, model.sigma_off, size=len(u))
    im = rng.normal(0.0, model.sigma_off, size=len(u)) if model.complex_off else 0.0
    off = re + 1j * im
    keep = off != 0  # sigma_off = 0 degenerates to a diagonal matrix
    rows = np.concatenate([np.arange(N, dtype=np.int64), u[keep]])
    cols = np.concatenate([np.arange(N, dtype=np.int64), v[keep]])
    vals = np.concatenate([diag.astype(np.complex128), off[keep]])
    return SparseHermitian.from_upper(N, rows, cols, vals)


def observable_for(spec: EnsembleSpec) -> DiagonalObservable:
    """The observable realisation any sample of this spec is expressed in."""
    return build_observable(spec.locality.L, spec.obs_mode, spec.seed)


def sample_graph(spec: EnsembleSpec, obs: DiagonalObservable) -> AdjacencyGraph:
    """Adjacency-only sampling for the graph-backed variants (and exa/exh)."""
    loc = spec.locality
    N = loc.dim
    rho = degree_formula(loc.L, loc.n, loc.d)
    if spec.variant in ("exh", "exa"):
        return structural_adjacency(loc, obs)
    if spec.variant == "reg":
        return build_regular(N, rho, spec.seed)
    band = reach_bandwidth(obs, loc.n, loc.d)
    if spec.variant == "brf":
        return build_banded_regular(N, rho, band, spec.seed)
    if spec.variant == "bvf":
        return build_banded_variable(N, rho, band, spec.seed)
    bmax = int(band.b.max())
    return build_banded_constant(N, rho, bmax, spec.seed)


def sample(spec: EnsembleSpec, weights: WeightModel | None = None,
           fits: ScalingFits | None = None) -> SparseHermitian:
    """One normalized Hamiltonian from the requested ensemble.

    exh assembles the exact coupled Hamiltonian and ignores the weight
    model; all other variants draw a graph and assign model weights.
    Normalization uses the exact spectral norm up to dimension 2^12 and the
    fitted affine norm beyond (fits are only required there).
    """
    loc = spec.locality
    obs = observable_for(spec)
    if spec.variant == "exh":
        raw = build_hamiltonian(loc, sample_couplings(loc, spec.seed), obs)
    else:
        if weights is None:
            raise ValidationError(f"variant {spec.variant} needs a weight model")
        raw = assign_weights(sample_graph(spec, obs), weights, loc.L, spec.seed)
    if loc.dim <= DENSE_EIG_CUTOFF:
        nrm = spectral_norm(raw)
        if nrm == 0.0:
            raise ConstructionError("sampled a zero matrix")
    else:
        if fits is None:
            raise ValidationError(
                f"N={loc.dim} is beyond the exact-norm cutoff; scaling fits required"
            )
        nrm = fits.norm_at(loc.L)
        if nrm <= 0:
            raise ValidationError("norm extrapolation is not positive")
    return raw.scaled(1.0 / nrm, norm_hint=1.0)


def _collect_exact_stats(locality: LocalitySpec, sizes, samples_per_size, seed,
                         want_delta: bool):
    """Disorder means of the raw norm (and optionally the band statistic)."""
    from .graph_analysis import delta_o  # local import avoids cycle at module load

    norm_means, norm_ses, delta_means, delta_ses = [], [], [], []
    for L in sizes:
        spec = LocalitySpec(L, locality.n, locality.d)
        norms, deltas = [], []
        for i in range(samples_per_size):
            sub = seed * 100003 + 7919 * L + i
            obs = build_observable(L, "randomised", sub)
            raw = build_hamiltonian(spec, sample_couplings(spec, sub), obs)
            nrm = spectral_norm(raw)
            norms.append(nrm)
            if want_delta:
                deltas.append(delta_o(raw.scaled(1.0 / nrm), obs))
        norm_means.append(float(np.mean(norms)))
        norm_ses.append(float(np.std(norms, ddof=1) / math.sqrt(len(norms))))
        if want_delta:
            delta_means.append(float(np.mean(deltas)))
            delta_ses.append(float(np.std(deltas, ddof=1) / math.sqrt(len(deltas))))
    return norm_means, norm_ses, delta_means, delta_ses


def fit_affine(x, y) -> tuple[float, float]:
    """Least-squares affine fit y ~ c0 + c1 x, returned as (c0, c1)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    design = np.column_stack([np.ones_like(x), x])
    if np.linalg.matrix_rank(design) < 2:
        raise ValidationError("degenerate affine fit design")
    coeffs, *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(coeffs[0]), float(coeffs[1])


def fit_stretched_exponential(x, y) -> tuple[float, float]:
    """Fit y ~ exp(a * x^b) by least squares on log y."""
    x = np.asarray(x, dtype=float)
    logy = np.log(np.asarray(y, dtype=float))
    if np.any(~np.isfinite(logy)):
        raise ValidationError("stretched-exponential fit requires positive data")
    if np.allclose(logy, logy[0]):
        return float(logy[0]), 0.0
    # initial b from the endpoints when the log values share a sign
    if logy[0] * logy[-1] > 0 and x[0] != x[-1]:
        b0 = math.log(logy[-1] / logy[0]) / math.log(x[-1] / x[0])
        a0 = logy[0] / x[0] ** b0
    else:
        b0, a0 = 1.0, float(np.mean(logy / x))
    try:
        popt, _ = scipy.optimize.curve_fit(
            lambda t, a, b: a * t ** b, x, logy, p0=(a0, b0), maxfev=20000
        )
    except RuntimeError as exc:
        raise ValidationError(f"stretched-exponential fit failed: {exc}") from exc
    return float(popt[0]), float(popt[1])


def fit_scalings(locality: LocalitySpec, sizes, samples_per_size: int,
                 seed: int) -> ScalingFits:
    """Fit the raw-norm and band-statistic size scalings from exact samples."""
    sizes = tuple(int(L) for L in sizes)
    if len(sizes) < 4:
        raise ValidationError("need at least 4 system sizes to fit scalings")
    nm, ns, dm, ds = _collect_exact_stats(locality, sizes, samples_per_size,
                                          seed, want_delta=True)
    norm_coeffs = fit_affine(sizes, nm)
    delta_coeffs = fit_stretched_exponential(sizes, dm)
    fits = ScalingFits(sizes, norm_coeffs, delta_coeffs,
                       tuple(nm), tuple(ns), tuple(dm), tuple(ds))
    norm_res = tuple(m - fits.norm_at(L) for L, m in zip(sizes, nm))
    delta_res = tuple(m - fits.delta_at(L) for L, m in zip(sizes, dm))
    return ScalingFits(sizes, norm_coeffs, delta_coeffs, tuple(nm), tuple(ns),
                       tuple(dm), tuple(ds), norm_res, delta_res)


def per_size_weight_stats(locality: LocalitySpec, sizes, samples_per_size: int,
                          seed: int) -> tuple[list[float], list[float]]:
    """Pooled (sigma_diag, sigma_off) entry-statistics estimates per size.

    Off-diagonal real and imaginary parts are pooled together; entries come
    from raw (unnormalized) exact samples.
    """
    diag_stds, off_stds = [], []
    for L in sizes:
        spec = LocalitySpec(L, locality.n, locality.d)
        diag_pool, off_pool = [], []
        for i in range(samples_per_size):
            sub = seed * 100003 + 104729 * L + i
            obs = build_observable(L, "randomised", sub)
            raw = build_hamiltonian(spec, sample_couplings(spec, sub), obs)
            on_diag = raw.rows == raw.cols
            diag_pool.append(raw.vals[on_diag].real)
            off = raw.vals[~on_diag]
            off_pool.append(off.real)
            off_pool.append(off.imag)
        diag_stds.append(float(np.std(np.concatenate(diag_pool))))
        off_stds.append(float(np.std(np.concatenate(off_pool))))
    return diag_stds, off_stds


def fit_weight_model(locality: LocalitySpec, sizes, samples_per_size: int,
                     seed: int) -> WeightModel:
    """Entry statistics fitted over system size: affine sigma_diag(L), with
    the off-diagonal standard deviation averaged (it stays L-independent)."""
    sizes = tuple(int(L) for L in sizes)
    diag_stds, off_stds = per_size_weight_stats(locality, sizes,
                                                samples_per_size, seed)
    coeffs = fit_affine(sizes, diag_stds)
    return WeightModel(coeffs, float(np.mean(off_stds)), complex_off=True)
