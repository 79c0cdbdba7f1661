"""Time evolution under sparse Hamiltonians and equilibration-time measurement.

States are propagated with a truncated-Taylor expansion of the evolution
operator, substepped so each partial sum converges fast and monitored through
a running error estimate; a dense eigendecomposition serves as the oracle in
the test suite.  Equilibration is measured against the infinite-time
(diagonal-ensemble) averages of the observable and its square: the
equilibration time is the first instant both expectation values stay within a
margin, 10% of their initial values by default, refined by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapExceededError, ConvergenceError, ValidationError
from .spin_model import DENSE_EIG_CUTOFF, DiagonalObservable, SparseHermitian

TAYLOR_THETA = 3.0       # substep length in units of 1 / ||H||_1
TAYLOR_MAX_TERMS = 60
ABS_MARGIN_FLOOR = 1e-6  # margin floor when an initial expectation is zero
DEGENERACY_TOL = 1e-10


class _TaylorStepper:
    """Stateful e^{-iH dt} application with substepping and error control."""

    def __init__(self, H: SparseHermitian, tol: float):
        self.csr = H.csr
        self.norm1 = float(np.max(np.abs(H.csr).sum(axis=1))) if H.nnz_stored else 0.0
        # per-substep truncation well below the requested total tolerance,
        # so accumulation over many substeps stays within budget
        self.eps = max(np.finfo(float).eps, tol * 1e-4)

    def step(self, psi: np.ndarray, dt: float) -> np.ndarray:
        if dt == 0.0 or self.norm1 == 0.0:
            return psi
        nsub = max(1, math.ceil(self.norm1 * abs(dt) / TAYLOR_THETA))
        tau = dt / nsub
        for _ in range(nsub):
            term = psi
            acc = psi.copy()
            for k in range(1, TAYLOR_MAX_TERMS + 1):
                term = self.csr.dot(term) * (-1j * tau / k)
                acc += term
                if np.linalg.norm(term) <= self.eps * np.linalg.norm(acc):
                    break
            else:
                raise ConvergenceError(
                    f"Taylor series not converged in {TAYLOR_MAX_TERMS} terms"
                )
            psi = acc
        return psi


def propagate(H: SparseHermitian, psi0: np.ndarray, times,
              tol: float = 1e-10) -> np.ndarray:
    """States e^{-iHt} psi0 at the requested times (must be nondecreasing).

    Accuracy is tol in 2-norm against the exact evolution; the state is never
    renormalized, so norm drift is a genuine error diagnostic.
    """
    times = np.asarray(times, dtype=float)
    if len(times) and (times[0] < 0 or np.any(np.diff(times) < 0)):
        raise ValidationError("times must be nondecreasing and nonnegative")
    stepper = _TaylorStepper(H, tol)
    out = np.empty((len(times), H.dim), dtype=np.complex128)
    psi = np.asarray(psi0, dtype=np.complex128)
    t_prev = 0.0
    for i, t in enumerate(times):
        psi = stepper.step(psi, t - t_prev)
        out[i] = psi
        t_prev = t
    return out


@dataclass(frozen=True)
class EvolutionSeries:
    """Expectation-value trajectory of a diagonal observable and its square."""

    times: np.ndarray
    exp_O: np.ndarray
    exp_O2: np.ndarray
    norms: np.ndarray
    initial_node: int | None = None

    def __post_init__(self):
        for arr in (self.times, self.exp_O, self.exp_O2, self.norms):
            arr.flags.writeable = False

    @property
    def norm_drift(self) -> np.ndarray:
        return np.abs(self.norms - 1.0)


def _expectations(psi: np.ndarray, o: np.ndarray) -> tuple[float, float, float]:
    p = np.abs(psi) ** 2
    return float(o @ p), float((o * o) @ p), float(math.sqrt(p.sum()))


def evolve_series(H: SparseHermitian, obs: DiagonalObservable, psi0: np.ndarray,
                  times, tol: float = 1e-10,
                  initial_node: int | None = None) -> EvolutionSeries:
    """Trajectory of <O>, <O^2> and the state norm on a time grid."""
    states = propagate(H, psi0, times, tol)
    p = np.abs(states) ** 2
    return EvolutionSeries(
        np.asarray(times, dtype=float),
        p @ obs.o,
        p @ (obs.o * obs.o),
        np.sqrt(p.sum(axis=1)),
        initial_node,
    )


def diagonal_average(H: SparseHermitian, obs: DiagonalObservable,
                     psi0: np.ndarray) -> tuple[float, float]:
    """Infinite-time averages of <O> and <O^2> from full diagonalisation.

    Degenerate energy eigenvalues are grouped and handled by projecting the
    initial state onto each eigenspace, which is the basis-independent form
    of the infinite-time average.
    """
    if H.dim > DENSE_EIG_CUTOFF:
        raise CapExceededError(
            f"N={H.dim} above the dense-diagonalisation cap {DENSE_EIG_CUTOFF}; "
            "use a long-time average instead"
        )
    if len(psi0) != H.dim or obs.dim != H.dim:
        raise ValidationError("dimension mismatch")
    w, V = np.linalg.eigh(H.to_dense())
    c = V.conj().T @ np.asarray(psi0, dtype=np.complex128)
    tol = DEGENERACY_TOL * max(1.0, float(np.abs(w).max()))
    starts = np.flatnonzero(np.concatenate([[True], np.diff(w) > tol]))
    amps = np.add.reduceat(V * c, starts, axis=1)
    weight = (np.abs(amps) ** 2).sum(axis=1)
    return float(obs.o @ weight), float((obs.o * obs.o) @ weight)


def long_time_average(series: EvolutionSeries, t_min: float) -> tuple[float, float]:
    """Trapezoidal time averages of <O> and <O^2> over t >= t_min."""
    sel = series.times >= t_min
    if np.count_nonzero(sel) < 2:
        raise ValidationError("need at least two samples past t_min")
    t = series.times[sel]
    span = t[-1] - t[0]
    if span <= 0:
        raise ValidationError("averaging window has zero length")
    avg_O = float(np.trapezoid(series.exp_O[sel], t) / span)
    avg_O2 = float(np.trapezoid(series.exp_O2[sel], t) / span)
    return avg_O, avg_O2


@dataclass(frozen=True)
class EquilibrationResult:
    """First time both moments reach their diagonal averages within margin."""

    T_eq: float | None
    diag_O: float
    diag_O2: float
    margin: float
    horizon: float
    series: EvolutionSeries | None = None

    @property
    def reached(self) -> bool:
        return self.T_eq is not None


def default_time_grid(horizon: float, step: float = 0.1) -> np.ndarray:
    """Geometric early times followed by linear steps up to the horizon."""
    if horizon <= 0:
        raise ValidationError("horizon must be positive")
    geo = np.geomspace(step / 10, min(1.0, horizon), 16)
    lin = np.arange(1.0 + step, horizon + step / 2, step)
    grid = np.concatenate([[0.0], geo, lin])
    return grid[grid <= horizon + 1e-12]


def max_magnetisation_state(obs: DiagonalObservable) -> np.ndarray:
    """Basis state of the node with the largest observable eigenvalue."""
    psi = np.zeros(obs.dim, dtype=np.complex128)
    psi[obs.dim - 1] = 1.0
    return psi


def equilibration_time(H: SparseHermitian, obs: DiagonalObservable,
                       psi0: np.ndarray | None = None, margin: float = 0.10,
                       horizon: float | None = None, grid=None,
                       tol: float = 1e-9, refine_tol: float = 1e-3,
                       keep_series: bool = False) -> EquilibrationResult:
    """First grid time at which <O> and <O^2> both sit within margin of their
    diagonal averages, bisection-refined between the bracketing grid points.

    The margin is relative to the respective initial expectation values, with
    an absolute floor when one of them vanishes.  psi0 defaults to the
    maximum-magnetisation node.  Failure to equilibrate inside the horizon is
    reported, not raised.
    """
    if not 0 < margin < 1:
        raise ValidationError("margin must lie in (0, 1)")
    if psi0 is None:
        psi0 = max_magnetisation_state(obs)
    if horizon is None:
        horizon = 10.0 * obs.L
    if grid is None:
        grid = default_time_grid(horizon)
    grid = np.asarray(grid, dtype=float)

    diag_O, diag_O2 = diagonal_average(H, obs, psi0)
    o = obs.o
    init_O, init_O2, _ = _expectations(np.asarray(psi0, np.complex128), o)
    tol_O = max(margin * abs(init_O), ABS_MARGIN_FLOOR)
    tol_O2 = max(margin * abs(init_O2), ABS_MARGIN_FLOOR)

    def settled(eO: float, eO2: float) -> bool:
        return abs(eO - diag_O) <= tol_O and abs(eO2 - diag_O2) <= tol_O2

    stepper = _TaylorStepper(H, tol)
    psi = np.asarray(psi0, dtype=np.complex128)
    times_out, eO_out, eO2_out, norm_out = [], [], [], []
    t_prev = 0.0
    psi_prev = psi
    hit_index = None
    for i, t in enumerate(grid):
        psi = stepper.step(psi, t - t_prev)
        eO, eO2, nrm = _expectations(psi, o)
        times_out.append(t)
        eO_out.append(eO)
        eO2_out.append(eO2)
        norm_out.append(nrm)
        if settled(eO, eO2):
            hit_index = i
            break
        t_prev = t
        psi_prev = psi

    series = None
    if keep_series:
        series = EvolutionSeries(np.array(times_out), np.array(eO_out),
                                 np.array(eO2_out), np.array(norm_out),
                                 initial_node=int(np.argmax(np.abs(psi0))))
    if hit_index is None:
        return EquilibrationResult(None, diag_O, diag_O2, margin, horizon, series)
    if hit_index == 0:
        return EquilibrationResult(0.0, diag_O, diag_O2, margin, horizon, series)

    # bisection between the last unsettled and the first settled grid point
    lo, hi = t_prev, float(grid[hit_index])
    psi_lo = psi_prev
    while hi - lo > refine_tol:
        mid = 0.5 * (lo + hi)
        psi_mid = stepper.step(psi_lo, mid - lo)
        if settled(*_expectations(psi_mid, o)[:2]):
            hi = mid
        else:
            lo, psi_lo = mid, psi_mid
    return EquilibrationResult(float(hi), diag_O, diag_O2, margin, horizon, series)


def influence_measure(H: SparseHermitian, j: int, k: int, t: float,
                      tol: float = 1e-10) -> float:
    """|(e^{-iHt})_jk|: how strongly node k at time 0 drives node j at time t."""
    if not (0 <= j < H.dim and 0 <= k < H.dim):
        raise ValidationError("node index out of range")
    psi0 = np.zeros(H.dim, dtype=np.complex128)
    psi0[k] = 1.0
    return float(np.abs(propagate(H, psi0, [t], tol)[0, j]))


def coupling_chain_terms(H: SparseHermitian, j: int, k: int, q_max: int,
                         t: float) -> list[tuple[int, float, complex]]:
    """Power-series view of the (j, k) propagator element.

    Returns (q, |w_q| / max_q |w_q|, (H^q)_jk) for q = 0..q_max, where
    w_q = (-it)^q / q!; the weight magnitudes are computed in log space and
    normalized by their maximum to sidestep factorial overflow.  The matrix
    powers are applied to the basis vector of k, so entries unreachable in q
    graph steps are exact zeros.
    """
    if not (0 <= j < H.dim and 0 <= k < H.dim):
        raise ValidationError("node index out of range")
    if q_max < 0:
        raise ValidationError("q_max must be nonnegative")
    csr = H.csr
    v = np.zeros(H.dim, dtype=np.complex128)
    v[k] = 1.0
    powers = [complex(v[j])]
    for _ in range(q_max):
        v = csr.dot(v)
        powers.append(complex(v[j]))
    qs = np.arange(q_max + 1)
    if t == 0.0:
        wmag = (qs == 0).astype(float)
    else:
        logw = qs * math.log(abs(t)) - np.array([math.lgamma(q + 1) for q in qs])
        wmag = np.exp(logw - logw.max())
    return [(int(q), float(w), p) for q, w, p in zip(qs, wmag, powers)]


def smallest_contributing_power(H: SparseHermitian, j: int, k: int,
                                q_max: int) -> int | None:
    """min{q : (H^q)_jk != 0}, or None if no power up to q_max connects them."""
    for q, _, p in coupling_chain_terms(H, j, k, q_max, t=0.0):
        if p != 0:
            return q
    return None
