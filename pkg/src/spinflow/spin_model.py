"""Random local spin-chain Hamiltonians and magnetisation-type observables.

The Hamiltonian family is a sum of n-body Pauli strings on a 1D lattice of L
spin-1/2 sites, where each term acts on n sites spanning at most a diameter d
and carries an i.i.d. normal coupling (mean 0, std 1/2).  The observable is a
site-weighted magnetisation in the z direction; all matrices are represented
in the ascending eigenbasis of that observable, which is the node ordering
used by every graph analysis downstream.

Basis convention: bit i-1 of a configuration bitmask is the state of lattice
site i (bit set = spin up).  The sorted-observable permutation is the single
source of truth mapping node indices to bitmasks.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .errors import CapExceededError, ConvergenceError, ValidationError
from .rng import stream

MAX_SITES = 24               # hard cap on L (N = 2^L)
DENSE_EIG_CUTOFF = 2 ** 12   # dense eigensolves up to this dimension
STRUCTURAL_ZERO = 1e-12      # assembled entries below this magnitude are dropped

AXES = ("x", "y", "z")


@dataclass(frozen=True)
class LocalitySpec:
    """Lattice size and locality parameters of the Hamiltonian family.

    n is the number of sites per interaction term, d the maximum diameter
    (lattice distance between the extremal sites) of a term's support.
    """

    L: int
    n: int
    d: int

    def __post_init__(self):
        if not 2 <= self.L <= MAX_SITES:
            raise CapExceededError(f"L={self.L} outside [2, {MAX_SITES}]")
        if not 1 <= self.n <= self.L:
            raise ValidationError(f"n={self.n} outside [1, L={self.L}]")
        if not self.n - 1 <= self.d <= self.L - 1:
            raise ValidationError(
                f"d={self.d} outside [n-1={self.n - 1}, L-1={self.L - 1}]"
            )

    @property
    def dim(self) -> int:
        return 2 ** self.L


def supports(spec: LocalitySpec) -> Iterator[tuple[int, ...]]:
    """All n-site supports (1-based, sorted) with diameter in the allowed range.

    For n = 1 the only diameter is 0 and every singleton qualifies; for n >= 2
    the diameter runs from n-1 to d.  Enumeration order is deterministic:
    ascending diameter, then ascending leftmost site, then interior sites in
    lexicographic order.
    """
    L, n, d = spec.L, spec.n, spec.d
    if n == 1:
        for i in range(1, L + 1):
            yield (i,)
        return
    for delta in range(n - 1, d + 1):
        if delta < 1:
            continue
        for left in range(1, L - delta + 1):
            right = left + delta
            for interior in itertools.combinations(range(left + 1, right), n - 2):
                yield (left, *interior, right)


def orientations(n: int) -> Iterator[tuple[str, ...]]:
    """All 3^n Pauli-axis assignments, in itertools.product order."""
    return itertools.product(AXES, repeat=n)


def coupling_terms(spec: LocalitySpec) -> Iterator[tuple[tuple[int, ...], tuple[str, ...]]]:
    """Canonical (support, orientation) enumeration the coupling sample covers."""
    for chi in supports(spec):
        for phi in orientations(spec.n):
            yield chi, phi


@dataclass(frozen=True)
class CouplingSample:
    """One disorder realisation: a coupling constant per (support, orientation)."""

    spec: LocalitySpec
    couplings: dict[tuple[tuple[int, ...], tuple[str, ...]], float]


def sample_couplings(spec: LocalitySpec, seed: int) -> CouplingSample:
    """Draw i.i.d. normal couplings (mean 0, std 1/2) for every term.

    Deterministic given (spec, seed); the draw order is the canonical term
    enumeration, so adding unrelated streams elsewhere cannot shift it.
    """
    terms = list(coupling_terms(spec))
    rng = stream(seed, "couplings", spec.L, spec.n, spec.d)
    values = rng.normal(0.0, 0.5, size=len(terms))
    return CouplingSample(spec, dict(zip(terms, values.tolist())))


@dataclass(frozen=True)
class DiagonalObservable:
    """Observable diagonal in the spin-z product basis, eigenvalues sorted.

    perm maps a sorted node index j (0-based) to the configuration bitmask of
    the j-th eigenstate.  Homogeneous mode (all site weights 1) produces the
    binomially degenerate magnetisation spectrum; ties are broken by ascending
    bitmask.  Randomised mode draws site weights from N(1, 1/10), giving a
    strictly increasing spectrum with probability one.
    """

    L: int
    mode: str                    # "randomised" | "homogeneous"
    weights: np.ndarray          # a_m, shape (L,)
    o: np.ndarray                # sorted eigenvalues, shape (N,)
    perm: np.ndarray             # sorted index -> bitmask, shape (N,)

    def __post_init__(self):
        for arr in (self.weights, self.o, self.perm):
            arr.flags.writeable = False

    @property
    def dim(self) -> int:
        return 2 ** self.L

    @cached_property
    def inverse_perm(self) -> np.ndarray:
        inv = np.empty(self.dim, dtype=np.int64)
        inv[self.perm] = np.arange(self.dim)
        inv.flags.writeable = False
        return inv

    @cached_property
    def up_counts(self) -> np.ndarray:
        """Number of up spins of each node's bitmask, in node order."""
        counts = popcount(self.perm)
        counts.flags.writeable = False
        return counts


def popcount(masks: np.ndarray) -> np.ndarray:
    bits = masks.astype(np.uint64)
    out = np.zeros(bits.shape, dtype=np.int64)
    while bits.any():
        out += (bits & 1).astype(np.int64)
        bits >>= np.uint64(1)
    return out


def _bit_signs(L: int, masks: np.ndarray) -> np.ndarray:
    """(len(masks), L) array of +-1: sign of sigma_z at each site."""
    bits = (masks[:, None] >> np.arange(L, dtype=np.uint32)) & 1
    return (2 * bits.astype(np.int8) - 1).astype(np.int8)


def build_observable(L: int, mode: str, seed: int) -> DiagonalObservable:
    """Construct the site-weighted z magnetisation, eigenbasis sorted ascending."""
    if not 2 <= L <= MAX_SITES:
        raise CapExceededError(f"L={L} outside [2, {MAX_SITES}]")
    if mode not in ("randomised", "homogeneous"):
        raise ValidationError(f"unknown observable mode {mode!r}")
    if mode == "homogeneous":
        weights = np.ones(L)
    else:
        weights = stream(seed, "observable", L).normal(1.0, 0.1, size=L)
    N = 2 ** L
    values = np.empty(N)
    chunk = min(N, 1 << 20)
    for start in range(0, N, chunk):
        masks = np.arange(start, min(start + chunk, N), dtype=np.uint32)
        values[start:start + chunk] = _bit_signs(L, masks) @ weights / L
    # stable sort: equal eigenvalues (homogeneous mode) stay in bitmask order
    perm = np.argsort(values, kind="stable").astype(np.int64)
    return DiagonalObservable(L, mode, weights, values[perm], perm)


@dataclass(frozen=True)
class SparseHermitian:
    """Hermitian matrix stored as its upper triangle in sorted coordinates.

    Only entries with row <= col are stored (diagonal real); the full matrix
    is implied by conjugate symmetry, so Hermiticity is structural.
    """

    dim: int
    rows: np.ndarray    # int64, lexicographically sorted with cols
    cols: np.ndarray
    vals: np.ndarray    # complex128
    norm_hint: float | None = None

    def __post_init__(self):
        for arr in (self.rows, self.cols, self.vals):
            arr.flags.writeable = False

    @classmethod
    def from_full_coo(cls, dim, rows, cols, vals, threshold=STRUCTURAL_ZERO,
                      norm_hint=None) -> "SparseHermitian":
        """Coalesce duplicate coordinates of a full-matrix COO and keep the
        upper triangle.  Entries below the structural-zero threshold are
        dropped; tiny imaginary dust on the diagonal is zeroed."""
        m = scipy.sparse.coo_matrix(
            (np.asarray(vals, dtype=np.complex128),
             (np.asarray(rows), np.asarray(cols))),
            shape=(dim, dim),
        ).tocsr().tocoo()  # tocsr sums duplicates and sorts row-major
        keep = (m.row <= m.col) & (np.abs(m.data) >= threshold)
        r, c, v = m.row[keep].astype(np.int64), m.col[keep].astype(np.int64), m.data[keep]
        diag = r == c
        if np.any(np.abs(v[diag].imag) > threshold):
            raise ValidationError("non-real diagonal entries")
        v[diag] = v[diag].real
        return cls(dim, r, c, v, norm_hint)

    @classmethod
    def from_upper(cls, dim, rows, cols, vals, norm_hint=None) -> "SparseHermitian":
        """Build directly from (already unique) upper-triangle coordinates."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.complex128)
        if np.any(rows > cols):
            raise ValidationError("entries must satisfy row <= col")
        order = np.lexsort((cols, rows))
        return cls(dim, rows[order], cols[order], vals[order], norm_hint)

    @property
    def nnz_stored(self) -> int:
        return len(self.vals)

    @property
    def nnz_full(self) -> int:
        """Nonzero count of the full (mirrored) matrix."""
        return len(self.vals) + int(np.count_nonzero(self.rows < self.cols))

    @cached_property
    def csr(self) -> scipy.sparse.csr_matrix:
        """Full Hermitian matrix in CSR form (upper plus mirrored lower)."""
        strict = self.rows < self.cols
        r = np.concatenate([self.rows, self.cols[strict]])
        c = np.concatenate([self.cols, self.rows[strict]])
        v = np.concatenate([self.vals, np.conj(self.vals[strict])])
        return scipy.sparse.coo_matrix((v, (r, c)), shape=(self.dim, self.dim)).tocsr()

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def diagonal(self) -> np.ndarray:
        diag = np.zeros(self.dim)
        on_diag = self.rows == self.cols
        diag[self.rows[on_diag]] = self.vals[on_diag].real
        return diag

    def scaled(self, factor: float, norm_hint=None) -> "SparseHermitian":
        return SparseHermitian(self.dim, self.rows, self.cols,
                               self.vals * factor, norm_hint)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.csr @ x


def build_hamiltonian(spec: LocalitySpec, couplings: CouplingSample,
                      obs: DiagonalObservable) -> SparseHermitian:
    """Assemble the coupled Pauli-string Hamiltonian in the sorted basis of obs.

    Each (support, orientation) term is a generalized diagonal: it maps the
    configuration bitmask s to s XOR f, where f flips the x/y sites, with a
    coefficient that is a product of +-1 (z sites), +-i (y sites) and the
    coupling.  This reproduces the interleaved Kronecker-product assembly
    entry by entry while staying O(N) per term; the dense tensor-product
    oracle in the test suite checks the equivalence.
    """
    if couplings.spec != spec:
        raise ValidationError("coupling sample built for a different spec")
    if obs.L != spec.L:
        raise ValidationError(f"observable has L={obs.L}, spec has L={spec.L}")
    expected = set(coupling_terms(spec))
    got = set(couplings.couplings)
    if got != expected:
        raise ValidationError(
            f"coupling sample covers {len(got)} terms, spec demands {len(expected)}"
        )

    N = spec.dim
    s = np.arange(N, dtype=np.uint32)
    signs = _bit_signs(spec.L, s)          # (N, L), +-1 per site
    inv = obs.inverse_perm

    rows_acc, cols_acc, vals_acc = [], [], []
    cols_sorted = inv[s]
    for (chi, phi), a in couplings.couplings.items():
        if a == 0.0:
            continue
        flip = 0
        sign_sites = []
        n_y = 0
        for site, axis in zip(chi, phi):
            if axis == "z":
                sign_sites.append(site - 1)
            else:
                flip |= 1 << (site - 1)
                if axis == "y":
                    n_y += 1
                    sign_sites.append(site - 1)
        coef = np.full(N, a * (1j ** n_y), dtype=np.complex128)
        for i in sign_sites:
            coef *= signs[:, i]
        rows_acc.append(inv[s ^ np.uint32(flip)])
        cols_acc.append(cols_sorted)
        vals_acc.append(coef)

    if not rows_acc:
        return SparseHermitian(N, np.empty(0, np.int64), np.empty(0, np.int64),
                               np.empty(0, np.complex128))
    return SparseHermitian.from_full_coo(
        N, np.concatenate(rows_acc), np.concatenate(cols_acc), np.concatenate(vals_acc)
    )


def spectral_norm(H: SparseHermitian, tol: float = 1e-9,
                  dense_cutoff: int = DENSE_EIG_CUTOFF) -> float:
    """Largest absolute eigenvalue: dense solve up to dense_cutoff (2^12 by
    default), iterative extremal eigensolve above."""
    if H.nnz_stored == 0:
        return 0.0
    if H.dim <= dense_cutoff:
        eigs = np.linalg.eigvalsh(H.to_dense())
        return float(max(abs(eigs[0]), abs(eigs[-1])))
    try:
        hi = scipy.sparse.linalg.eigsh(H.csr, k=1, which="LA",
                                       return_eigenvectors=False, tol=tol)
        lo = scipy.sparse.linalg.eigsh(H.csr, k=1, which="SA",
                                       return_eigenvectors=False, tol=tol)
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        raise ConvergenceError(f"extremal eigensolve did not converge: {exc}") from exc
    return float(max(abs(hi[0]), abs(lo[0])))


def normalize(H: SparseHermitian, tol: float = 1e-9) -> SparseHermitian:
    """Rescale so the spectral norm is 1; idempotent up to the solve tolerance."""
    nrm = spectral_norm(H, tol)
    if nrm == 0.0:
        raise ValidationError("cannot normalize a zero matrix")
    return H.scaled(1.0 / nrm, norm_hint=1.0)


def exact_hamiltonian(spec: LocalitySpec, obs: DiagonalObservable,
                      seed: int) -> SparseHermitian:
    """One normalized disorder sample of the exact spin-chain Hamiltonian."""
    return normalize(build_hamiltonian(spec, sample_couplings(spec, seed), obs))
