"""Truncated unitary operators, state vectors, probes and resolvent solves.

Operators live on a finite window of the canonical basis.  Two storages are
supported: dense (any unitary, e.g. random self-test matrices or rank-one
kicked oscillators) and banded (kicked rotors, diagonal models).  Banded
matrices use the LAPACK general-band layout ``ab[u + i - j, j] = A[i, j]``
with ``l`` sub- and ``u`` super-diagonals, so resolvent factorizations go
straight to ``zgbtrf``/``zgbtrs``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.linalg import lapack

SOLVE_TOL = 1e-10
UNITARITY_TOL = 1e-10
CIRCLE_GAP = 1e-12


class WindowMismatch(ValueError):
    pass


class ResolventError(ArithmeticError):
    """Raised when ``(U - z)`` cannot be inverted reliably."""


@dataclass(frozen=True)
class BasisWindow:
    """Inclusive index range ``lo..hi`` of basis labels."""

    lo: int
    hi: int

    def __post_init__(self):
        if int(self.lo) != self.lo or int(self.hi) != self.hi:
            raise ValueError("window bounds must be integers")
        if self.lo > self.hi:
            raise ValueError(f"empty window: lo={self.lo} > hi={self.hi}")

    @classmethod
    def one_sided(cls, dim: int) -> "BasisWindow":
        return cls(1, dim)

    @classmethod
    def symmetric(cls, half_width: int) -> "BasisWindow":
        return cls(-half_width, half_width)

    @property
    def dim(self) -> int:
        return self.hi - self.lo + 1

    @property
    def labels(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def position(self, label: int) -> int:
        if not self.lo <= label <= self.hi:
            raise IndexError(f"label {label} outside window [{self.lo}, {self.hi}]")
        return label - self.lo

    def __contains__(self, label) -> bool:
        return self.lo <= label <= self.hi

    @property
    def lower_edge_physical(self) -> bool:
        """A window starting at label 1 is the start of a one-sided basis, not a cut."""
        return self.lo == 1


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StateVector:
    window: BasisWindow
    coeffs: np.ndarray

    def __post_init__(self):
        c = _frozen(self.coeffs, complex)
        if c.shape != (self.window.dim,):
            raise WindowMismatch(
                f"coefficient vector has shape {c.shape}, window needs ({self.window.dim},)")
        if not np.all(np.isfinite(c)):
            raise ValueError("state vector has non-finite entries")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def basis(cls, window: BasisWindow, label: int) -> "StateVector":
        c = np.zeros(window.dim, complex)
        c[window.position(label)] = 1.0
        return cls(window, c)

    @classmethod
    def zeros(cls, window: BasisWindow) -> "StateVector":
        return cls(window, np.zeros(window.dim, complex))

    @classmethod
    def random(cls, window: BasisWindow, rng: np.random.Generator) -> "StateVector":
        c = rng.standard_normal(window.dim) + 1j * rng.standard_normal(window.dim)
        return cls(window, c / np.linalg.norm(c))

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def normalized(self) -> "StateVector":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.window, self.coeffs / n)

    def __getitem__(self, label: int) -> complex:
        return complex(self.coeffs[self.window.position(label)])

    def vdot(self, other: "StateVector") -> complex:
        _check_windows(self.window, other.window)
        return complex(np.vdot(self.coeffs, other.coeffs))


@dataclass(frozen=True, eq=False)
class ProbeOperator:
    """Diagonal nonnegative probe with eigenvalues ``lambdas`` on the window.

    Repeated eigenvalues (e.g. ``|j|^{2q}`` at ``j`` and ``-j``) are just
    repeated entries; nothing else is needed for finite multiplicity.
    """

    window: BasisWindow
    lambdas: np.ndarray
    chi: np.ndarray | None = None
    q: float | None = None

    def __post_init__(self):
        lam = _frozen(self.lambdas, float)
        if lam.shape != (self.window.dim,):
            raise WindowMismatch("probe eigenvalues do not match window")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("probe eigenvalues must be finite and nonnegative")
        object.__setattr__(self, "lambdas", lam)
        if self.chi is not None:
            chi = _frozen(self.chi, float)
            if self.q is None or self.q <= 0:
                raise ValueError("provenance needs a positive exponent q")
            expected = np.abs(chi) ** self.q
            if not np.allclose(lam, expected, rtol=1e-14, atol=0):
                raise ValueError("lambdas are not chi**q")
            object.__setattr__(self, "chi", chi)

    @classmethod
    def powers(cls, window: BasisWindow, chi, q: float) -> "ProbeOperator":
        chi = np.asarray(chi, float)
        return cls(window, np.abs(chi) ** q, chi=chi, q=q)

    def apply(self, v: StateVector) -> StateVector:
        _check_windows(self.window, v.window)
        return StateVector(v.window, self.lambdas * v.coeffs)

    def moment(self, v: StateVector) -> float:
        """``sum_j lambda_j |<phi_j, v>|^2``."""
        _check_windows(self.window, v.window)
        return _weighted_sq(self.lambdas, v.coeffs)


def _weighted_sq(lam, c) -> float:
    return float(np.dot(lam, c.real ** 2 + c.imag ** 2))


def _check_windows(a: BasisWindow, b: BasisWindow):
    if a != b:
        raise WindowMismatch(f"window mismatch: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class FloquetOperator:
    """Truncated one-period propagator.

    Exactly one of ``matrix`` (dense) and ``bands`` (LAPACK band layout with
    ``lower``/``upper`` extents) is set.  ``truncated`` marks operators that
    stand for an infinite system cut to the window; only those report edge
    leakage.
    """

    window: BasisWindow
    matrix: np.ndarray | None = None
    bands: np.ndarray | None = None
    lower: int = 0
    upper: int = 0
    truncated: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        D = self.window.dim
        if (self.matrix is None) == (self.bands is None):
            raise ValueError("give exactly one of matrix= or bands=")
        if self.matrix is not None:
            m = _frozen(self.matrix, complex)
            if m.shape != (D, D):
                raise WindowMismatch(f"matrix shape {m.shape} does not match window dim {D}")
            object.__setattr__(self, "matrix", m)
        else:
            b = _frozen(self.bands, complex)
            if b.shape != (self.lower + self.upper + 1, D):
                raise ValueError("band array shape inconsistent with lower/upper")
            object.__setattr__(self, "bands", b)

    @classmethod
    def dense(cls, window, matrix, truncated=False, **meta) -> "FloquetOperator":
        return cls(window, matrix=matrix, truncated=truncated, meta=meta)

    @classmethod
    def from_diagonals(cls, window, diagonals: dict, truncated=True, **meta) -> "FloquetOperator":
        """Banded operator from ``{offset: values}`` with offset = row - column.

        ``values`` is indexed by column and has length ``dim``; entries whose
        row falls outside the window are ignored.
        """
        D = window.dim
        offsets = [int(k) for k in diagonals] or [0]
        lower = max(0, max(offsets))
        upper = max(0, -min(offsets))
        ab = np.zeros((lower + upper + 1, D), complex)
        cols = np.arange(D)
        for k, vals in diagonals.items():
            vals = np.broadcast_to(np.asarray(vals, complex), (D,))
            ok = (cols + k >= 0) & (cols + k < D)
            ab[upper + k, ok] = vals[ok]
        return cls(window, bands=ab, lower=lower, upper=upper, truncated=truncated, meta=meta)

    @property
    def is_banded(self) -> bool:
        return self.bands is not None

    @property
    def dim(self) -> int:
        return self.window.dim

    @cached_property
    def offsets(self) -> tuple:
        """Diagonals (row - column) carrying at least one nonzero entry."""
        if self.is_banded:
            return tuple(r - self.upper for r in range(self.bands.shape[0])
                         if np.any(self.bands[r] != 0))
        i, j = np.nonzero(self.matrix)
        return tuple(sorted(set((i - j).tolist())))

    def to_dense(self) -> np.ndarray:
        if not self.is_banded:
            return np.array(self.matrix)
        D = self.dim
        out = np.zeros((D, D), complex)
        for r in range(self.bands.shape[0]):
            k = r - self.upper
            cols = np.arange(max(0, -k), min(D, D - k))
            out[cols + k, cols] = self.bands[r, cols]
        return out

    def to_sparse(self):
        if not self.is_banded:
            return scipy.sparse.csr_matrix(self.matrix)
        D = self.dim
        rows, cols, vals = [], [], []
        for r in range(self.bands.shape[0]):
            k = r - self.upper
            c = np.arange(max(0, -k), min(D, D - k))
            rows.append(c + k)
            cols.append(c)
            vals.append(self.bands[r, c])
        return scipy.sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(D, D))

    def matvec(self, v: np.ndarray, support: tuple | None = None,
               out: np.ndarray | None = None) -> np.ndarray:
        """``U @ v`` on raw coefficients.

        With ``support=(a, b)`` the input is assumed zero outside positions
        ``a..b`` and only those columns are touched.  ``out`` (banded only) is
        accumulated into and must be zero on the propagated support.
        """
        if not self.is_banded:
            return self.matrix @ v
        D = self.dim
        a, b = (0, D - 1) if support is None else support
        if out is None:
            out = np.zeros(v.shape, complex)
        for r in range(self.bands.shape[0]):
            k = r - self.upper
            c0, c1 = max(a, -k), min(b, D - 1 - k)
            if c0 > c1:
                continue
            out[c0 + k:c1 + k + 1] += self.bands[r, c0:c1 + 1] * v[c0:c1 + 1]
        return out

    def propagated_support(self, support: tuple) -> tuple:
        """Positions that can be nonzero after one application."""
        offs = self.offsets
        if not self.is_banded or not offs:
            return (0, self.dim - 1) if offs else support
        a, b = support
        return max(0, a + min(offs)), min(self.dim - 1, b + max(offs))

    def factorize(self, z: complex) -> "ResolventFactorization":
        return ResolventFactorization(self, complex(z))


def apply(op: FloquetOperator, v: StateVector) -> StateVector:
    _check_windows(op.window, v.window)
    return StateVector(v.window, op.matvec(v.coeffs))


class ResolventFactorization:
    """LU factorization of ``U - z`` reusable across right-hand sides."""

    def __init__(self, op: FloquetOperator, z: complex, solve_tol: float = SOLVE_TOL):
        if abs(abs(z) - 1.0) < CIRCLE_GAP:
            raise ResolventError(f"z={z} lies on the unit circle; resolvent is ill-posed")
        self.op = op
        self.z = z
        self.solve_tol = solve_tol
        if op.is_banded:
            l, u = op.lower, op.upper
            ab = np.zeros((2 * l + u + 1, op.dim), complex)
            ab[l:] = op.bands
            ab[l + u] -= z
            lu, piv, info = lapack.zgbtrf(ab, l, u)
            if info < 0:
                raise ValueError(f"zgbtrf: illegal argument {-info}")
            self._pivots = lu[l + u]
            self._factors = (lu, piv)
        else:
            a = op.matrix - z * np.eye(op.dim)
            lu, piv, info = lapack.zgetrf(a)
            self._factors = (lu, piv)
            self._pivots = np.diag(lu)
        if info > 0:
            raise ResolventError(f"U - z is singular to working precision at z={z}")
        if self._pivots is not None:
            piv_abs = np.abs(self._pivots)
            if piv_abs.min() <= np.finfo(float).eps * max(piv_abs.max(), 1.0):
                raise ResolventError(f"U - z is singular to working precision at z={z}")

    def solve(self, rhs: np.ndarray, check: bool = True) -> np.ndarray:
        rhs = np.asarray(rhs, complex)
        b = rhs.reshape(self.op.dim, -1)
        lu, piv = self._factors
        if self.op.is_banded:
            x, info = lapack.zgbtrs(lu, self.op.lower, self.op.upper, b, piv)
        else:
            x, info = lapack.zgetrs(lu, piv, b)
        if info != 0:
            raise ResolventError(f"triangular solve failed (info={info})")
        x = x.reshape(rhs.shape)
        if check:
            res = self.residual(x, rhs)
            scale = np.linalg.norm(rhs)
            if not np.isfinite(res) or res > self.solve_tol * max(scale, np.finfo(float).tiny):
                raise ResolventError(
                    f"resolvent residual {res:.3e} exceeds {self.solve_tol:.1e}*|rhs| at z={self.z}")
        return x

    def residual(self, x, rhs) -> float:
        if x.ndim == 1:
            r = self.op.matvec(x) - self.z * x - rhs
        else:
            r = np.column_stack([self.op.matvec(x[:, i]) for i in range(x.shape[1])])
            r = r - self.z * x - rhs
        return float(np.linalg.norm(r))


def resolve(op: FloquetOperator, z: complex, rhs: StateVector,
            factorization: ResolventFactorization | None = None) -> StateVector:
    """Solve ``(U - z) x = rhs``."""
    _check_windows(op.window, rhs.window)
    fac = factorization if factorization is not None else op.factorize(z)
    if fac.op is not op or fac.z != complex(z):
        raise ValueError("factorization belongs to a different operator or z")
    return StateVector(rhs.window, fac.solve(rhs.coeffs))


def interior_columns(op: FloquetOperator) -> np.ndarray:
    """Boolean mask of columns whose band support lies inside the window.

    Non-truncated operators have no boundary: every column is interior.
    """
    D = op.dim
    if not op.truncated or not op.offsets:
        return np.ones(D, bool)
    cols = np.arange(D)
    return (cols + min(op.offsets) >= 0) & (cols + max(op.offsets) <= D - 1)


def unitarity_defect(op: FloquetOperator, interior: bool = True) -> float:
    """Max-norm of ``U*U - I`` restricted to interior columns (or all)."""
    U = op.to_sparse()
    G = (U.conj().T @ U - scipy.sparse.identity(op.dim, complex, format="csr")).tocsr()
    if interior:
        keep = np.flatnonzero(interior_columns(op))
        G = G[keep][:, keep]
    return float(abs(G).max()) if G.nnz else 0.0


def guard_bounds(op: FloquetOperator, guard_band: int) -> tuple:
    """``(a, b)``: positions ``< a`` or ``>= b`` lie within ``guard_band`` of a cut edge."""
    g = min(guard_band, op.dim)
    a = 0 if op.window.lower_edge_physical else g
    return a, max(a, op.dim - g)


def edge_weight(op: FloquetOperator, weights: np.ndarray, guard_band: int) -> float:
    """Fraction of ``weights`` (a nonnegative profile) within ``guard_band`` of a cut edge."""
    if not op.truncated:
        return 0.0
    total = float(np.sum(weights))
    if total == 0:
        return 0.0
    a, b = guard_bounds(op, guard_band)
    edge = float(np.sum(weights[:a])) + float(np.sum(weights[b:]))
    return edge / total


def random_unitary(dim: int, seed: int) -> np.ndarray:
    """Haar-distributed unitary: QR of a seeded complex Gaussian, phases fixed."""
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = scipy.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))
