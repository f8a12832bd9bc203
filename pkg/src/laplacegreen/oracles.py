"""Closed-form ground truth for the model families, plus two structural checks.

Everything here is evaluated from explicit formulas and is kept independent of
the numerical pipeline in :mod:`green` and :mod:`dynamics`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import laplace_transform
from .green import QuadratureGrid, circle_point, laplace_average_green, prefactor
from .models import BAND_TOL, RankOneKickedSpec, band_profile, kick_turns, single_band
from .operators import FloquetOperator, ProbeOperator, StateVector, interior_columns


class BandStructureError(ValueError):
    pass


def _laplace_weight(T: float) -> float:
    """``2 / ((1 - e^{-2/T}) T)``."""
    return 2.0 / (-math.expm1(-2.0 / T) * T)


def autonomous_closed_form(probe: ProbeOperator, xi: StateVector, T: float) -> float:
    """``2/((1-e^{-2/T}) T) * |H0^{q/2} xi|^2`` for a diagonal ``U = e^{-i t H0}``."""
    if probe.chi is None:
        raise ValueError("probe needs (chi, q) provenance")
    moment = math.fsum(probe.lambdas * np.abs(xi.coeffs) ** 2)
    return _laplace_weight(T) * moment


def residue_integral(T: float) -> float:
    """``int_0^{2pi} dE / |e^{-i chi} - e^{-iE + 1/T}|^2 = 2 pi / (e^{2/T} - 1)``."""
    if not T > 0:
        raise ValueError("T must be positive")
    return 2 * math.pi / math.expm1(2.0 / T)


@dataclass(frozen=True)
class KickedHOClosedForm:
    b1: complex
    kappa: float
    q: float
    phi_moment: float

    def __post_init__(self):
        if abs(self.b1) > 1 + 1e-12:
            raise ValueError("|b1| must not exceed 1")
        if self.phi_moment < 0:
            raise ValueError("phi moment must be nonnegative")

    @classmethod
    def from_spec(cls, spec: RankOneKickedSpec, q: float) -> "KickedHOClosedForm":
        b = spec.phi_coeffs
        moment = math.fsum(spec.base.chi ** q * np.abs(b) ** 2)
        return cls(complex(b[0]), float(spec.kappa), q, moment)

    @property
    def alpha(self) -> complex:
        if float(self.kappa).is_integer():
            return 0j
        return complex(np.exp(-2j * np.pi * self.kappa) - 1)


def kicked_ho_green_coeffs(b, kappa: float, z: complex) -> np.ndarray:
    """``a_j = G_z^{phi_1}(j)`` for the kicked oscillator with ``chi_j = j``."""
    if abs(abs(z) - 1) < 1e-12:
        raise ValueError("z must be off the unit circle")
    b = np.asarray(b, complex)
    alpha = 0j if float(kappa).is_integer() else complex(np.exp(-2j * np.pi * kappa) - 1)
    c = 1 + alpha
    common = alpha * np.conj(b[0]) / ((1 - z) * (c - z))
    a = -common * b
    a[0] += 1 / (1 - z)
    return a


def kicked_ho_laplace(cf: KickedHOClosedForm, T: float) -> float:
    """Three-term closed form of the Laplace average from ``phi_1``."""
    if not T > 0:
        raise ValueError("T must be positive")
    w = _laplace_weight(T)
    if float(cf.kappa).is_integer():
        return w  # lambda_1 = 1
    alpha = cf.alpha
    c = np.exp(-2j * np.pi * cf.kappa)
    cb = np.conj(c)
    e = math.exp(2.0 / T)
    b1 = abs(cf.b1) ** 2
    t1 = w * (1 - b1 - alpha * b1 / (c - e))
    t2 = -2 * b1 / (math.exp(-2.0 / T) * (cb - e) * T)
    t3 = 2 * alpha * b1 / (-math.expm1(-2.0 / T) * T) * (1 / (c - e) - cb / (cb - e)) * cf.phi_moment
    val = complex(t1 + t2 + t3)
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ArithmeticError(f"closed form has imaginary part {val.imag:.3e}")
    return val.real


def kicked_ho_stability_constant(cf: KickedHOClosedForm, T0: float = 1.0) -> float:
    """``C`` with ``L(T) <= C (1 + <phi, H0^q phi> + 1/T)`` for all ``T >= T0``.

    Termwise bounds on the closed form, using ``|c - x| >= |c - 1| = |alpha|``
    for ``|c| = 1`` and real ``x >= 1``, and ``x/(1-e^{-x}) <= 1 + x``.
    """
    if float(cf.kappa).is_integer():
        return 1 + 2 / T0
    b1 = abs(cf.b1) ** 2
    a = abs(cf.alpha)
    w = 1 + 2 / T0
    return max(w, 4 * b1 * w, 2 * b1 * math.exp(2 / T0) / a)


def rotor_linear_Ij(k: int, j: int, T: float) -> float:
    """``int |G_z^{phi_0}(j)|^2 dE`` for ``V(x) = kx``, ``omega = 1``."""
    if k == 0 or int(k) != k:
        raise ValueError("k must be a nonzero integer")
    if j % k:
        return 0.0
    l = j // k
    if l >= 1:
        return 0.0
    return 2 * math.pi * math.exp(-2.0 * (1 - l) / T)


def rotor_lower_bound(k: int, q: float, T: float) -> float:
    """``(2 |k|^{2q} / T) sum_{l>=1} l^{2q} e^{-2l/T}``."""
    s = laplace_transform(lambda n: n.astype(float) ** (2 * q), 2.0 / T)
    return 2 * abs(k) ** (2 * q) / T * s


@dataclass(frozen=True, eq=False)
class ShiftCheck:
    offset: int
    theta: float
    phases: np.ndarray
    defect: float


def _rho_at(op, s, omega, power):
    """Recover ``rho_hat(s)`` from one column, undoing the kick phase."""
    lab = op.window.labels
    D = op.dim
    # first column whose image stays in the window
    n = next(i for i in range(D) if 0 <= i + s < D)
    entry = op.to_sparse()[n + s, n]
    return complex(entry) * np.exp(2j * np.pi * kick_turns([lab[n]], omega, power)[0])


def shift_equivalence_check(op: FloquetOperator, omega: float, power: int,
                            band_tol: float = BAND_TOL) -> ShiftCheck:
    """Diagonal ``W`` making ``W^{-1} B W`` the ``s``-th power of the bilateral shift.

    ``B e_n = e^{-i 2pi omega f(n)} e^{-i theta} e_{n+s}``.  The phases follow
    ``v_{n+s} - v_n = 2 pi omega f(n) + theta`` seeded with zeros on one
    residue class representative each; ``W = diag(e^{-i v_n})``.
    """
    s = single_band(band_profile(op, band_tol))
    if s is None or s == 0:
        raise BandStructureError("band structure violated: expected one unit-modulus off-diagonal")
    rho = _rho_at(op, s, omega, power)
    theta_turns = (-np.angle(rho) / (2 * np.pi)) % 1.0
    lab = op.window.labels
    D = op.dim
    f_turns = kick_turns(lab, omega, power)
    N = abs(s)
    turns = np.full(D, np.nan)
    for r in range(N):
        # seed at the label congruent to r nearest to 0, then walk both ways
        seed_label = r if r in op.window else next(x for x in lab if (x - r) % N == 0)
        i0 = seed_label - op.window.lo
        turns[i0] = 0.0
        i = i0
        while 0 <= i + s < D:
            turns[i + s] = (turns[i] + f_turns[i] + theta_turns) % 1.0
            i += s
        i = i0
        while 0 <= i - s < D:
            turns[i - s] = (turns[i] - f_turns[i - s] - theta_turns) % 1.0
            i -= s
    cols = np.arange(D)
    ok = (cols + s >= 0) & (cols + s < D) & interior_columns(op)
    c = cols[ok]
    band = op.bands[op.upper + s, c] if op.is_banded else op.matrix[c + s, c]
    conj = np.exp(2j * np.pi * (turns[c + s] - turns[c])) * band
    defect = float(np.max(np.abs(conj - 1))) if c.size else 0.0
    phases = 2 * np.pi * turns
    phases.setflags(write=False)
    return ShiftCheck(int(s), float(2 * np.pi * theta_turns), phases, defect)


def predicted_exponent(delta: float, alpha: float, gamma: float) -> float:
    """Exponent ``delta (gamma - 2 alpha + 1) - 2`` of the certified lower bound."""
    return delta * (gamma - 2 * alpha + 1) - 2


@dataclass(frozen=True)
class CertificateSpec:
    K: float
    alpha: float
    delta: float
    gamma: float = 0.0
    intervals: tuple = ((0.0, 2 * math.pi),)
    selector: Callable | None = None
    samples: int = 33

    def __post_init__(self):
        if not (self.K > 0 and self.alpha > 0 and self.delta > 0):
            raise ValueError("K, alpha and delta must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        for a, b in self.intervals:
            if not 0 <= a <= b <= 2 * math.pi:
                raise ValueError(f"interval ({a}, {b}) not inside [0, 2pi]")

    def J(self, N: int) -> list:
        return list(self.selector(N) if self.selector else self.intervals)


def neighbourhood(intervals, T: float) -> list:
    """``1/T``-neighbourhood on the circle as merged intervals inside ``[0, 2pi]``."""
    two_pi = 2 * math.pi
    pieces = []
    for a, b in intervals:
        lo, hi = a - 1.0 / T, b + 1.0 / T
        if hi - lo >= two_pi:
            return [(0.0, two_pi)]
        if lo < 0:
            pieces += [(0.0, hi), (lo + two_pi, two_pi)]
        elif hi > two_pi:
            pieces += [(lo, two_pi), (0.0, hi - two_pi)]
        else:
            pieces.append((lo, hi))
    pieces.sort()
    merged = []
    for a, b in pieces:
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


@dataclass(frozen=True)
class CertificateRow:
    T: float
    N: int
    hypothesis_ok: bool
    min_ratio: float
    measure: float
    bound: float
    measured_L: float
    predicted_exponent: float

    def record(self) -> str:
        return (f"T={self.T:.6g},N={self.N},hypothesis_ok={int(self.hypothesis_ok)},"
                f"bound={self.bound:.10e},measured_L={self.measured_L:.10e}")


def instability_certificate(op: FloquetOperator, xi: StateVector, probe: ProbeOperator,
                            cert: CertificateSpec, T_grid: Sequence[float],
                            grid: QuadratureGrid = QuadratureGrid(),
                            measure: Callable | None = None) -> list:
    """Check the Green-function lower-bound hypothesis and emit the implied bound.

    For each ``T``: ``N = [T^delta]``; ``|G_z(j)| >= K / N^alpha`` is tested
    for ``N <= j <= 2N`` on sampled energies of the ``1/T``-neighbourhood of
    ``J(N)``.  Where it holds the bound is the explicit chain

        L >= 1/(pi e^{-2/T} T) * min_{N<=j<=2N} lambda_j * (N + 1) K^2 / N^{2 alpha} * (1/T)

    using ``|J_T(N)| >= 1/T``.
    """
    rows = []
    measure = measure or (lambda T: laplace_average_green(op, probe, xi, T, grid))
    for T in T_grid:
        N = int(math.floor(T ** cert.delta))
        labels = list(range(N, 2 * N + 1))
        inside = N >= 1 and all(j in op.window for j in labels)
        J_T = neighbourhood(cert.J(N), T)
        size = sum(b - a for a, b in J_T)
        ok = inside and bool(J_T)
        ratio = math.nan
        if ok:
            thresh = cert.K / N ** cert.alpha
            pos = np.array([op.window.position(j) for j in labels])
            worst = math.inf
            for a, b in J_T:
                for E in np.linspace(a, b, cert.samples):
                    g = op.factorize(circle_point(T, E)).solve(xi.coeffs)
                    worst = min(worst, float(np.min(np.abs(g[pos]))))
            ratio = worst / thresh
            ok = ratio >= 1
        bound = math.nan
        if ok:
            lam = float(np.min(probe.lambdas[pos]))
            bound = prefactor(T) * lam * (N + 1) * cert.K ** 2 / N ** (2 * cert.alpha) / T
        rows.append(CertificateRow(float(T), N, ok, ratio, size, bound, float(measure(T)),
                                   predicted_exponent(cert.delta, cert.alpha, cert.gamma)))
    return rows
