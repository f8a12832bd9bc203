"""Time-domain side: stroboscopic evolution, expectation values and averages."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .green import GUARD_BAND
from .operators import BasisWindow, FloquetOperator, ProbeOperator, StateVector, _check_windows, guard_bounds

TAIL_EPS = 1e-12
LEAK_TOL = 1e-10
M_MAX_CAP = 10_000_000


class LeakageWarning(UserWarning):
    """Probability weight reached the edge of a truncated window."""


class DivergenceError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class AverageSeries:
    """Nonnegative sequence ``h(m)``, ``m = 0..len-1``."""

    values: np.ndarray
    kind: str = "generic"
    leakage: float = 0.0
    trusted: bool = True

    def __post_init__(self):
        v = np.array(self.values, float)
        if v.ndim != 1 or not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("series must be a finite, nonnegative 1-d sequence")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class Evolution:
    state: StateVector
    steps: int
    leakage: float
    trusted: bool


def _edge_fraction(op, v, support, guard_band):
    if not op.truncated:
        return 0.0
    a, b = support
    lo, hi = guard_bounds(op, guard_band)
    if a >= lo and b < hi:
        return 0.0
    seg = v[a:b + 1]
    p = seg.real ** 2 + seg.imag ** 2
    total = float(np.sum(p))
    if total == 0:
        return 0.0
    pos = np.arange(a, b + 1)
    return float(np.sum(p[(pos < lo) | (pos >= hi)])) / total


def trajectory(op: FloquetOperator, xi: StateVector, steps: int, guard_band: int = GUARD_BAND):
    """Yield ``(m, coeffs, support, edge_fraction)`` for ``m = 0..steps``.

    Banded operators only touch the positions that can be nonzero, so a
    localized packet costs O(support * bandwidth) per step instead of O(D).
    The yielded array is a reused buffer; copy it if you keep it.
    """
    _check_windows(op.window, xi.window)
    v = np.array(xi.coeffs)
    nz = np.flatnonzero(v)
    support = (int(nz[0]), int(nz[-1])) if nz.size else (0, 0)
    if not op.is_banded:
        for m in range(steps + 1):
            yield m, v, (0, op.dim - 1), _edge_fraction(op, v, (0, op.dim - 1), guard_band)
            if m < steps:
                v = op.matvec(v)
        return
    bufs = [v, np.zeros_like(v)]
    sups = [support, None]
    cur = 0
    for m in range(steps + 1):
        yield m, bufs[cur], sups[cur], _edge_fraction(op, bufs[cur], sups[cur], guard_band)
        if m == steps:
            break
        nxt = 1 - cur
        if sups[nxt] is not None:
            a, b = sups[nxt]
            bufs[nxt][a:b + 1] = 0
        new = op.propagated_support(sups[cur])
        a, b = new
        bufs[nxt][a:b + 1] = 0
        op.matvec(bufs[cur], sups[cur], out=bufs[nxt])
        sups[nxt] = new
        cur = nxt


def evolve(op: FloquetOperator, xi: StateVector, m: int, guard_band: int = GUARD_BAND,
           leak_tol: float = LEAK_TOL) -> Evolution:
    """``U^m xi`` with the largest edge fraction seen along the way."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    leak = 0.0
    for _, v, _, edge in trajectory(op, xi, m, guard_band):
        leak = max(leak, edge)
    v = np.array(v)
    trusted = leak <= leak_tol
    if not trusted:
        warnings.warn(f"edge leakage {leak:.2e} after {m} steps", LeakageWarning, stacklevel=2)
    return Evolution(StateVector(op.window, v), m, leak, trusted)


def expectation_series(op: FloquetOperator, probe: ProbeOperator, xi: StateVector, m_max: int,
                       guard_band: int = GUARD_BAND, leak_tol: float = LEAK_TOL) -> AverageSeries:
    """``E(m) = sum_j lambda_j |(U^m xi)_j|^2`` for ``m = 0..m_max``."""
    E, leak = energy_profile(op, probe, xi, m_max, guard_band)
    lk = float(leak[-1])
    trusted = lk <= leak_tol
    if not trusted:
        warnings.warn(f"edge leakage {lk:.2e} within {m_max} steps", LeakageWarning, stacklevel=2)
    return AverageSeries(E, "expectation", lk, trusted)


def expectation(op: FloquetOperator, probe: ProbeOperator, xi: StateVector, m: int,
                guard_band: int = GUARD_BAND, leak_tol: float = LEAK_TOL) -> float:
    if m < 0:
        raise ValueError("m must be nonnegative")
    return float(expectation_series(op, probe, xi, m, guard_band, leak_tol).values[m])


def expectation_inner(op: FloquetOperator, probe: ProbeOperator, xi: StateVector, m: int) -> float:
    """``<U^m xi, A U^m xi>`` by applying the probe and taking the inner product."""
    psi = evolve(op, xi, m, leak_tol=math.inf).state
    return float(psi.vdot(probe.apply(psi)).real)


@dataclass(frozen=True)
class TimeAverage:
    value: float
    T: float
    m_max: int
    tail_bound: float
    leakage: float
    trusted: bool


def laplace_cutoff(T: float, bound: float, tail_eps: float = TAIL_EPS) -> int:
    """``ceil((T/2) ln(bound/tail_eps))``, the last time step kept in the Laplace sum."""
    if not T > 0:
        raise ValueError("T must be positive")
    if bound <= tail_eps:
        return 0
    m = math.ceil(0.5 * T * math.log(bound / tail_eps))
    if m > M_MAX_CAP:
        raise ValueError(f"Laplace sum needs {m} steps, above the cap {M_MAX_CAP}")
    return m


def _tail_bound(T, bound, m_max):
    w = math.exp(-2.0 / T)
    return (2.0 / T) * bound * math.exp(-2.0 * (m_max + 1) / T) / (1 - w)


def laplace_sum(h, T: float) -> float:
    """``sum_m e^{-2m/T} h(m)`` over the given finite sequence."""
    h = np.asarray(h, float)
    m = np.arange(h.size)
    return math.fsum(np.exp(-2.0 * m / T) * h)


def _energy_bound(probe, xi):
    return float(np.max(probe.lambdas)) * xi.norm() ** 2 if probe.lambdas.size else 0.0


def energy_profile(op: FloquetOperator, probe: ProbeOperator, xi: StateVector, steps: int,
                   guard_band: int = GUARD_BAND) -> tuple:
    """``(E, leak)``: ``E(m)`` for ``m = 0..steps`` and the running maximum edge fraction."""
    _check_windows(probe.window, xi.window)
    lam = probe.lambdas
    E = np.empty(steps + 1)
    leak_prefix = np.empty(steps + 1)
    leak = 0.0
    for m, v, (a, b), edge in trajectory(op, xi, steps, guard_band):
        seg = v[a:b + 1]
        E[m] = np.dot(lam[a:b + 1], seg.real ** 2 + seg.imag ** 2)
        leak = max(leak, edge)
        leak_prefix[m] = leak
    return E, leak_prefix


def time_averages(op: FloquetOperator, probe: ProbeOperator, xi: StateVector, Ts: Sequence[float],
                  tail_eps: float = TAIL_EPS, guard_band: int = GUARD_BAND,
                  leak_tol: float = LEAK_TOL, min_steps: int = 0, profile_out: list | None = None) -> list:
    """Laplace averages for several ``T`` from a single trajectory.

    In a finite window ``E(m) <= max(lambda) |xi|^2``, which bounds the
    discarded tail.  Leakage is measured up to each ``T``'s own cutoff.
    The trajectory runs at least ``min_steps``; pass a list as
    ``profile_out`` to receive the ``(E, leak)`` arrays.
    """
    bound = _energy_bound(probe, xi)
    cuts = [laplace_cutoff(T, bound, tail_eps) for T in Ts]
    if not cuts:
        return []
    E, leak_prefix = energy_profile(op, probe, xi, max(max(cuts), min_steps), guard_band)
    if profile_out is not None:
        profile_out[:] = [E, leak_prefix]
    out = []
    for T, cut in zip(Ts, cuts):
        value = (2.0 / T) * laplace_sum(E[:cut + 1], T)
        lk = float(leak_prefix[cut])
        out.append(TimeAverage(value, T, cut, _tail_bound(T, bound, cut), lk, lk <= leak_tol))
    return out


def drift_window(bandwidth: int, T: float, lam_power: float, tail_eps: float = TAIL_EPS,
                 guard_band: int = GUARD_BAND) -> BasisWindow:
    """Symmetric window wide enough that a packet started at 0 never reaches the guard band.

    A banded operator moves weight at most ``bandwidth`` sites per step, and
    the Laplace sum at ``T`` stops at ``laplace_cutoff``; with ``lambda_j =
    |j|^lam_power`` that cutoff depends on the window, so iterate to a fixed point.
    """
    if bandwidth < 1:
        raise ValueError("bandwidth must be positive")
    M = max(1, int(bandwidth * T))
    for _ in range(50):
        m_max = laplace_cutoff(T, float(M) ** lam_power if lam_power else 1.0, tail_eps)
        need = bandwidth * m_max + guard_band + 1
        if need <= M:
            return BasisWindow.symmetric(M)
        M = need
    raise RuntimeError("window size did not settle")


def laplace_average_time(op: FloquetOperator, probe: ProbeOperator, xi: StateVector, T: float,
                         tail_eps: float = TAIL_EPS) -> float:
    """``(2/T) sum_{m>=0} e^{-2m/T} E(m)``, truncated with tail below ``tail_eps``."""
    res = time_averages(op, probe, xi, [T], tail_eps)[0]
    if not res.trusted:
        warnings.warn(f"edge leakage {res.leakage:.2e} at T={T}", LeakageWarning, stacklevel=2)
    return res.value


def cesaro(h, T: int) -> float:
    """``(1/T) sum_{m=0}^{T} h(m)``."""
    if int(T) != T or T < 1:
        raise ValueError("Cesaro average needs an integer T >= 1")
    h = np.asarray(h, float)
    if h.size < T + 1:
        raise ValueError(f"series has {h.size} terms, need {T + 1}")
    return math.fsum(h[:T + 1]) / T


def cesaro_average(op: FloquetOperator, probe: ProbeOperator, xi: StateVector, T: int) -> float:
    if int(T) != T or T < 1:
        raise ValueError("Cesaro average needs an integer T >= 1")
    series = expectation_series(op, probe, xi, int(T))
    return cesaro(series.values, int(T))


def laplace_transform(seq, s: float, rel_tol: float = 1e-14, max_terms: int = 10**9) -> float:
    """``f_a(s) = sum_{n>=0} e^{-sn} a(n)``.

    ``seq`` is either a finite array (zero beyond its end) or a vectorized
    callable ``a(n_array)``.  For callables the sum runs in chunks of at least
    ``4/s`` terms until the estimated remainder, extrapolated from the ratio of
    the last two chunk sums, is below ``rel_tol`` of the total.
    """
    if not s > 0:
        raise ValueError("Laplace transform needs s > 0")
    if not callable(seq):
        a = np.asarray(seq, float)
        n = np.arange(a.size)
        return math.fsum(np.exp(-s * n) * a)
    L = max(1024, math.ceil(4.0 / s))
    L = min(L, 1 << 21)
    chunks = []
    prev = None
    start = 0
    while True:
        n = np.arange(start, start + L, dtype=np.int64)
        with np.errstate(over="ignore", invalid="ignore"):
            terms = np.exp(-s * n.astype(float)) * np.asarray(seq(n), float)
        if not np.all(np.isfinite(terms)):
            raise DivergenceError(f"terms of the Laplace series overflow near n={start}")
        c = float(np.sum(terms))
        chunks.append(c)
        start += L
        total = math.fsum(chunks)
        if prev is not None:
            if c == 0 and prev == 0:
                break
            rho = c / prev if prev > 0 else (0.0 if c == 0 else math.inf)
            if rho < 1 and c * rho / (1 - rho) <= rel_tol * abs(total):
                break
        prev = c
        if start >= max_terms:
            raise DivergenceError(f"Laplace series not converged after {start} terms (s={s})")
    return total


def rising_product(k: int):
    """``a^k(n) = (n+k)(n+k-1)...(n+1)``."""
    def a(n):
        out = np.ones(np.shape(n))
        for i in range(1, k + 1):
            out = out * (np.asarray(n, float) + i)
        return out
    return a


def sparse_square_sequence(n):
    """``a(j^2) = j`` and zero elsewhere."""
    n = np.asarray(n, np.int64)
    r = np.round(np.sqrt(n.astype(float))).astype(np.int64)
    return np.where(r * r == n, r, 0).astype(float)


@dataclass(frozen=True)
class GrowthExponents:
    beta_e_plus: float
    beta_e_minus: float
    beta_d_plus: float
    beta_d_minus: float
    T_grid: tuple
    sums_e: tuple
    sums_d: tuple
    residual_e: float
    residual_d: float
    fit_window: tuple

    @property
    def averaged_e(self) -> tuple:
        """Cesaro-normalized sums ``(1/T) sum_{m<=T} h``."""
        return tuple(s / T for s, T in zip(self.sums_e, self.T_grid))

    @property
    def averaged_d(self) -> tuple:
        """Laplace-normalized sums ``(2/T) sum e^{-2m/T} h``."""
        return tuple(2 * s / T for s, T in zip(self.sums_d, self.T_grid))

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "beta_e_plus", "beta_e_minus", "beta_d_plus", "beta_d_minus",
            "residual_e", "residual_d")}
        d["T_grid"] = list(self.T_grid)
        d["fit_window"] = list(self.fit_window)
        d["sums_e"] = list(self.sums_e)
        d["sums_d"] = list(self.sums_d)
        d["averaged_e"] = list(self.averaged_e)
        d["averaged_d"] = list(self.averaged_d)
        return d


def _slopes(logT, logS):
    A = np.vstack([logT, np.ones_like(logT)]).T
    coef, *_ = np.linalg.lstsq(A, logS, rcond=None)
    resid = logS - A @ coef
    local = np.diff(logS) / np.diff(logT)
    return float(coef[0]), float(local.min()), float(np.sqrt(np.mean(resid ** 2)))


def growth_exponents(source, T_grid: Sequence[float], tail_rel: float = 1e-12) -> GrowthExponents:
    """Fit the exponents of ``sum_{m<=T} h(m)`` and ``sum_m e^{-2m/T} h(m)``.

    No ``1/T`` prefactors.  ``beta+`` is the least-squares log-log slope over
    the upper half of the grid; ``beta-`` is the smallest slope between
    neighbouring grid points in that same half, a finite stand-in for the
    liminf.  ``source`` is an array or a vectorized callable ``h(m_array)``.
    """
    T = np.asarray(T_grid, float)
    if T.size < 6:
        raise ValueError("growth exponent fit needs at least 6 T values")
    if np.any(T <= 0) or np.any(np.diff(T) <= 0):
        raise ValueError("T grid must be positive and strictly increasing")
    if isinstance(source, AverageSeries):
        source = source.values
    if callable(source):
        top = int(math.floor(T[-1]))
        h_e = np.asarray(source(np.arange(top + 1, dtype=np.int64)), float)
        sums_d = [laplace_transform(source, 2.0 / t, rel_tol=tail_rel) for t in T]
    else:
        h_e = np.asarray(source, float)
        if h_e.size < int(math.floor(T[-1])) + 1:
            raise ValueError("series too short for the largest T")
        sums_d = []
        for t in T:
            s = laplace_sum(h_e, t)
            # remainder if h stayed at its largest value past the end
            rem = float(h_e.max()) * math.exp(-2.0 * h_e.size / t) / (1 - math.exp(-2.0 / t))
            if rem > 1e-6 * s:
                raise ValueError(f"series too short for the Laplace sum at T={t:g}")
            sums_d.append(s)
    if np.any(h_e < 0):
        raise ValueError("series must be nonnegative")
    csum = np.cumsum(h_e)
    sums_e = [float(csum[int(math.floor(t))]) for t in T]
    if min(sums_e) <= 0 or min(sums_d) <= 0:
        raise ValueError("series sums vanish on the grid; exponents undefined")
    half = T.size // 2
    sl = slice(T.size - max(half, 2), T.size)
    lt = np.log(T[sl])
    be_p, be_m, re = _slopes(lt, np.log(np.asarray(sums_e)[sl]))
    bd_p, bd_m, rd = _slopes(lt, np.log(np.asarray(sums_d)[sl]))
    return GrowthExponents(be_p, be_m, bd_p, bd_m, tuple(T.tolist()), tuple(sums_e),
                           tuple(float(x) for x in sums_d), re, rd,
                           (float(T[sl][0]), float(T[sl][-1])))


def log_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    A = np.vstack([np.log(np.asarray(x, float)), np.ones(len(x))]).T
    coef, *_ = np.linalg.lstsq(A, np.log(np.asarray(y, float)), rcond=None)
    return float(coef[0])
