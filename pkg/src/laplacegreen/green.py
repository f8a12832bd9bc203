"""Green functions on the circle ``|z| = e^{1/T}`` and the frequency-domain average.

For each quadrature node ``E`` one LU factorization of ``U - z`` is built and
one solve gives the whole vector ``G_z(j) = <phi_j, (U - z)^{-1} xi>``; the
probe-weighted sum over ``j`` reads components of that single solve.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .operators import (BasisWindow, FloquetOperator, ProbeOperator, StateVector,
                        _check_windows, edge_weight)

# nodes per work unit; fixed so the reduction order never depends on the thread count
BLOCK = 32
GUARD_BAND = 8


def circle_point(T: float, E: float) -> complex:
    """``z = e^{-iE + 1/T}``."""
    if not T > 0:
        raise ValueError("T must be positive")
    return complex(np.exp(-1j * E + 1.0 / T))


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform rectangle rule on ``[0, 2pi)``."""

    n_nodes: int = 1024

    def __post_init__(self):
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 16:
            raise ValueError(f"need at least 16 quadrature nodes, got {self.n_nodes}")

    @property
    def nodes(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_nodes) / self.n_nodes

    @property
    def weight(self) -> float:
        return 2 * np.pi / self.n_nodes

    def aliasing_estimate(self, T: float) -> float:
        """Relative rectangle-rule error for a single-pole integrand at this ``T``.

        The integrand is analytic only in a strip of half-width ``1/T``, so
        the error decays like ``e^{-N_E/T}``, not uniformly in ``T``.
        """
        r = math.exp(-self.n_nodes / T)
        return 2 * r / (1 - r) if r < 1 else math.inf

    @classmethod
    def for_accuracy(cls, T: float, rel_tol: float, minimum: int = 1024) -> "QuadratureGrid":
        """Smallest power-of-two grid whose aliasing estimate is below ``rel_tol``."""
        n = max(minimum, 16)
        while cls(n).aliasing_estimate(T) > rel_tol:
            n *= 2
        return cls(n)


@dataclass(frozen=True, eq=False)
class GreenSample:
    T: float
    E: float
    z: complex
    values: np.ndarray
    window: BasisWindow

    def __getitem__(self, label: int) -> complex:
        return complex(self.values[self.window.position(label)])


def green_vector(op: FloquetOperator, xi: StateVector, T: float, E: float,
                 factorization=None) -> GreenSample:
    _check_windows(op.window, xi.window)
    z = circle_point(T, E)
    fac = factorization or op.factorize(z)
    vals = fac.solve(xi.coeffs)
    vals.setflags(write=False)
    return GreenSample(T, E, z, vals, op.window)


def green_eta_consistency(op: FloquetOperator, T: float, E: float, start: int | None = None) -> float:
    """Max discrepancy between ``G_z`` and ``(U eta - delta_start)/z`` for ``xi = phi_start``."""
    start = op.window.lo if start is None else start
    xi = StateVector.basis(op.window, start)
    g = green_vector(op, xi, T, E)
    rhs = op.matvec(g.values) - xi.coeffs
    return float(np.max(np.abs(g.values - rhs / g.z)))


def _block_sums(op, xi_coeffs, T, nodes):
    """Neumaier-compensated sum over ``nodes`` (in order) of ``|G_z(j)|^2`` per ``j``."""
    s = np.zeros(op.dim)
    c = np.zeros(op.dim)
    for E in nodes:
        g = op.factorize(circle_point(T, E)).solve(xi_coeffs)
        x = g.real ** 2 + g.imag ** 2
        t = s + x
        c += np.where(np.abs(s) >= x, (s - t) + x, (x - t) + s)
        s = t
    return s, c


def green_integrals(op: FloquetOperator, xi: StateVector, T: float,
                    grid: QuadratureGrid = QuadratureGrid(), workers: int = 1) -> np.ndarray:
    """``int_0^{2pi} |G_z(j)|^2 dE`` for every ``j`` in the window."""
    _check_windows(op.window, xi.window)
    nodes = grid.nodes
    blocks = [nodes[i:i + BLOCK] for i in range(0, len(nodes), BLOCK)]
    coeffs = np.asarray(xi.coeffs)

    def work(block):
        return _block_sums(op, coeffs, T, block)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    # fixed-order compensated reduction of the block partials
    s = np.zeros(op.dim)
    c = np.zeros(op.dim)
    for ps, pc in parts:
        for x in (ps, pc):
            t = s + x
            c += np.where(np.abs(s) >= np.abs(x), (s - t) + x, (x - t) + s)
            s = t
    return (s + c) * grid.weight


def green_integral(op: FloquetOperator, xi: StateVector, T: float, j: int,
                   grid: QuadratureGrid = QuadratureGrid()) -> float:
    pos = op.window.position(j)
    return float(green_integrals(op, xi, T, grid)[pos])


def prefactor(T: float) -> float:
    """``1 / (pi e^{-2/T} T)``."""
    return math.exp(2.0 / T) / (math.pi * T)


@dataclass(frozen=True)
class GreenAverage:
    value: float
    T: float
    n_nodes: int
    leakage: float
    aliasing_estimate: float


def green_average(op: FloquetOperator, probe: ProbeOperator, xi: StateVector, T: float,
                  grid: QuadratureGrid = QuadratureGrid(), workers: int = 1,
                  guard_band: int = GUARD_BAND) -> GreenAverage:
    """Frequency-domain Laplace average with its diagnostics."""
    _check_windows(probe.window, xi.window)
    I = green_integrals(op, xi, T, grid, workers)
    value = prefactor(T) * math.fsum(probe.lambdas * I)
    leak = edge_weight(op, I, guard_band)
    return GreenAverage(value, T, grid.n_nodes, leak, grid.aliasing_estimate(T))


def laplace_average_green(op: FloquetOperator, probe: ProbeOperator, xi: StateVector, T: float,
                          grid: QuadratureGrid = QuadratureGrid(), workers: int = 1) -> float:
    """``(1/(pi e^{-2/T} T)) sum_j lambda_j int |G_z(j)|^2 dE``."""
    return green_average(op, probe, xi, T, grid, workers).value
