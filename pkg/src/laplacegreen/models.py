"""Floquet and probe operators for the model families.

Fourier convention for kicked rotors (momentum basis ``phi_j = e^{ijx}/sqrt(2pi)``)::

    rho_hat(k) = (1/2pi) * integral_0^{2pi} e^{-ikx} e^{-iV(x)} dx

so ``B(m, n) = e^{-i 2pi omega f(n)} rho_hat(m - n)``.  With this sign a linear
potential ``V(x) = N x + theta`` puts its single band at offset ``-N``
(``rho_hat(-N) = e^{-i theta}``, so ``B e_n`` is proportional to ``e_{n-N}``),
and ``V(x) = -N x + theta`` puts it at ``+N``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .operators import BasisWindow, FloquetOperator, ProbeOperator, random_unitary

BAND_TOL = 1e-12
TWO_PI = 2 * np.pi


class AliasingError(ValueError):
    """Potential is not resolved by the sampling grid."""


@dataclass(frozen=True, eq=False)
class AutonomousSpec:
    chi: np.ndarray
    time_step: float = 1.0

    def __post_init__(self):
        chi = np.asarray(self.chi, float)
        if chi.ndim != 1 or chi.size == 0:
            raise ValueError("chi must be a non-empty 1-d sequence")
        if np.any(chi < 0):
            raise ValueError("chi must be nonnegative")
        if np.any(np.diff(chi) <= 0):
            raise ValueError("chi must be strictly increasing")
        if not self.time_step > 0:
            raise ValueError("time_step must be positive")
        object.__setattr__(self, "chi", chi)


def oscillator_levels(dim: int) -> np.ndarray:
    """Integer spectrum ``chi_j = j`` for ``j = 1..dim``."""
    return np.arange(1, dim + 1, dtype=float)


def build_autonomous(spec: AutonomousSpec, window: BasisWindow | None = None):
    """Diagonal ``e^{-i t chi_j}`` and a factory ``q -> ProbeOperator(chi**q)``."""
    window = window or BasisWindow.one_sided(len(spec.chi))
    if len(spec.chi) != window.dim:
        raise ValueError(f"chi has {len(spec.chi)} entries, window has {window.dim}")
    phases = _phase_turns(spec.chi, spec.time_step / TWO_PI)
    # diagonal: the window is invariant, nothing is cut off
    op = FloquetOperator.from_diagonals(
        window, {0: np.exp(-2j * np.pi * phases)}, truncated=False, model="autonomous")

    def probe(q: float) -> ProbeOperator:
        return ProbeOperator.powers(window, spec.chi, q)

    return op, probe


def _phase_turns(values, scale: float) -> np.ndarray:
    """``(scale * values) mod 1``, exact when both are integers or binary fractions."""
    values = np.asarray(values, float)
    if np.all(values == np.round(values)) and float(scale).is_integer():
        return np.zeros_like(values)
    return np.mod(scale * values, 1.0)


@dataclass(frozen=True, eq=False)
class RankOneKickedSpec:
    """``U_F = U_0 (1 + alpha P_phi)`` with ``alpha = e^{-i 2pi kappa} - 1``."""

    base: AutonomousSpec
    kappa: float
    phi_coeffs: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.phi_coeffs, complex)
        if b.shape != self.base.chi.shape:
            raise ValueError("phi coefficients must match chi")
        if abs(np.linalg.norm(b) - 1) > 1e-12:
            raise ValueError(f"phi must be normalized, |b| = {np.linalg.norm(b)!r}")
        object.__setattr__(self, "phi_coeffs", b)

    @property
    def alpha(self) -> complex:
        if float(self.kappa).is_integer():
            return 0j
        return complex(np.exp(-2j * np.pi * self.kappa) - 1)


def exponential_phi(dim: int, scale: float = 5.0) -> np.ndarray:
    """Normalized ``b_j ~ e^{-j/scale}``; every coefficient nonzero (cyclic for H0)."""
    b = np.exp(-np.arange(1, dim + 1) / scale)
    return b / np.linalg.norm(b)


def build_rank_one_kicked(spec: RankOneKickedSpec, window: BasisWindow | None = None):
    window = window or BasisWindow.one_sided(len(spec.base.chi))
    u0, _ = build_autonomous(spec.base, window)
    d = u0.bands[0]
    b = spec.phi_coeffs
    alpha = spec.alpha
    # U0 (I + alpha b b^H), U0 diagonal
    mat = np.diag(d) + alpha * (d * b)[:, None] * b.conj()[None, :]
    return FloquetOperator.dense(window, mat, truncated=True, model="rank_one_kicked",
                                 alpha=alpha, kappa=spec.kappa)


@dataclass(frozen=True, eq=False)
class SampledPotential:
    """``V`` sampled on ``x_g = 2 pi g / G``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, float)
        G = v.size
        if G < 4 or G & (G - 1):
            raise ValueError(f"grid size must be a power of two >= 4, got {G}")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, V: Callable, grid_size: int) -> "SampledPotential":
        x = TWO_PI * np.arange(grid_size) / grid_size
        return cls(np.broadcast_to(np.asarray(V(x), float), x.shape))

    @classmethod
    def linear(cls, k: int, theta: float, grid_size: int) -> "SampledPotential":
        x = TWO_PI * np.arange(grid_size) / grid_size
        return cls(k * x + theta)

    @property
    def grid_size(self) -> int:
        return self.values.size

    def fourier(self, band_tol: float = BAND_TOL) -> dict:
        """Nonzero ``rho_hat(k)`` (magnitude >= band_tol), keyed by offset."""
        G = self.grid_size
        c = np.fft.fft(np.exp(-1j * self.values)) / G
        k = np.fft.fftfreq(G, 1.0 / G).astype(int)
        mag = np.abs(c)
        tail = mag[np.abs(k) >= G // 4]
        if tail.size and tail.max() >= band_tol:
            raise AliasingError(
                f"|rho_hat| = {tail.max():.2e} near grid Nyquist (G={G}); refine the grid")
        keep = mag >= band_tol
        return {int(kk): complex(cc) for kk, cc in sorted(zip(k[keep], c[keep]))}


@dataclass(frozen=True)
class FourierPotential:
    """Explicit ``{offset: rho_hat(offset)}``."""

    coeffs: dict

    def fourier(self, band_tol: float = BAND_TOL) -> dict:
        return {int(k): complex(v) for k, v in sorted(self.coeffs.items()) if abs(v) >= band_tol}


@dataclass(frozen=True, eq=False)
class RotorSpec:
    omega: float
    f_exponent: int = 1
    potential: SampledPotential | FourierPotential = field(
        default_factory=lambda: FourierPotential({0: 1.0}))

    def __post_init__(self):
        if int(self.f_exponent) != self.f_exponent or self.f_exponent < 1:
            raise ValueError("f_exponent must be a positive integer")


def kick_turns(labels, omega: float, power: int) -> np.ndarray:
    """``(omega * n**power) mod 1`` computed exactly for every integer label.

    ``omega`` is taken as its exact binary fraction, so large ``n**power`` do
    not lose the fractional part.
    """
    num, den = float(omega).as_integer_ratio()
    return np.array([((num * int(n) ** power) % den) / den for n in labels], float)


def build_rotor(spec: RotorSpec, window: BasisWindow, band_tol: float = BAND_TOL) -> FloquetOperator:
    """Banded momentum-basis Floquet matrix of a kicked rotor."""
    if isinstance(spec.potential, SampledPotential) and spec.potential.grid_size < 4 * window.dim:
        raise AliasingError(
            f"grid size {spec.potential.grid_size} < 4 * window width {window.dim}")
    rho = spec.potential.fourier(band_tol)
    if not rho:
        raise ValueError("potential has no Fourier coefficient above band_tol")
    g = np.exp(-2j * np.pi * kick_turns(window.labels, spec.omega, spec.f_exponent))
    diagonals = {k: g * c for k, c in rho.items() if abs(k) < window.dim}
    return FloquetOperator.from_diagonals(
        window, diagonals, truncated=True, model="rotor", omega=spec.omega,
        f_exponent=spec.f_exponent, rho_hat=rho)


def rotor_probe(window: BasisWindow, q: float) -> ProbeOperator:
    """``p^{2q}``: eigenvalue ``|j|^{2q}`` at both ``j`` and ``-j``."""
    return ProbeOperator(window, np.abs(window.labels.astype(float)) ** (2 * q))


def index_probe(window: BasisWindow, q: float = 1.0) -> ProbeOperator:
    """``lambda_j = |j|^q`` on the window labels."""
    return ProbeOperator.powers(window, window.labels.astype(float), q)


def band_profile(op: FloquetOperator, band_tol: float = BAND_TOL) -> list:
    """``[(offset, max |entry|)]`` for diagonals above ``band_tol``; offset = row - column."""
    D = op.dim
    out = []
    if op.is_banded:
        for r in range(op.bands.shape[0]):
            k = r - op.upper
            m = float(np.max(np.abs(op.bands[r]))) if D else 0.0
            if m >= band_tol:
                out.append((k, m))
    else:
        a = np.abs(op.matrix)
        for k in range(-(D - 1), D):
            m = float(np.max(np.diagonal(a, -k)))
            if m >= band_tol:
                out.append((k, m))
    return out


def single_band(profile: list, tol: float = 1e-10):
    """Offset of the only band if the profile is one unit-modulus diagonal, else None."""
    if len(profile) == 1 and abs(profile[0][1] - 1) <= tol:
        return profile[0][0]
    return None


def random_unitary_operator(dim: int, seed: int) -> FloquetOperator:
    return FloquetOperator.dense(BasisWindow.one_sided(dim), random_unitary(dim, seed),
                                 model="random_unitary", seed=seed)


def rank_one_spec(dim: int, kappa: float, phi_scale: float = 5.0) -> RankOneKickedSpec:
    """Kicked oscillator with ``chi_j = j`` and exponential ``phi``."""
    base = AutonomousSpec(oscillator_levels(dim), TWO_PI)
    return RankOneKickedSpec(base, kappa, exponential_phi(dim, phi_scale))


def min_grid_size(dim: int) -> int:
    return 1 << max(2, math.ceil(math.log2(4 * dim)))
