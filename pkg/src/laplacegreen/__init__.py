"""Laplace time averages of Floquet dynamics and their Green-function form.

The identity checked throughout::

    (2/T) sum_m e^{-2m/T} <U^m xi, A U^m xi>
        = 1/(pi e^{-2/T} T) sum_j lambda_j int_0^{2pi} |G_z(j)|^2 dE,   z = e^{-iE + 1/T},

with ``G_z(j) = <phi_j, (U - z)^{-1} xi>`` and ``A phi_j = lambda_j phi_j``.
"""
from .operators import (BasisWindow, FloquetOperator, ProbeOperator, ResolventError, StateVector,
                        WindowMismatch, apply, resolve, unitarity_defect)
from .models import (AliasingError, AutonomousSpec, RankOneKickedSpec, RotorSpec, SampledPotential,
                     FourierPotential, build_autonomous, build_rank_one_kicked, build_rotor,
                     band_profile, random_unitary_operator)
from .green import (QuadratureGrid, green_average, green_integral, green_integrals, green_vector,
                    laplace_average_green)
from .dynamics import (DivergenceError, GrowthExponents, LeakageWarning, cesaro_average, evolve,
                       expectation, growth_exponents, laplace_average_time, laplace_transform,
                       time_averages)

__all__ = [
    "BasisWindow", "FloquetOperator", "ProbeOperator", "ResolventError", "StateVector",
    "WindowMismatch", "apply", "resolve", "unitarity_defect",
    "AliasingError", "AutonomousSpec", "RankOneKickedSpec", "RotorSpec", "SampledPotential",
    "FourierPotential", "build_autonomous", "build_rank_one_kicked", "build_rotor", "band_profile",
    "random_unitary_operator",
    "QuadratureGrid", "green_average", "green_integral", "green_integrals", "green_vector",
    "laplace_average_green",
    "DivergenceError", "GrowthExponents", "LeakageWarning", "cesaro_average", "evolve",
    "expectation", "growth_exponents", "laplace_average_time", "laplace_transform", "time_averages",
]
