import math

import numpy as np
import pytest

from laplacegreen.green import (QuadratureGrid, circle_point, green_average, green_eta_consistency,
                                green_integral, green_integrals, green_vector, prefactor)
from laplacegreen.models import (AutonomousSpec, RotorSpec, SampledPotential, build_autonomous,
                                 build_rotor, index_probe, min_grid_size, random_unitary_operator)
from laplacegreen.operators import BasisWindow, StateVector


def test_circle_point_modulus():
    z = circle_point(4.0, 1.3)
    assert abs(abs(z) - math.exp(0.25)) < 1e-15
    with pytest.raises(ValueError):
        circle_point(0.0, 1.0)


def test_grid_validation_and_sizing():
    with pytest.raises(ValueError):
        QuadratureGrid(8)
    g = QuadratureGrid.for_accuracy(100.0, 1e-6)
    assert g.aliasing_estimate(100.0) <= 1e-6
    assert QuadratureGrid(g.n_nodes // 2).aliasing_estimate(100.0) > 1e-6 or g.n_nodes == 1024


def test_prefactor():
    assert prefactor(2.0) == math.e / (2 * math.pi)


def test_green_eta_consistency():
    op = random_unitary_operator(16, 5)
    assert green_eta_consistency(op, 3.0, 0.8) < 1e-12


def test_diagonal_integral_is_residue():
    op, _ = build_autonomous(AutonomousSpec([0.3, 1.7, 5.0], 1.0))
    for j in (1, 2, 3):
        I = green_integral(op, StateVector.basis(op.window, j), 1.0, j)
        assert abs(I - 2 * math.pi / math.expm1(2.0)) < 1e-12


def test_threads_do_not_change_bits():
    op = random_unitary_operator(24, 9)
    xi = StateVector.random(op.window, np.random.default_rng(0))
    a = green_integrals(op, xi, 5.0, QuadratureGrid(256), workers=1)
    b = green_integrals(op, xi, 5.0, QuadratureGrid(256), workers=8)
    assert a.tobytes() == b.tobytes()


def test_green_vector_values():
    op = random_unitary_operator(8, 1)
    xi = StateVector.basis(op.window, 1)
    g = green_vector(op, xi, 2.0, 0.4)
    U = op.to_dense()
    expected = np.linalg.solve(U - g.z * np.eye(8), xi.coeffs)
    np.testing.assert_allclose(g.values, expected, atol=1e-12)
    assert g[1] == g.values[0]


def test_rotor_leakage_flagged_in_frequency_domain():
    w = BasisWindow.symmetric(30)
    op = build_rotor(RotorSpec(1.0, 1, SampledPotential.linear(1, 0.0, min_grid_size(w.dim))), w)
    xi = StateVector.basis(w, 0)
    probe = index_probe(w, 1)
    assert green_average(op, probe, xi, 1.0).leakage < 1e-15
    assert green_average(op, probe, xi, 200.0).leakage > 1e-2
