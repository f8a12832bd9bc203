import numpy as np
import pytest
from hypothesis import given, strategies as st

from laplacegreen.models import (AutonomousSpec, RotorSpec, SampledPotential, build_autonomous,
                                 build_rotor, min_grid_size, oscillator_levels, random_unitary_operator)
from laplacegreen.operators import (BasisWindow, FloquetOperator, ProbeOperator, ResolventError,
                                    StateVector, WindowMismatch, apply, edge_weight, interior_columns,
                                    resolve, unitarity_defect)


def shift_op(M=6, k=1):
    w = BasisWindow.symmetric(M)
    return FloquetOperator.from_diagonals(w, {k: np.ones(w.dim)})


def test_window_labels_and_positions():
    w = BasisWindow.symmetric(3)
    assert w.dim == 7
    assert list(w.labels) == [-3, -2, -1, 0, 1, 2, 3]
    assert w.position(-3) == 0 and w.position(3) == 6
    with pytest.raises(IndexError):
        w.position(4)
    assert BasisWindow.one_sided(5).labels[0] == 1


def test_window_rejects_empty():
    with pytest.raises(ValueError):
        BasisWindow(3, 2)


def test_state_vector_is_read_only():
    v = StateVector.basis(BasisWindow.one_sided(3), 2)
    assert v[2] == 1 and v.norm() == 1
    with pytest.raises(ValueError):
        v.coeffs[0] = 1


def test_window_mismatch_is_an_error():
    op = random_unitary_operator(4, 0)
    with pytest.raises(WindowMismatch):
        apply(op, StateVector.basis(BasisWindow.one_sided(5), 1))


def test_probe_provenance_checked():
    w = BasisWindow.one_sided(3)
    p = ProbeOperator.powers(w, [1.0, 2.0, 3.0], 2)
    assert list(p.lambdas) == [1.0, 4.0, 9.0]
    with pytest.raises(ValueError):
        ProbeOperator(w, [1.0, 4.0, 8.0], chi=[1.0, 2.0, 3.0], q=2)
    with pytest.raises(ValueError):
        ProbeOperator(w, [-1.0, 0.0, 1.0])


def test_shift_interior_defect_zero_boundary_not():
    op = shift_op()
    assert unitarity_defect(op) == 0.0
    assert unitarity_defect(op, interior=False) == 1.0
    mask = interior_columns(op)
    assert not mask[-1] and mask[:-1].all()


def test_banded_matvec_matches_dense():
    rng = np.random.default_rng(1)
    w = BasisWindow.symmetric(20)
    op = FloquetOperator.from_diagonals(w, {k: rng.standard_normal(w.dim) + 1j for k in (-2, 0, 1, 3)})
    v = rng.standard_normal(w.dim) + 1j * rng.standard_normal(w.dim)
    np.testing.assert_allclose(op.matvec(v), op.to_dense() @ v, atol=1e-13)


def test_support_tracked_matvec_matches_full():
    w = BasisWindow.symmetric(30)
    op = build_rotor(RotorSpec(0.3, 1, SampledPotential.from_function(np.cos, min_grid_size(w.dim))), w)
    v = np.zeros(w.dim, complex)
    v[28:33] = [1, 2j, 3, -1, 0.5]
    sup = (28, 32)
    out = np.zeros(w.dim, complex)
    op.matvec(v, sup, out=out)
    np.testing.assert_allclose(out, op.matvec(v), atol=1e-14)


def test_resolve_on_unit_circle_rejected():
    op = random_unitary_operator(4, 2)
    with pytest.raises(ResolventError):
        op.factorize(np.exp(0.3j))


def test_diagonal_resolvent_exact():
    op, _ = build_autonomous(AutonomousSpec(oscillator_levels(4), 1.0))
    z = 1.5j
    x = resolve(op, z, StateVector.basis(op.window, 2))
    d = op.bands[0]
    assert abs(x[2] - 1 / (d[1] - z)) < 1e-15
    assert abs(x[1]) == 0


@given(dim=st.integers(2, 24), seed=st.integers(0, 10**6), m=st.integers(0, 30))
def test_norm_preserved(dim, seed, m):
    op = random_unitary_operator(dim, seed)
    v = StateVector.random(op.window, np.random.default_rng(seed))
    for _ in range(m):
        v = apply(op, v)
    assert abs(v.norm() - 1) < 1e-12


@given(dim=st.integers(2, 16), seed=st.integers(0, 10**6),
       r1=st.floats(1.05, 3.0), r2=st.floats(1.05, 3.0),
       a1=st.floats(0, 6.28), a2=st.floats(0, 6.28))
def test_resolvent_identity(dim, seed, r1, r2, a1, a2):
    # R(z1) - R(z2) = (z1 - z2) R(z1) R(z2)
    op = random_unitary_operator(dim, seed)
    z1, z2 = r1 * np.exp(1j * a1), r2 * np.exp(1j * a2)
    xi = StateVector.random(op.window, np.random.default_rng(seed + 1))
    x1 = resolve(op, z1, xi).coeffs
    x2 = resolve(op, z2, xi).coeffs
    lhs = x1 - x2
    rhs = (z1 - z2) * op.factorize(z1).solve(x2)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


@given(M=st.integers(3, 40), k=st.sampled_from([-3, -1, 1, 2]), r=st.floats(1.01, 2.0),
       E=st.floats(0, 6.28))
def test_banded_solve_matches_dense(M, k, r, E):
    w = BasisWindow.symmetric(M)
    op = build_rotor(RotorSpec(0.3, 1, SampledPotential.linear(k, 0.4, min_grid_size(w.dim))), w)
    z = r * np.exp(-1j * E)
    b = np.arange(w.dim) + 1j
    x = op.factorize(z).solve(b)
    np.testing.assert_allclose(x, np.linalg.solve(op.to_dense() - z * np.eye(w.dim), b), atol=1e-10)


def test_edge_weight_skips_physical_lower_edge():
    op = FloquetOperator.dense(BasisWindow.one_sided(20), np.eye(20), truncated=True)
    w = np.zeros(20)
    w[0] = 1
    assert edge_weight(op, w, 4) == 0
    w[-1] = 1
    assert edge_weight(op, w, 4) == 0.5
