import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from laplacegreen.models import (AliasingError, AutonomousSpec, FourierPotential, RankOneKickedSpec,
                                 RotorSpec, SampledPotential, band_profile, build_autonomous,
                                 build_rank_one_kicked, build_rotor, kick_turns, min_grid_size,
                                 oscillator_levels, rank_one_spec, rotor_probe, single_band)
from laplacegreen.operators import BasisWindow, unitarity_defect


def test_autonomous_integer_levels_give_identity():
    op, probe = build_autonomous(AutonomousSpec(oscillator_levels(5), 2 * math.pi))
    np.testing.assert_array_equal(op.bands[0], np.ones(5))
    assert list(probe(2).lambdas) == [1, 4, 9, 16, 25]


def test_autonomous_rejects_bad_levels():
    with pytest.raises(ValueError):
        AutonomousSpec([1.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        AutonomousSpec([-1.0, 2.0])


def test_rank_one_two_by_two():
    # b = (1, 0), kappa = 1/4: alpha = -1 - i, first column scaled by 1 + alpha
    base = AutonomousSpec([1.0, 2.0], 1.0)
    spec = RankOneKickedSpec(base, 0.25, [1, 0])
    assert abs(spec.alpha - (-1 - 1j)) < 1e-15
    op = build_rank_one_kicked(spec)
    u0, _ = build_autonomous(base)
    col = op.to_dense()[:, 0]
    np.testing.assert_allclose(col, (1 + spec.alpha) * u0.to_dense()[:, 0], atol=1e-15)
    assert unitarity_defect(op) < 1e-14


def test_rank_one_integer_kappa_is_autonomous():
    spec = rank_one_spec(32, 3.0)
    assert spec.alpha == 0
    op = build_rank_one_kicked(spec)
    u0, _ = build_autonomous(spec.base)
    assert np.max(np.abs(op.to_dense() - u0.to_dense())) <= 1e-14


def test_rank_one_rejects_unnormalized_phi():
    with pytest.raises(ValueError):
        RankOneKickedSpec(AutonomousSpec([1.0, 2.0]), 0.3, [1, 1])


@pytest.mark.parametrize("k", [1, 2, -1, -3])
def test_linear_potential_single_band(k):
    w = BasisWindow.symmetric(16)
    op = build_rotor(RotorSpec(1.0, 1, SampledPotential.linear(k, 0.7, min_grid_size(w.dim))), w)
    prof = band_profile(op)
    assert single_band(prof) == -k
    rho = op.meta["rho_hat"]
    assert abs(rho[-k] - np.exp(-0.7j)) < 1e-13
    assert unitarity_defect(op) < 1e-12


def test_cosine_potential_symmetric_profile():
    w = BasisWindow.symmetric(20)
    op = build_rotor(RotorSpec(0.3, 1, SampledPotential.from_function(np.cos, min_grid_size(w.dim))), w)
    prof = dict(band_profile(op))
    assert set(prof) == {-o for o in prof}
    for o, m in prof.items():
        assert abs(m - prof[-o]) < 1e-14
        # Bessel coefficients: |rho_hat(k)| = |J_k(1)|
    assert single_band(list(prof.items())) is None
    assert unitarity_defect(op) < 1e-10


def test_tridiagonal_potential_three_bands():
    w = BasisWindow.symmetric(12)
    op = build_rotor(RotorSpec(0.0, 1, FourierPotential({-1: 0.6, 0: 0.0, 1: 0.8j})), w)
    assert [o for o, _ in band_profile(op)] == [-1, 1]


def test_grid_too_coarse_rejected():
    w = BasisWindow.symmetric(16)
    with pytest.raises(AliasingError):
        build_rotor(RotorSpec(1.0, 1, SampledPotential.linear(1, 0.0, 64)), w)


def test_unresolved_potential_rejected():
    pot = SampledPotential.from_function(lambda x: 40 * np.cos(x), 64)
    with pytest.raises(AliasingError):
        pot.fourier()


def test_kick_turns_exact_for_large_powers():
    # omega = 0.3 as a binary fraction: (num * n^3 mod den) / den
    n = 10**6
    num, den = (0.3).as_integer_ratio()
    assert kick_turns([n], 0.3, 3)[0] == ((num * n**3) % den) / den
    assert kick_turns([5], 0.5, 1)[0] == 0.5


@given(k=st.integers(-4, 4).filter(bool), theta=st.floats(0, 6.28), M=st.integers(8, 40))
def test_linear_band_classification(k, theta, M):
    w = BasisWindow.symmetric(M)
    op = build_rotor(RotorSpec(0.37, 2, SampledPotential.linear(k, theta, min_grid_size(w.dim))), w)
    assert single_band(band_profile(op)) == -k


def test_rotor_probe_counts_both_signs():
    p = rotor_probe(BasisWindow.symmetric(2), 1)
    assert list(p.lambdas) == [4, 1, 0, 1, 4]
