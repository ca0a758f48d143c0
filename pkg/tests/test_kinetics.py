import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from porebio.errors import InputError
from porebio.kinetics import BioParams, SystemState, monod, reaction_jacobian, reaction_rhs

P = BioParams(D_n=1.0)
mass = st.floats(min_value=0.0, max_value=1e3, allow_nan=False, allow_infinity=False)
states = arrays(np.float64, 5, elements=mass)


def central_fd(s, p, h=1e-6):
    J = np.zeros((5, 5))
    for k in range(5):
        e = np.zeros(5)
        e[k] = h
        J[:, k] = (reaction_rhs(s + e, p) - reaction_rhs(s - e, p)) / (2 * h)
    return J


def test_paper_defaults():
    d = BioParams(D_n=0.0).to_dict()
    assert (d["eta"], d["mu"], d["rho"], d["c2"], d["c1"], d["K"], d["K_b"]) == (
        0.2, 0.5, 0.55, 0.3, 0.01, 9.6, 0.001)


def test_params_validation():
    with pytest.raises(InputError):
        BioParams(D_n=-1.0)
    with pytest.raises(InputError):
        BioParams(D_n=1.0, rho=1.5)
    with pytest.raises(InputError):
        BioParams(D_n=1.0, K_b=0.0)
    with pytest.raises(InputError):
        BioParams.from_dict({"K": 1.0})
    with pytest.raises(InputError):
        BioParams.from_dict({"D_n": 1.0, "nu": 2.0})
    assert BioParams.from_dict(P.to_dict()) == P


def test_monod_values():
    assert monod(0.0, P) == 0.0
    assert monod(P.K_b, P) == pytest.approx(P.K / 2)
    assert monod(0.001, P) == pytest.approx(4.8)
    with pytest.raises(ValueError):
        monod(-1e-3, P)


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_monod_monotone_and_bounded(a, b):
    lo, hi = sorted((a, b))
    assert monod(lo, P) <= monod(hi, P) <= P.K


def test_rhs_hand_evaluated():
    np.testing.assert_allclose(reaction_rhs(np.array([1.0, 0, 0, 0, 0]), P),
                               [-0.7, 0.275, 0.225, 0.0, 0.2], rtol=1e-15, atol=1e-16)


@given(st.floats(0, 1e3), st.floats(0, 1e3))
def test_equilibrium_set_is_fixed(n, c):
    np.testing.assert_array_equal(reaction_rhs(np.array([0.0, n, 0.0, 0.0, c]), P), 0.0)


@given(states)
def test_rhs_sums_to_zero(s):
    r = reaction_rhs(s, P)
    scale = np.abs(r).max() + 1e-300
    assert abs(r.sum()) <= 8 * np.finfo(float).eps * scale


@given(states, st.integers(0, 4))
def test_quasi_positivity(s, k):
    s = s.copy()
    s[k] = 0.0
    assert reaction_rhs(s, P)[k] >= 0.0


@given(states)
def test_structure(s):
    r = reaction_rhs(s, P)
    assert r[4] >= 0.0
    assert r[3] == -P.c2 * s[3]


@given(states)
def test_jacobian_columns_sum_to_zero(s):
    J = reaction_jacobian(s, P)
    assert np.abs(J.sum(axis=0)).max() <= 1e-12 * max(1.0, np.abs(J).max())


def test_jacobian_fom_row_at_zero_biomass():
    J = reaction_jacobian(np.array([0.0, 0.3, 0.2, 0.1, 0.0]), P)
    assert J[3, 3] == -P.c2
    np.testing.assert_array_equal(J[3, [0, 1, 2, 4]], 0.0)


@pytest.mark.parametrize("scale", [1.0, 1e-2])
def test_jacobian_against_finite_differences(scale, rng):
    for _ in range(50):
        s = rng.random(5) * scale
        J = reaction_jacobian(s, P)
        err = np.abs(J - central_fd(s, P)).max() / np.abs(J).max()
        assert err <= 1e-6


def test_vectorized_matches_loop(rng):
    s = rng.random((7, 5))
    batch_r, batch_J = reaction_rhs(s, P), reaction_jacobian(s, P)
    for k in range(7):
        np.testing.assert_array_equal(batch_r[k], reaction_rhs(s[k], P))
        np.testing.assert_array_equal(batch_J[k], reaction_jacobian(s[k], P))


def test_system_state():
    s = SystemState(0, [[1, 2, 3, 4, 5]])
    assert s.n_nodes == 1 and s.total_carbon == 15.0
    with pytest.raises(ValueError):
        s.masses[0, 0] = 9.0
    with pytest.raises(InputError):
        SystemState(0.0, np.zeros((3, 4)))
    assert s == SystemState(0.0, np.array([[1.0, 2, 3, 4, 5]]))


@settings(max_examples=50)
@given(states, st.floats(0.1, 10.0))
def test_rhs_scales_linearly_when_monod_saturated(s, alpha):
    # with n >> K_b uptake is ~K b, so the rates are ~linear in the state
    s = s.copy()
    s[1] = 1e9
    r1, r2 = reaction_rhs(s, P), reaction_rhs(alpha * s, P)
    np.testing.assert_allclose(r2[[0, 2, 3, 4]], alpha * r1[[0, 2, 3, 4]], rtol=1e-6, atol=1e-9)
