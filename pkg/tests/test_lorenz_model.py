from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lorenz_cocycles.errors import DomainError, ParameterError
from lorenz_cocycles.lorenz_model import (
    GeometricLorenzSystem,
    LorenzMapParams,
    OdeParams,
    RoofParams,
    SkewParams,
    equilibrium_eigenvalues,
    integrate_flow,
    lorenz_map_derivative,
    lorenz_map_eval,
    lorenz_map_inverse,
    ode_vector_field,
    poincare_eval,
    roof_eval,
    sample_attractor,
    verify_expansion,
)

# frozen from a 50-digit mpmath evaluation
G_HALF = 0.18920711500272106672
DG_SMALL = 15.0
ROOF_001 = 3.302585092994045684
EIG_SS, EIG_U, EIG_S = -22.827723451163456285, 11.827723451163456285, -2.6666666666666666667

P = LorenzMapParams()
SYS = GeometricLorenzSystem()
section_x = st.floats(min_value=1e-12, max_value=1.0).flatmap(lambda v: st.sampled_from([v, -v]))


def test_map_values():
    assert lorenz_map_eval(P, 1.0) == 1.0
    assert lorenz_map_eval(P, -1.0) == -1.0
    assert lorenz_map_eval(P, 0.5) == pytest.approx(G_HALF, rel=1e-15)


def test_map_derivative_values():
    assert lorenz_map_derivative(P, 1.0) == 1.5
    assert lorenz_map_derivative(P, -1.0) == 1.5
    assert lorenz_map_derivative(P, 1e-4) == pytest.approx(DG_SMALL, rel=1e-14)


def test_map_rejects_gamma_and_outside():
    with pytest.raises(DomainError):
        lorenz_map_eval(P, 0.0)
    with pytest.raises(DomainError):
        lorenz_map_eval(P, 1.5)


@pytest.mark.parametrize("rho,expected", [(0.75, (1.5, True)), (0.9, (1.8, True))])
def test_expansion_closed_form(rho, expected):
    m, ok = verify_expansion(LorenzMapParams(rho=rho))
    assert m == pytest.approx(expected[0], abs=1e-15) and ok is expected[1]


def test_expansion_fails_below_sqrt2():
    m, ok = verify_expansion(LorenzMapParams(rho=0.7))
    assert m == pytest.approx(1.4) and m < math.sqrt(2) and not ok


def test_rho_half_rejected_with_expansion_message():
    with pytest.raises(ParameterError, match="expansion bound"):
        LorenzMapParams(rho=0.5)


def test_poincare_values():
    assert poincare_eval(SYS, (1.0, 0.0)) == (1.0, 0.5)
    assert poincare_eval(SYS, (-1.0, 0.0)) == (-1.0, -0.5)
    x, y = poincare_eval(SYS, (0.5, 1.0))
    assert x == lorenz_map_eval(P, 0.5) and y == pytest.approx(0.7, abs=1e-15)


def test_roof_values():
    assert roof_eval(RoofParams(), 1.0) == 1.0
    assert roof_eval(RoofParams(), math.exp(-1)) == pytest.approx(2.0, abs=1e-15)
    assert roof_eval(RoofParams(1.0, 0.5), 0.01) == pytest.approx(ROOF_001, rel=1e-15)
    with pytest.raises(DomainError):
        roof_eval(RoofParams(), 0.0)


def test_vector_field_values():
    o = OdeParams()
    assert np.array_equal(ode_vector_field(o, (0, 0, 0)), np.zeros(3))
    assert np.allclose(ode_vector_field(o, (1, 1, 0)), (0, 27, 1))
    assert np.allclose(ode_vector_field(o, (0, 0, 1)), (0, 0, -8 / 3))


def test_equilibrium_eigenvalues():
    ev = equilibrium_eigenvalues(OdeParams())
    assert np.allclose(ev.eigenvalues, (EIG_SS, EIG_S, EIG_U), rtol=1e-14)
    assert ev.dissipative_sum and EIG_S + EIG_U == pytest.approx(9.161056784496790, rel=1e-12)
    assert np.allclose(equilibrium_eigenvalues(OdeParams(1, 1, 1)).eigenvalues, (-2, -1, 0), atol=1e-15)


@given(st.floats(0.1, 30), st.floats(0.5, 50))
def test_quadratic_block_identities(a, b):
    ev = equilibrium_eigenvalues(OdeParams(a, b, 8 / 3))
    p, q = ev.quadratic_pair
    assert p + q == pytest.approx(-(a + 1), rel=1e-12, abs=1e-12)
    assert p * q == pytest.approx(-a * (b - 1), rel=1e-12, abs=1e-12)


def test_integrator_equilibrium_and_linear_decay():
    tr = integrate_flow(OdeParams(), (0, 0, 0), 0.01, 5)
    assert np.all(tr.states == 0)
    tr = integrate_flow(OdeParams(0, 0, 1), (0, 0, 1), 1e-2, 100)
    assert tr.states[-1, 2] == pytest.approx(math.exp(-1.0), rel=1e-9)


def test_integrator_richardson_and_order():
    o = OdeParams()
    a = integrate_flow(o, (1, 1, 1), 1e-3, 10).states
    b = integrate_flow(o, (1, 1, 1), 5e-4, 20).states[::2]
    assert np.max(np.abs(a - b)) <= 1e-8
    # one-step error ratio for dt -> dt/2 against a fine reference: about 2^5 locally, 2^4 globally
    ref = integrate_flow(o, (1, 1, 1), 1e-5, 1000).states[-1]
    e1 = np.max(np.abs(integrate_flow(o, (1, 1, 1), 1e-3, 10).states[-1] - ref))
    e2 = np.max(np.abs(integrate_flow(o, (1, 1, 1), 5e-4, 20).states[-1] - ref))
    assert 14 <= e1 / e2 <= 18


def test_attractor_sample_strips_and_determinism():
    s1 = sample_attractor(SYS, 7, 2000)
    s2 = sample_attractor(SYS, 7, 2000)
    assert np.array_equal(s1.points, s2.points)
    (a, b), (c, d) = SYS.skew.strips
    y = s1.points[:, 1]
    assert np.all(((y >= a) & (y <= b)) | ((y >= c) & (y <= d)))
    assert sample_attractor(SYS, 7, 0).points.shape == (0, 2)


def test_skew_params_validation():
    with pytest.raises(ParameterError):
        SkewParams(beta=0.2, gamma=0.1)
    with pytest.raises(ParameterError):
        SkewParams(beta=0.3, theta=0.25)


@given(section_x)
def test_odd_symmetry(x):
    assert lorenz_map_eval(P, -x) == -lorenz_map_eval(P, x)


def test_odd_symmetry_bulk():
    x = np.random.default_rng(0).uniform(1e-12, 1.0, 10**6)
    assert np.array_equal(lorenz_map_eval(P, -x), -lorenz_map_eval(P, x))
    assert np.all(lorenz_map_derivative(P, x) >= P.scale * P.rho)


@given(section_x)
def test_expansion_everywhere(x):
    assert lorenz_map_derivative(P, x) >= 1.5 > math.sqrt(2)


@given(section_x, st.floats(-1, 1))
def test_semiconjugacy(x, y):
    assert poincare_eval(SYS, (x, y))[0] == lorenz_map_eval(P, x)


@given(section_x, st.floats(-1, 1), st.floats(-1, 1))
def test_fiber_contraction(x, y1, y2):
    d = abs(poincare_eval(SYS, (x, y1))[1] - poincare_eval(SYS, (x, y2))[1])
    assert d == pytest.approx(SYS.skew.beta * abs(y1 - y2), abs=1e-15)


@given(section_x)
def test_inverse_branches(x):
    y = lorenz_map_eval(P, x)
    assert lorenz_map_inverse(P, y, 1 if x > 0 else -1) == pytest.approx(x, rel=1e-9, abs=1e-12)
