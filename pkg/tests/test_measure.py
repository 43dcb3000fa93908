from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lorenz_cocycles.inducing import check_distortion, total_return_time_vec
from lorenz_cocycles.lorenz_model import doubling_map
from lorenz_cocycles.measure import (
    DensityEstimate,
    TEST_FUNCTIONS,
    batch_means,
    birkhoff_average,
    branch_integral,
    branch_weights,
    cylinder_frequency_ratios,
    dynamic_symbol_paths,
    jacobian_ratio,
    lift_pushforward,
    log_jacobian_partials,
    omega_hat,
    product_density,
    pushforward_gaps,
    reference_point,
    ulam_density,
)
from lorenz_cocycles.orbits import OrbitSource, return_time_observable, total_return_time_observable


@pytest.fixture(scope="module")
def c_fit(scheme):
    return check_distortion(scheme, seed=0).c_fit


@pytest.mark.parametrize("bins,mc", [(256, 100), (512, 400)])
def test_doubling_stub_uniform(bins, mc):
    d = ulam_density(doubling_map(), bins, mc, seed=4)
    rel = d.weights / 0.5 - 1.0
    # RMS over bins: the per-bin maximum is an extreme-value statistic and exceeds 2/sqrt(mc)
    assert math.sqrt(np.mean(rel**2)) <= 2.0 / math.sqrt(mc)
    assert d.residual <= 1e-10


def test_lorenz_density(density):
    assert density.residual <= 1e-10
    assert abs(density.total - 1.0) <= 1e-12
    assert density.weights.min() > 0
    assert np.isfinite(density.weights.max() / density.weights.min())


def test_induced_density_normalized(induced):
    assert abs(induced.total - 1.0) <= 1e-12 and induced.residual <= 1e-10


def test_density_csv_round_trip(tmp_path, density):
    p = tmp_path / "d.csv"
    density.to_csv(p)
    assert p.read_text().splitlines()[0] == "bin_left,bin_right,weight"
    d2 = DensityEstimate.from_csv(p)
    assert np.array_equal(d2.weights, density.weights) and d2.lo == density.lo and d2.hi == density.hi


def test_restricted_density_matches_induced(scheme, density, induced):
    # μ_g restricted to Î and renormalized against the Ulam estimate of μ̂
    f = lambda x: x**2  # noqa: E731
    inside = lambda x: np.abs(x) < scheme.delta  # noqa: E731
    restricted = density.integrate(lambda x: f(x) * inside(x)) / density.mass(-scheme.delta, scheme.delta)
    direct = induced.integrate(f)
    # both are 2048-bin Ulam estimates; across seeds they scatter by about 1%
    assert restricted == pytest.approx(direct, rel=0.02)


def test_lift_n0_on_zero_fiber(system, density):
    s = lift_pushforward(system, density, 0, 1000, seed=1)
    assert np.all(s.points[:, 1] == 0.0) and s.weights.sum() == pytest.approx(1.0)


def test_lift_cross_seed(system, density):
    n = 100000
    a = lift_pushforward(system, density, 10, n, seed=1).integrals()
    b = lift_pushforward(system, density, 10, n, seed=2).integrals()
    assert np.max(np.abs(a - b)) <= 3 / math.sqrt(n)


def test_pushforward_gaps_dominated(system, density):
    g = pushforward_gaps(system, density, 15, 50000, seed=5)
    assert g.dominated
    # the gap between n=10 and n=11 is below beta^10 * Lip * fiber diameter
    lips = np.array([tf.lipschitz for tf in TEST_FUNCTIONS])
    assert np.all(g.gaps[9] <= system.skew.beta**10 * lips * 2.0)


def test_jacobian_identical_points(scheme):
    past = [3, 1, 72, 5, 9]
    assert jacobian_ratio(scheme, 0.1, 0.1, past, 5) == 1.0


@given(st.lists(st.sampled_from([1, 2, 3, 70, 71, 72]), min_size=50, max_size=50), st.floats(-0.25, 0.25), st.floats(-0.25, 0.25))
def test_jacobian_increments_cauchy(scheme, c_fit, past, xh, yh):
    logs = log_jacobian_partials(scheme, xh, yh, past, 50)
    inc = np.abs(np.diff(logs))
    n = np.arange(1, 51)
    assert np.all(inc <= c_fit**n + 1e-12)
    assert abs(logs[25] - logs[50]) <= c_fit**25 / (1 - c_fit) + 1e-12


def test_omega_hat_reference(scheme, induced):
    x0 = reference_point(scheme)
    assert omega_hat(scheme, induced, [1], x0, x0)[0] == pytest.approx(1.0, abs=1e-14)


def test_product_density_bounded_and_counted(scheme, induced, c_fit):
    mc = 1000
    pd = product_density(scheme, induced, 2, mc, seed=8, n_truncation=20, c_fit=c_fit)
    C = pd.bound_constant
    assert math.isfinite(C)
    assert all(1 / C <= v <= C for v in pd.values.values())
    syms, _ = dynamic_symbol_paths(scheme, induced, 1000, 1000, seed=9)
    freq = cylinder_frequency_ratios(syms, list(pd.values))
    assert max(abs(pd.values[k] - freq[k]) for k in pd.values) <= 5 / math.sqrt(mc)


def test_cylinder_frequency_ratios_independent_symbols():
    rng = np.random.default_rng(0)
    syms = rng.integers(1, 3, size=(1, 200000))
    r = cylinder_frequency_ratios(syms, [((1,), (2,)), ((2,), (2,))])
    assert all(abs(v - 1) < 0.02 for v in r.values())


def test_birkhoff_constant(orbit_source):
    b = birkhoff_average(lambda o: np.ones(len(o)), orbit_source, 1000, seed=0)
    assert b.mean == 1.0 and b.half_width == 0.0


def test_birkhoff_return_time_cross_seed(scheme, orbit_source):
    r = return_time_observable(scheme)
    a = birkhoff_average(r, orbit_source, 50000, seed=1)
    b = birkhoff_average(r, orbit_source, 50000, seed=2)
    assert math.isfinite(a.mean) and abs(a.mean - b.mean) <= a.half_width + b.half_width


def test_birkhoff_T_bounds_and_branch_consistency(system, scheme, induced, orbit_source):
    n = 100000
    T = birkhoff_average(total_return_time_observable(system.roof, scheme), orbit_source, n, seed=3)
    r = birkhoff_average(return_time_observable(scheme), orbit_source, n, seed=3)
    assert T.mean >= system.roof.c0 * r.mean
    # Σ over branches of μ̂(branch) times the mean of T on that branch
    per_branch = branch_integral(scheme, induced, lambda x: total_return_time_vec(system.roof, scheme, x))
    assert abs(T.mean - per_branch.sum()) <= T.half_width + 0.01 * T.mean


def test_branch_weights_sum(scheme, induced):
    w = branch_weights(scheme, induced)
    assert w.sum() == pytest.approx(1.0) and np.all(w > 0)


def test_batch_means_half_width_shrinks():
    rng = np.random.default_rng(0)
    _, h1 = batch_means(rng.standard_normal(3000))
    _, h2 = batch_means(rng.standard_normal(300000))
    assert h2 < h1 / 5


def test_dynamic_orbits_stay_in_scheme(scheme, induced):
    o = OrbitSource(scheme, induced, "dynamic").orbit(2000, seed=0)
    assert np.all(o.symbols >= 1) and np.all(np.abs(o.points) < scheme.delta)
