from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lorenz_cocycles.cocycle import CocycleGenerator, SuspensionCocycle, sample_fiber_bunched
from lorenz_cocycles.errors import ParameterError
from lorenz_cocycles.lyapunov import (
    LyapunovSpectrum,
    brute_force_spectrum,
    compound_matrix,
    flow_spectrum_relation,
    qr_spectrum,
    simplicity_check,
)

seeds = st.integers(0, 2**32 - 1)


def spec_of(values):
    v = np.asarray(values, dtype=float)
    return LyapunovSpectrum(v, np.zeros_like(v))


@pytest.mark.parametrize("n", [1, 10, 1000])
def test_diagonal_constant_exact(n):
    s = qr_spectrum(CocycleGenerator.constant(np.diag([2.0, 1.0])), None, n)
    assert np.allclose(s.exponents, [math.log(2), 0.0], atol=1e-12, rtol=0)


def test_triangular_constant_eigenvalues():
    s = qr_spectrum(CocycleGenerator.constant(np.array([[2.0, 1.0], [0.0, 1.0]])), None, 5000)
    assert np.allclose(s.exponents, [math.log(2), 0.0], atol=1e-3)


def test_identity_all_zero():
    s = qr_spectrum(CocycleGenerator.constant(np.eye(3)), None, 100)
    assert np.all(s.exponents == 0.0)
    assert simplicity_check(s, 1e-3).multiplicity_pattern == (3,)


def test_brute_force_base_cases(orbit_source):
    s = brute_force_spectrum(CocycleGenerator.constant(np.diag([3.0, 1 / 3])), None, 50)
    assert np.allclose(s.exponents, [math.log(3), -math.log(3)], atol=1e-12)
    gen = sample_fiber_bunched(3, 3, 1, 0.3)
    o = orbit_source.orbit(1, seed=0)
    a = gen.stack[gen.entry_index(o.symbols)[0]]
    one = brute_force_spectrum(gen, o, 1, mode="singular")
    assert np.allclose(one.exponents, np.log(np.linalg.svd(a, compute_uv=False)), atol=1e-14)


def test_qr_matches_brute_force(orbit_source):
    for seed in range(20):
        gen = sample_fiber_bunched(seed, 3, 1, 0.3)
        o = orbit_source.orbit(200, seed=seed)
        assert np.max(np.abs(qr_spectrum(gen, o, 200).exponents - brute_force_spectrum(gen, o, 200).exponents)) <= 1e-6


def test_singular_mode_converges_at_rate_one_over_n(orbit_source):
    gen = sample_fiber_bunched(1, 2, 1, 0.3)
    o = orbit_source.orbit(200, seed=1)
    # kept short: past exp(-gap*n) ~ 1e-16 the small singular value is lost to rounding
    d50 = np.max(np.abs(qr_spectrum(gen, o, 50).exponents - brute_force_spectrum(gen, o, 50, mode="singular").exponents))
    d200 = np.max(np.abs(qr_spectrum(gen, o, 200).exponents - brute_force_spectrum(gen, o, 200, mode="singular").exponents))
    assert d200 < d50 and d200 < 1e-2


def test_brute_force_cost_guard():
    with pytest.raises(ParameterError):
        brute_force_spectrum(CocycleGenerator.constant(np.eye(2)), None, 5000)


def test_compound_matrix():
    a = np.random.default_rng(0).standard_normal((3, 3))
    assert compound_matrix(a, 3)[0, 0] == pytest.approx(np.linalg.det(a))
    assert np.allclose(compound_matrix(a, 1), a)


def test_simplicity_examples():
    v = simplicity_check(spec_of([1.0, 0.0, -1.0]), 0.1)
    assert v.simple and v.multiplicity_pattern == (1, 1, 1)
    v = simplicity_check(spec_of([1.0 + 1e-9, 1.0, 0.0]), 1e-6)
    assert not v.simple and v.multiplicity_pattern == (2, 1)


@given(seeds, st.floats(0.1, 10.0))
def test_scaling_equivariance(orbit_source, seed, s):
    gen = sample_fiber_bunched(seed, 3, 1, 0.3)
    o = orbit_source.orbit(500, seed=seed)
    scaled = CocycleGenerator(3, 1, {w: s * m for w, m in gen.table.items()}, s * gen.default)
    a, b = qr_spectrum(gen, o, 500), qr_spectrum(scaled, o, 500)
    assert np.allclose(b.exponents - a.exponents, math.log(s), atol=1e-10, rtol=0)


@given(seeds)
def test_determinant_identity(orbit_source, seed):
    gen = sample_fiber_bunched(seed, 2 + seed % 3, 1, 0.2)
    s = qr_spectrum(gen, orbit_source, 2000, seed=seed)
    assert abs(s.exponents.sum() - s.log_det_mean) <= s.half_widths.sum() + s.log_det_half_width


def _inverse_transpose(gen):
    it = lambda m: np.linalg.inv(m).conj().T  # noqa: E731
    return CocycleGenerator(gen.d, gen.depth, {w: it(m) for w, m in gen.table.items()}, it(gen.default))


def test_inversion_antisymmetry_constant():
    gen = CocycleGenerator.constant(np.diag([2.0, 1.0, 0.25]))
    a = qr_spectrum(gen, None, 100)
    b = qr_spectrum(_inverse_transpose(gen), None, 100)
    assert np.allclose(b.exponents, -a.exponents[::-1], atol=1e-12)


@given(seeds)
def test_inversion_antisymmetry_depth_one(orbit_source, seed):
    gen = sample_fiber_bunched(seed, 3, 1, 0.3)
    o = orbit_source.orbit(20000, seed=seed)
    a = qr_spectrum(gen, o, 20000)
    b = qr_spectrum(_inverse_transpose(gen), o, 20000)
    # equal only in the limit: finite-n QR estimates differ by O(1/n)
    assert np.allclose(b.exponents, -a.exponents[::-1], atol=2e-3)


def test_flow_identity(system, scheme, orbit_source):
    susp = SuspensionCocycle(CocycleGenerator.constant(np.eye(2)), scheme, system.roof)
    r = flow_spectrum_relation(system, scheme, susp, 1000, 0, orbit_source)
    assert np.all(r.induced_spec.exponents == 0) and np.all(r.flow_spec.exponents == 0)


def test_flow_constant_roof(system, scheme, orbit_source):
    susp = SuspensionCocycle(CocycleGenerator.constant(np.diag([math.e, 1.0])), scheme, lambda x: np.full(np.shape(x), 2.0))
    r = flow_spectrum_relation(system, scheme, susp, 1000, 0, orbit_source)
    assert r.mean_T == 2.0
    assert np.allclose(r.flow_spec.exponents, [0.5, 0.0], atol=1e-12)
    assert np.allclose(r.direct_flow_exponents, [0.5, 0.0], atol=1e-12)


def test_flow_relation_random(system, scheme, orbit_source):
    gen = sample_fiber_bunched(0, 2, 1, 0.3)
    r = flow_spectrum_relation(system, scheme, SuspensionCocycle(gen, scheme, system.roof), 20000, 1, orbit_source)
    assert r.max_relative_gap <= 0.02 and r.independent_relative_gap <= 0.05


def test_spectrum_json_schema():
    import json

    doc = json.loads(spec_of([0.1, -0.1]).to_json(simplicity_check(spec_of([0.1, -0.1])), 6.8))
    assert doc["schema_version"] == 1 and set(doc) >= {"exponents", "half_widths", "time_scale", "n_used", "simple", "min_gap", "mean_T"}
