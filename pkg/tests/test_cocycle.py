from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lorenz_cocycles.cocycle import (
    CocycleGenerator,
    SuspensionCocycle,
    bunching_products,
    cocycle_inverse_product,
    cocycle_product,
    fiber_bunching_check,
    generator_eval,
    holder_seminorm,
    induced_from_suspension,
    opnorm,
    sample_fiber_bunched,
    suspension_eval,
    suspension_eval_orbit,
)
from lorenz_cocycles.errors import InvalidGeneratorError, ParameterError
from lorenz_cocycles.inducing import Itinerary, SymbolicMetric, encode, symbolic_distance

THETA = 0.25
seeds = st.integers(0, 2**32 - 1)


def random_unitary(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def test_eval_lookup_contract():
    m1, m2, dflt = np.diag([2.0, 1.0]), np.diag([1.0, 3.0]), np.eye(2) * 5
    gen = CocycleGenerator(2, 1, {(1,): m1, (2,): m2}, dflt)
    assert np.array_equal(generator_eval(gen, [1, 9]), m1)
    assert np.array_equal(generator_eval(gen, [7]), dflt)
    const = CocycleGenerator.constant(m1)
    assert np.array_equal(generator_eval(const, [1]), generator_eval(const, [5, 6]))


def test_product_base_cases():
    m = np.array([[1.0, 2.0], [0.5, 3.0]])
    gen = CocycleGenerator.constant(m)
    assert np.array_equal(cocycle_product(gen, [], 0), np.eye(2))
    assert np.allclose(cocycle_product(gen, [], 3), m @ m @ m, rtol=1e-15)
    it = Itinerary((1, 1, 1, 1), bilateral=True, origin=4)
    assert np.allclose(cocycle_inverse_product(gen, it, 3), np.linalg.matrix_power(np.linalg.inv(m), 3))
    assert np.array_equal(cocycle_inverse_product(gen, it, 0), np.eye(2))


@given(seeds, st.integers(0, 10), st.integers(0, 10), st.integers(1, 2))
def test_cocycle_law(seed, m, n, depth):
    rng = np.random.default_rng(seed)
    gen = sample_fiber_bunched(seed, 3, depth, 0.3, alphabet=4)
    syms = rng.integers(1, 6, size=m + n + depth).tolist()
    lhs = cocycle_product(gen, syms, m + n)
    rhs = cocycle_product(gen, syms[n:], m) @ cocycle_product(gen, syms, n)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(lhs)))


@given(seeds, st.integers(1, 10))
def test_inverse_law(seed, n):
    rng = np.random.default_rng(seed)
    gen = sample_fiber_bunched(seed, 2, 1, 0.3, alphabet=4)
    syms = tuple(rng.integers(1, 6, size=2 * n + 1).tolist())
    it = Itinerary(syms, bilateral=True, origin=n)
    back = it.shift(-n)  # f^{-n} x
    prod = cocycle_inverse_product(gen, it, n) @ cocycle_product(gen, back.future(), n)
    assert np.allclose(prod, np.eye(2), atol=1e-10)


def test_holder_values():
    assert holder_seminorm(CocycleGenerator.constant(np.eye(2)), SymbolicMetric(THETA), 1.0) == 0.0
    m1, m2 = np.diag([1.2, 0.9]), np.array([[1.0, 0.3], [0.0, 1.1]])
    gen = CocycleGenerator(2, 1, {(1,): m1}, m2)
    assert holder_seminorm(gen, SymbolicMetric(THETA), 1.0) == pytest.approx(opnorm(m1 - m2), rel=1e-14)


@given(seeds)
def test_holder_unitary_invariance(seed):
    gen = sample_fiber_bunched(seed, 2, 1, 0.3, alphabet=3)
    u = random_unitary(np.random.default_rng(seed), 2)
    left = CocycleGenerator(2, 1, {w: u @ m for w, m in gen.table.items()}, u @ gen.default)
    metric = SymbolicMetric(THETA)
    assert holder_seminorm(left, metric, 1.0) == pytest.approx(holder_seminorm(gen, metric, 1.0), rel=1e-12)


@given(seeds, st.integers(1, 2))
def test_holder_bound_on_pairs(seed, depth):
    rng = np.random.default_rng(seed)
    gen = sample_fiber_bunched(seed, 2, depth, 0.3, alphabet=3)
    metric = SymbolicMetric(THETA)
    H = holder_seminorm(gen, metric, 1.0)
    for _ in range(50):
        a = Itinerary(tuple(rng.integers(1, 5, size=6).tolist()))
        b = Itinerary(a.symbols[:2] + tuple(rng.integers(1, 5, size=4).tolist())) if rng.random() < 0.5 else Itinerary(tuple(rng.integers(1, 5, size=6).tolist()))
        diff = opnorm(generator_eval(gen, a) - generator_eval(gen, b))
        assert diff <= H * symbolic_distance(metric, a, b) + 1e-12


def test_bunching_examples():
    rep = fiber_bunching_check(CocycleGenerator.constant(np.eye(2)), THETA, 1.0, 0.9)
    assert rep.worst_product == 0.25 and rep.passed
    rep = fiber_bunching_check(CocycleGenerator.constant(np.diag([2.0, 0.5])), THETA, 1.0, 0.9)
    assert rep.worst_product == 1.0 and not rep.passed


@given(seeds, st.floats(0.05, 0.9))
def test_bunching_scales_with_theta(seed, factor):
    gen = sample_fiber_bunched(seed, 2, 1, 0.3, alphabet=3)
    a = bunching_products(gen, THETA, 1.0)
    b = bunching_products(gen, THETA * factor, 1.0)
    for w in a:
        assert b[w] == pytest.approx(a[w] * factor, rel=1e-13)


@given(seeds)
def test_bunching_openness(seed):
    rng = np.random.default_rng(seed)
    gen = sample_fiber_bunched(seed, 2, 1, 0.3, alphabet=3)
    rep = fiber_bunching_check(gen, THETA)
    big = max(max(opnorm(m), opnorm(np.linalg.inv(m))) for m in [gen.default, *gen.table.values()])
    radius = rep.margin / (4 * big**2 * THETA)

    def nudge(m):
        e = rng.standard_normal(m.shape) + 1j * rng.standard_normal(m.shape)
        return m + 0.999 * radius * e / opnorm(e)

    pert = CocycleGenerator(2, 1, {w: nudge(m) for w, m in gen.table.items()}, nudge(gen.default))
    assert fiber_bunching_check(pert, THETA).passed


def test_sampler_properties():
    gen = sample_fiber_bunched(5, 2, 1, 0.0)
    assert all(np.array_equal(m, np.eye(2)) for m in [gen.default, *gen.table.values()])
    a, b = sample_fiber_bunched(123, 3, 1, 0.3), sample_fiber_bunched(123, 3, 1, 0.3)
    assert all(np.array_equal(a.table[w], b.table[w]) for w in a.words)
    with pytest.raises(ParameterError):
        sample_fiber_bunched(0, 3, 1, 0.9)


def test_sampler_always_bunched():
    for seed in range(1000):
        gen = sample_fiber_bunched(seed, 2 + seed % 3, 1, 0.3 if seed % 3 < 2 else 0.2)
        assert fiber_bunching_check(gen, THETA, 1.0, 0.95).passed


def test_generator_json_round_trip():
    gen = sample_fiber_bunched(9, 3, 2, 0.3, alphabet=3)
    g2 = CocycleGenerator.from_json(gen.to_json())
    assert g2.words == gen.words and all(np.array_equal(g2.table[w], gen.table[w]) for w in gen.words)
    assert np.array_equal(g2.default, gen.default)
    with pytest.raises(InvalidGeneratorError):
        CocycleGenerator.from_json('{"d": 2}')


def test_singular_entry_rejected():
    with pytest.raises(InvalidGeneratorError):
        CocycleGenerator.constant(np.zeros((2, 2)))


@pytest.fixture(scope="module")
def susp(system, scheme):
    gen = sample_fiber_bunched(17, 2, 1, 0.3, alphabet=72)
    return SuspensionCocycle(gen, scheme, system.roof)


def _orbit(scheme, x, n):
    pts, syms = [], []
    for _ in range(n):
        l = int(scheme.branch_index(x))
        pts.append(x)
        syms.append(l)
        x = float(scheme.forward(l, x))
    return np.array(pts), syms


def test_suspension_returns(susp, scheme, induced):
    x = float(induced.sample(np.random.default_rng(2), 1)[0])
    pts, syms = _orbit(scheme, x, 3)
    assert np.array_equal(induced_from_suspension(susp, x), generator_eval(susp.generator, encode(scheme, x, 1)))
    T = susp.return_times(pts)
    assert np.array_equal(suspension_eval(susp, x, 0.0), np.eye(2))
    assert np.array_equal(suspension_eval(susp, x, 0.5 * T[0]), np.eye(2))
    s3 = float(T[0]) + float(T[1]) + float(T[2])
    a = [generator_eval(susp.generator, syms[k:]) for k in range(3)]
    three = a[2] @ (a[1] @ a[0])  # same order as the running product
    assert np.array_equal(suspension_eval(susp, x, s3), three)


def test_suspension_matches_cocycle_product(susp, scheme, orbit_source):
    o = orbit_source.orbit(40, seed=4)
    s = susp.cumulative_times(o.points)
    for n in (1, 7, 39):
        assert np.array_equal(suspension_eval_orbit(susp, o.symbols, o.points, s[n - 1]), cocycle_product(susp.generator, o.symbols.tolist(), n))
