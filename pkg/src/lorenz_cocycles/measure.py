"""Invariant measures: Ulam estimates of the acip of g (and of the induced map),
the push-forward lift to the section, Jacobian ratios along pulled-back orbits,
the product-structure density on cylinders, and Birkhoff averages.

Densities are piecewise constant on equal bins.  ``weights`` hold density
values, so ``weights.sum() * width == 1``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import stats

from .errors import ConvergenceError, DomainError, ParameterError, TruncationError
from .inducing import InducingScheme, Itinerary, decode
from .lorenz_model import GAMMA_TOL, GeometricLorenzSystem, LorenzMapParams, PiecewiseMonotoneMap, lorenz_interval_map

N_BLOCKS = 30


# -- piecewise-constant densities ---------------------------------------------

@dataclass(frozen=True)
class DensityEstimate:
    lo: float
    hi: float
    weights: np.ndarray
    residual: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise ParameterError("weights must be a non-empty 1-D array")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ParameterError("density weights must be finite and non-negative")
        if not self.lo < self.hi:
            raise ParameterError("empty density grid")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_cdf", np.concatenate([[0.0], np.cumsum(w * self.width)]))

    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    @property
    def bin_count(self) -> int:
        return self.weights.size

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.weights.size

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.bin_count + 1)

    @property
    def masses(self) -> np.ndarray:
        return self.weights * self.width

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    def bin_of(self, x) -> np.ndarray:
        i = np.floor((np.asarray(x, dtype=float) - self.lo) / self.width).astype(int)
        return np.clip(i, 0, self.bin_count - 1)

    def pdf(self, x):
        xa = np.asarray(x, dtype=float)
        out = np.where((xa >= self.lo) & (xa <= self.hi), self.weights[self.bin_of(xa)], 0.0)
        return float(out) if out.ndim == 0 else out

    def cdf(self, x):
        xa = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        i = self.bin_of(xa)
        out = self._cdf[i] + (xa - (self.lo + i * self.width)) * self.weights[i]
        return float(out) if out.ndim == 0 else out

    def mass(self, a: float, b: float) -> float:
        return float(self.cdf(b) - self.cdf(a))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size) * self._cdf[-1]
        i = np.clip(np.searchsorted(self._cdf, u, side="right") - 1, 0, self.bin_count - 1)
        return self.lo + (i + rng.random(size)) * self.width

    def sample_interval(self, rng: np.random.Generator, a: float, b: float, size: int) -> np.ndarray:
        """Sample from the density restricted to [a, b] (inverse-cdf on the overlapped bins)."""
        ca, cb = self.cdf(a), self.cdf(b)
        if not cb > ca:
            raise DomainError(f"[{a}, {b}] carries no mass")
        u = ca + rng.random(size) * (cb - ca)
        i = np.clip(np.searchsorted(self._cdf, u, side="right") - 1, 0, self.bin_count - 1)
        x = self.lo + i * self.width + (u - self._cdf[i]) / np.where(self.weights[i] > 0, self.weights[i], 1.0)
        return np.clip(x, a, b)

    def integrate(self, f: Callable, nodes: int = 8) -> float:
        """∫ f dμ by Gauss-Legendre on each bin."""
        t, w = np.polynomial.legendre.leggauss(nodes)
        e = self.edges
        mid, half = 0.5 * (e[1:] + e[:-1]), 0.5 * self.width
        x = mid[:, None] + half * t[None, :]
        vals = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
        return float(np.sum(self.weights[:, None] * half * w[None, :] * vals))

    def to_csv(self, path) -> None:
        e = self.edges
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_left", "bin_right", "weight"])
            for a, b, v in zip(e[:-1], e[1:], self.weights):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "DensityEstimate":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ParameterError(f"{path}: no density rows")
        return cls(float(rows[0]["bin_left"]), float(rows[-1]["bin_right"]), np.array([float(r["weight"]) for r in rows]))


def _ulam(f: Callable, lo: float, hi: float, bins: int, mc_samples: int, seed, tol: float, max_iter: int):
    if bins < 2:
        raise ParameterError("bins must be >= 2")
    if mc_samples < 1:
        raise ParameterError("mc_samples must be >= 1")
    rng = np.random.default_rng(seed)
    width = (hi - lo) / bins
    src = np.repeat(np.arange(bins), mc_samples)
    x = lo + (src + rng.random(src.size)) * width
    y = f(x)
    ok = np.isfinite(y) & (y >= lo) & (y <= hi)
    dst = np.clip(np.floor((y[ok] - lo) / width).astype(int), 0, bins - 1)
    counts = sp.coo_matrix((np.ones(dst.size), (src[ok], dst)), shape=(bins, bins)).tocsr()
    counts.sum_duplicates()
    row = np.asarray(counts.sum(axis=1)).ravel()
    if np.any(row == 0):
        raise ConvergenceError(f"{int(np.sum(row == 0))} bins lost every Monte-Carlo image", math.inf)
    P = sp.diags(1.0 / row) @ counts
    PT = P.T.tocsr()
    v = np.full(bins, 1.0 / bins)
    res = math.inf
    for it in range(1, max_iter + 1):
        nv = PT @ v
        nv /= nv.sum()
        res = float(np.abs(nv - v).sum())
        v = nv
        if res <= tol:
            break
    else:
        raise ConvergenceError(f"Ulam power iteration did not converge in {max_iter} iterations", res)
    res = float(np.abs(PT @ v - v).sum())
    return DensityEstimate(lo, hi, v / width, residual=res, iterations=it)


def ulam_density(
    map: LorenzMapParams | PiecewiseMonotoneMap,
    bins: int = 2048,
    mc_samples: int = 100,
    seed=0,
    tol: float = 1e-12,
    max_iter: int = 100000,
) -> DensityEstimate:
    """Invariant density of an interval map from its Monte-Carlo Ulam matrix.

    ``residual`` is ||vP - v||_1 for the returned probability vector v.
    """
    imap = lorenz_interval_map(map) if isinstance(map, LorenzMapParams) else map
    lo, hi = imap.domain

    def f(x):
        y = np.full_like(x, np.nan)
        ok = np.abs(x) >= GAMMA_TOL if isinstance(map, LorenzMapParams) else np.ones(x.shape, bool)
        y[ok] = imap(x[ok])
        return y

    return _ulam(f, lo, hi, bins, mc_samples, seed, tol, max_iter)


def induced_density(
    scheme: InducingScheme, bins: int = 2048, mc_samples: int = 100, seed=0, tol: float = 1e-12, max_iter: int = 100000
) -> DensityEstimate:
    """Ulam estimate of the ĝ-invariant density μ̂ on Î (gap points are dropped)."""
    f = lambda x: scheme.induced_step(x)[0]  # noqa: E731
    return _ulam(f, -scheme.delta, scheme.delta, bins, mc_samples, seed, tol, max_iter)


def branch_weights(scheme: InducingScheme, density: DensityEstimate) -> np.ndarray:
    """μ̂ mass of every branch, normalized over the branches."""
    m = np.array([density.mass(b.left, b.right) for b in scheme.branches])
    return m / m.sum()


def branch_integral(scheme: InducingScheme, density: DensityEstimate, f: Callable, nodes: int = 16) -> np.ndarray:
    """∫_branch f dμ̂ for every branch (Gauss-Legendre between bin edges)."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    e = density.edges
    out = np.zeros(scheme.n_branches)
    for i, b in enumerate(scheme.branches):
        cuts = np.concatenate([[b.left], e[(e > b.left) & (e < b.right)], [b.right]])
        a, c = cuts[:-1], cuts[1:]
        mid, half = 0.5 * (a + c), 0.5 * (c - a)
        x = mid[:, None] + half[:, None] * t[None, :]
        vals = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
        out[i] = np.sum(density.pdf(mid)[:, None] * half[:, None] * w[None, :] * vals)
    return out / density.mass(-scheme.delta, scheme.delta)


# -- push-forward lift to the section -----------------------------------------

@dataclass(frozen=True)
class TestFunction:
    name: str
    f: Callable
    lipschitz: float  # Euclidean Lipschitz constant on [-1, 1]^2


TEST_FUNCTIONS: tuple[TestFunction, ...] = (
    TestFunction("x_affine", lambda x, y: 0.5 * (1 + x), 0.5),
    TestFunction("y_affine", lambda x, y: 0.5 * (1 + y), 0.5),
    TestFunction("x_square", lambda x, y: x * x, 2.0),
    TestFunction("y_square", lambda x, y: y * y, 2.0),
    TestFunction("x_sine", lambda x, y: 0.5 * (1 + np.sin(np.pi * x)), 0.5 * np.pi),
    TestFunction("y_cosine", lambda x, y: 0.5 * (1 + np.cos(np.pi * y)), 0.5 * np.pi),
    TestFunction("x_abs", lambda x, y: np.abs(x), 1.0),
    TestFunction("xy", lambda x, y: 0.5 * (1 + x * y), 0.5 * math.sqrt(2.0)),
    TestFunction("gauss", lambda x, y: np.exp(-(x * x + y * y)), math.sqrt(2.0) * math.exp(-0.5)),
    TestFunction("y_tanh", lambda x, y: 0.5 * (1 + np.tanh(2 * y)), 1.0),
)


@dataclass(frozen=True)
class SectionMeasureSample:
    points: np.ndarray  # (m, 2)
    weights: np.ndarray
    generation: int
    skipped: int = 0

    def integrals(self, funcs: Sequence[TestFunction] = TEST_FUNCTIONS) -> np.ndarray:
        x, y = self.points[:, 0], self.points[:, 1]
        return np.array([np.sum(self.weights * tf.f(x, y)) for tf in funcs])


def _poincare_steps(sys: GeometricLorenzSystem, x: np.ndarray, y: np.ndarray, n: int):
    """Apply P n times; returns (x, y, alive) where alive marks orbits that never met Γ."""
    alive = np.ones(x.shape, dtype=bool)
    s, r = sys.map.scale, sys.map.rho
    for _ in range(n):
        hit = np.abs(x) < GAMMA_TOL
        alive &= ~hit
        x = np.where(hit, 0.5, x)
        sg = np.sign(x)
        y = sys.skew.beta * y + sys.skew.gamma * sg
        x = sg * (s * np.abs(x) ** r - 1.0)
    return x, y, alive


def lift_pushforward(sys: GeometricLorenzSystem, density: DensityEstimate, n: int, samples: int, seed=0) -> SectionMeasureSample:
    """Weighted cloud approximating P^n_*(μ_g × δ_0)."""
    if n < 0:
        raise ParameterError("n must be >= 0")
    rng = np.random.default_rng(seed)
    x = density.sample(rng, samples)
    x, y, alive = _poincare_steps(sys, x, np.zeros_like(x), n)
    pts = np.stack([x[alive], y[alive]], axis=1)
    w = np.full(pts.shape[0], 1.0 / max(pts.shape[0], 1))
    return SectionMeasureSample(pts, w, n, skipped=int((~alive).sum()))


@dataclass(frozen=True)
class PushforwardGaps:
    n: np.ndarray  # generations 1..n_max
    gaps: np.ndarray  # (n_max, n_funcs): |∫φ dP^n_* - ∫φ dP^(n+1)_*|
    bounds: np.ndarray  # (n_max, n_funcs): Lip(φ) * gamma * beta^n
    skipped: int

    @property
    def dominated(self) -> bool:
        return bool(np.all(self.gaps <= self.bounds))


def pushforward_gaps(
    sys: GeometricLorenzSystem,
    density: DensityEstimate,
    n_max: int = 15,
    samples: int = 100000,
    seed=0,
    funcs: Sequence[TestFunction] = TEST_FUNCTIONS,
) -> PushforwardGaps:
    """Test-function gaps between successive push-forwards, by a coupled estimator.

    Since P(x, 0) = (g(x), gamma*sign(x)) and g(x) is again μ_g-distributed,
    ∫φ dP^(n+1)_* - ∫φ dP^n_* is estimated by averaging
    φ(P^n(g(x), gamma*sign x)) - φ(P^n(g(x), 0)).  Both orbits share their
    x-coordinates, and their fiber distance after n steps is gamma*beta^n.
    """
    rng = np.random.default_rng(seed)
    x = density.sample(rng, samples)
    hit = np.abs(x) < GAMMA_TOL
    sg = np.sign(np.where(hit, 1.0, x))
    x, _, alive = _poincare_steps(sys, np.where(hit, 0.5, x), np.zeros_like(x), 1)
    alive &= ~hit
    ya = sys.skew.gamma * sg  # fiber of P(x, 0)
    yb = np.zeros_like(ya)  # fiber of (g(x), 0)
    gaps = np.zeros((n_max, len(funcs)))
    for n in range(1, n_max + 1):
        x2, ya, al = _poincare_steps(sys, x, ya, 1)
        _, yb, _ = _poincare_steps(sys, x, yb, 1)
        x = x2
        alive &= al
        m = alive.sum()
        for j, tf in enumerate(funcs):
            gaps[n - 1, j] = abs(np.sum(tf.f(x[alive], ya[alive]) - tf.f(x[alive], yb[alive]))) / m
    lips = np.array([tf.lipschitz for tf in funcs])
    ns = np.arange(1, n_max + 1)
    bounds = lips[None, :] * sys.skew.gamma * sys.skew.beta ** ns[:, None]
    return PushforwardGaps(ns, gaps, bounds, int((~alive).sum()))


# -- Jacobian ratios and the product-structure density -------------------------

def reference_point(scheme: InducingScheme, index: int = 1) -> float:
    """Fixed point of ĝ on branch ``index`` (the point with periodic itinerary (index, index, ...))."""
    b = scheme.branch(index)
    z = 0.5 * (b.left + b.right)
    for _ in range(200):
        nz = float(scheme.pullback(index, z))
        if nz == z:
            break
        z = nz
    return z


def _past_symbols(x, n: int) -> list[int]:
    if isinstance(x, Itinerary):
        if not x.bilateral and not x.periodic:
            raise ParameterError("jacobian_ratio needs past symbols: pass a bilateral or periodic itinerary")
        try:
            return [x[-j] for j in range(1, n + 1)]
        except IndexError:
            raise TruncationError(f"itinerary has fewer than {n} past symbols") from None
    past = [int(s) for s in x]
    if len(past) < n:
        raise TruncationError(f"itinerary has fewer than {n} past symbols")
    return past[:n]


def log_jacobian_partials(
    scheme: InducingScheme, x_hat: float, y_hat: float, x, n: int, density: DensityEstimate | None = None
) -> np.ndarray:
    """log of the partial products J_k for k = 0..n (see ``jacobian_ratio``)."""
    past = _past_symbols(x, n)
    for l in past:
        if not 1 <= l <= scheme.n_branches:
            raise TruncationError(f"symbol {l} is outside the truncated alphabet 1..{scheme.n_branches}")
    out = np.zeros(n + 1)
    if density is not None:
        out[0] = math.log(density.pdf(x_hat)) - math.log(density.pdf(y_hat))
    zx, zy = float(x_hat), float(y_hat)
    for k, l in enumerate(past, start=1):
        zx, zy = float(scheme.pullback(l, zx)), float(scheme.pullback(l, zy))
        dx, dy = float(scheme.forward_derivative(l, zx)), float(scheme.forward_derivative(l, zy))
        out[k] = out[k - 1] + math.log(dx) - math.log(dy)
    return out


def jacobian_ratio(scheme: InducingScheme, x_hat: float, y_hat: float, x, n: int, density: DensityEstimate | None = None) -> float:
    """n-term approximation of J_{x̂,ŷ}(x) = lim Jĝ^n(x̂^n) / Jĝ^n(ŷ^n).

    x̂^n, ŷ^n are the preimages of x̂, ŷ under ĝ^n along the past symbols
    x_{-1}, ..., x_{-n} of ``x`` (a bilateral itinerary, or a sequence of past
    symbols most recent first).  Without ``density`` Jĝ is the derivative; with
    it, Jĝ is the Jacobian with respect to μ̂, which multiplies the ratio by
    h(x̂)/h(ŷ).  The remaining factor h(ŷ^n)/h(x̂^n) tends to 1 and is left out.
    """
    return float(np.exp(log_jacobian_partials(scheme, x_hat, y_hat, x, n, density)[-1]))


def _pull_along(scheme: InducingScheme, Z: np.ndarray, past: np.ndarray):
    """Pull every row of Z back along that row's past symbols (most recent first).

    Returns the accumulated log derivative of ĝ^n at the pulled-back points.
    """
    Z = Z.copy()
    logd = np.zeros_like(Z)
    for j in range(past.shape[1]):
        col = past[:, j]
        for l in np.unique(col):
            m = col == l
            z = scheme.pullback(int(l), Z[m])
            logd[m] += np.log(scheme.forward_derivative(int(l), z))
            Z[m] = z
    return Z, logd


def _sample_pasts(scheme: InducingScheme, density: DensityEstimate, z: np.ndarray, steps: int, rng) -> np.ndarray:
    """Extend pasts backwards from the points z by the transfer-operator chain.

    P(x_{-1} = l | future point z) = h(ψ_l z) / (ĝ'(ψ_l z) h(z)), renormalized
    over the truncated alphabet.  Returns symbols, most recent first.
    """
    L = scheme.n_branches
    out = np.zeros((z.size, steps), dtype=int)
    for j in range(steps):
        pre = np.empty((L, z.size))
        w = np.empty((L, z.size))
        for l in range(1, L + 1):
            p = scheme.pullback(l, z)
            pre[l - 1] = p
            w[l - 1] = density.pdf(p) / scheme.forward_derivative(l, p)
        cw = np.cumsum(w, axis=0)
        u = rng.random(z.size) * cw[-1]
        pick = np.minimum((cw < u[None, :]).sum(axis=0), L - 1)
        out[:, j] = pick + 1
        z = pre[pick, np.arange(z.size)]
    return out


@dataclass(frozen=True)
class ProductDensityEstimate:
    cylinder_depth: int
    values: dict  # (stable word, unstable word) -> cylinder average of ω
    half_widths: dict
    normalization: float  # mean of ∫ω̂(x_s, ·) dμ̂ over the sampled pasts
    reference: float
    n_truncation: int
    tail_bound: float  # bound on |log ω̂| error from truncating the Jacobian product

    @property
    def bound_constant(self) -> float:
        v = np.array(list(self.values.values()))
        return float(max(v.max(), 1.0 / v.min()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stable_word", "unstable_word", "omega", "half_width"])
            for (a, b), v in self.values.items():
                w.writerow([" ".join(map(str, a)), " ".join(map(str, b)), repr(float(v)), repr(float(self.half_widths[(a, b)]))])


def top_words(scheme: InducingScheme, density: DensityEstimate, depth: int, top: int) -> list[tuple[int, ...]]:
    """All depth-k words over the ``top`` heaviest branches, in lexicographic order."""
    w = branch_weights(scheme, density)
    best = sorted((np.argsort(-w, kind="stable")[:top] + 1).tolist())
    words = [()]
    for _ in range(depth):
        words = [u + (l,) for u in words for l in best]
    return words


def omega_hat(
    scheme: InducingScheme, density: DensityEstimate, past: Sequence[int], x_u, x_ref: float | None = None
) -> np.ndarray:
    """ω̂(x_s, x_u) = J_{x̂0, x_u}(x_s) for one past (most recent first) and an array of future points."""
    if x_ref is None:
        x_ref = reference_point(scheme)
    xu = np.atleast_1d(np.asarray(x_u, dtype=float))
    Z = np.concatenate([[x_ref], xu])[None, :]
    _, logd = _pull_along(scheme, Z, np.asarray(past, dtype=int)[None, :])
    logd = logd[0]
    lw = (logd[0] - logd[1:]) + math.log(density.pdf(x_ref)) - np.log(density.pdf(xu))
    return np.exp(lw)


def product_density(
    scheme: InducingScheme,
    density: DensityEstimate,
    depth: int = 2,
    mc_samples: int = 4000,
    seed=0,
    n_truncation: int = 30,
    words: Sequence[tuple[int, ...]] | None = None,
    top: int = 2,
    norm_samples: int = 256,
    c_fit: float | None = None,
) -> ProductDensityEstimate:
    """Cylinder averages of the product-structure density ω.

    ω(x_s, x_u) = ω̂(x_s, x_u) / ∫ω̂(x_s, y) dμ̂(y) with ω̂ = J_{x̂0, x_u}(x_s) and
    x̂0 the fixed point of branch 1.  For every stable word a (time order
    x_{-k}..x_{-1}) ``mc_samples`` pasts are drawn from μ_s conditioned on a:
    a point z ~ μ̂|[a] is extended backwards by the transfer-operator chain.
    Each past is paired with one point of μ̂|[b] for every unstable word b, and
    with a shared μ̂ sample for the normalizing integral.
    """
    if depth < 1:
        raise ParameterError("depth must be >= 1")
    if n_truncation < depth:
        raise ParameterError("n_truncation must be >= depth")
    rng = np.random.default_rng(seed)
    x_ref = reference_point(scheme)
    if words is None:
        words = top_words(scheme, density, depth, top)
    words = [tuple(int(s) for s in w) for w in words]
    for w in words:
        if len(w) != depth:
            raise ParameterError(f"word {w} does not have length {depth}")
    ycyl = {}
    for b in words:
        _, (lo, hi) = decode(scheme, Itinerary(b), depth)
        ycyl[b] = (lo, hi)
    ynorm = density.sample(rng, norm_samples)
    values, hws, norms = {}, {}, []
    for a in words:
        _, (lo, hi) = decode(scheme, Itinerary(a), depth)
        z = density.sample_interval(rng, lo, hi, mc_samples)
        extra = _sample_pasts(scheme, density, z, n_truncation - depth, rng)
        past = np.concatenate([np.tile(np.array(a[::-1]), (mc_samples, 1)), extra], axis=1)
        ys = [density.sample_interval(rng, *ycyl[b], mc_samples)[:, None] for b in words]
        Z = np.concatenate([np.full((mc_samples, 1), x_ref)] + ys + [np.tile(ynorm, (mc_samples, 1))], axis=1)
        Z0 = Z.copy()
        _, logd = _pull_along(scheme, Z, past)
        lw = (logd[:, :1] - logd[:, 1:]) + math.log(density.pdf(x_ref)) - np.log(density.pdf(Z0[:, 1:]))
        w = np.exp(lw)
        nb = len(words)
        norm = w[:, nb:].mean(axis=1)
        norms.append(norm)
        for j, b in enumerate(words):
            om = w[:, j] / norm
            values[(a, b)] = float(om.mean())
            hws[(a, b)] = float(1.96 * om.std(ddof=1) / math.sqrt(mc_samples)) if mc_samples > 1 else math.inf
    tail = 2.0 * c_fit ** (n_truncation + 1) / (1.0 - c_fit) if c_fit is not None and c_fit < 1 else math.nan
    return ProductDensityEstimate(
        cylinder_depth=depth,
        values=values,
        half_widths=hws,
        normalization=float(np.mean(np.concatenate(norms))),
        reference=x_ref,
        n_truncation=n_truncation,
        tail_bound=tail,
    )


def dynamic_symbol_paths(scheme: InducingScheme, density: DensityEstimate, n_paths: int, length: int, seed=0):
    """Symbols of ``n_paths`` independent ĝ-orbits started from μ̂ samples.

    A path that falls into the gap set is restarted from a fresh sample;
    returns (symbols of shape (n_paths, length), number of restarts).
    """
    rng = np.random.default_rng(seed)

    def fresh(m):
        x = density.sample(rng, m)
        bad = scheme.branch_index(x) == 0
        while bad.any():
            x[bad] = density.sample(rng, int(bad.sum()))
            bad = scheme.branch_index(x) == 0
        return x

    x = fresh(n_paths)
    out = np.zeros((n_paths, length), dtype=int)
    restarts = 0
    for t in range(length):
        idx = scheme.branch_index(x)
        gap = idx == 0
        if gap.any():
            restarts += int(gap.sum())
            x[gap] = fresh(int(gap.sum()))
            idx = scheme.branch_index(x)
        out[:, t] = idx
        x, _ = scheme.induced_step(x)
    return out, restarts


def cylinder_frequency_ratios(symbols: np.ndarray, pairs: Sequence[tuple[tuple[int, ...], tuple[int, ...]]]) -> dict:
    """μ[a.b] / (μ[a] μ[b]) from word counts along symbol paths (rows)."""
    ks = {len(a) for a, _ in pairs} | {len(b) for _, b in pairs}
    if len(ks) != 1:
        raise ParameterError("all words must have the same length")
    k = ks.pop()

    def codes(width):
        base = int(symbols.max()) + 1
        c = np.zeros((symbols.shape[0], symbols.shape[1] - width + 1), dtype=np.int64)
        for i in range(width):
            c = c * base + symbols[:, i : i + c.shape[1]]
        return c.ravel(), base

    c1, base = codes(k)
    c2, _ = codes(2 * k)
    enc = lambda w: int(np.polyval(np.array(w, dtype=np.int64), base)) if w else 0  # noqa: E731
    u1, n1 = np.unique(c1, return_counts=True)
    u2, n2 = np.unique(c2, return_counts=True)
    f1 = dict(zip(u1.tolist(), (n1 / c1.size).tolist()))
    f2 = dict(zip(u2.tolist(), (n2 / c2.size).tolist()))
    out = {}
    for a, b in pairs:
        pa, pb, pab = f1.get(enc(a), 0.0), f1.get(enc(b), 0.0), f2.get(enc(a + b), 0.0)
        out[(a, b)] = pab / (pa * pb) if pa > 0 and pb > 0 else math.nan
    return out


# -- Birkhoff averages ----------------------------------------------------------

@dataclass(frozen=True)
class BirkhoffAverage:
    mean: float
    half_width: float
    n_used: int
    partial: bool = False

    def __iter__(self):
        return iter((self.mean, self.half_width))


def batch_means(values: np.ndarray, blocks: int = N_BLOCKS) -> tuple[float, float]:
    """Mean and 95% batch-means half-width (Student t with blocks-1 dof)."""
    v = np.asarray(values, dtype=float)
    if v.size < blocks:
        blocks = max(v.size, 1)
    means = np.array([b.mean() for b in np.array_split(v, blocks)])
    if blocks < 2:
        return float(v.mean()), math.inf
    sd = means.std(ddof=1)
    return float(v.mean()), float(stats.t.ppf(0.975, blocks - 1) * sd / math.sqrt(blocks))


def birkhoff_average(observable: Callable, orbit_source, n: int, seed=0) -> BirkhoffAverage:
    """(1/n) Σ observable along a seeded μ̂-generic orbit, with a batch-means half-width.

    ``observable`` maps an ``Orbit`` to its per-step values.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    orbit = orbit_source.orbit(n, seed)
    vals = np.asarray(observable(orbit), dtype=float)
    mean, hw = batch_means(vals)
    if np.all(vals == vals[0]):
        mean, hw = float(vals[0]), 0.0
    return BirkhoffAverage(mean, hw, int(vals.size), partial=orbit.partial)
