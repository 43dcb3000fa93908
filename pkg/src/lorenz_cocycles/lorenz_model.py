"""Geometric Lorenz model: the 1-D Lorenz map, the Poincaré skew product,
the roof function and the Lorenz ODE.

Model family (section coordinates, singular leaf Γ = {x = 0}):

    g(x)   = sign(x) * (scale * |x|**rho - 1)
    h(x,y) = beta * y + gamma * sign(x)
    P(x,y) = (g(x), h(x,y))
    R(x)   = c0 + c1 * (-log|x|)
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, EigenvalueError, IntegrationError, ParameterError

# points closer than this to Γ are treated as lying on Γ
GAMMA_TOL = 1e-14
SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class OdeParams:
    a: float = 10.0
    b: float = 28.0
    c: float = 8.0 / 3.0

    def __post_init__(self):
        for name in ("a", "b", "c"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ParameterError(f"OdeParams.{name} must be finite and non-negative, got {v!r}")


@dataclass(frozen=True)
class LorenzMapParams:
    rho: float = 0.75
    scale: float = 2.0
    domain: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if not (0.5 < self.rho < 1.0):
            raise ParameterError(
                f"rho={self.rho!r} must lie in (1/2, 1); the expansion bound needs "
                f"min|g'| = scale*rho > sqrt(2) = {SQRT2:.6f}"
            )
        if not (1.0 < self.scale <= 2.0):
            # scale <= 2 keeps g(I) inside I; scale > 1 keeps g(0+) < g(1)
            raise ParameterError(f"scale={self.scale!r} must lie in (1, 2]")
        if tuple(self.domain) != (-1.0, 1.0):
            raise ParameterError("only the interval I = [-1, 1] is supported")


@dataclass(frozen=True)
class SkewParams:
    beta: float = 0.2
    gamma: float = 0.5
    theta: float = 0.25

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise ParameterError(f"beta={self.beta!r} must lie in (0, 1)")
        if not (self.beta <= self.theta < 1.0):
            raise ParameterError(f"theta={self.theta!r} must satisfy beta <= theta < 1")
        # strips [gamma-beta, gamma+beta] and its mirror: disjoint and inside [-1, 1]
        if not (self.gamma > self.beta and self.gamma + self.beta <= 1.0):
            raise ParameterError(
                f"gamma={self.gamma!r}, beta={self.beta!r}: image strips must be disjoint "
                "(gamma > beta) and contained in [-1, 1] (gamma + beta <= 1)"
            )

    @property
    def strips(self) -> tuple[tuple[float, float], tuple[float, float]]:
        b, c = self.beta, self.gamma
        return (-c - b, -c + b), (c - b, c + b)


@dataclass(frozen=True)
class RoofParams:
    c0: float = 1.0
    c1: float = 1.0

    def __post_init__(self):
        if not (self.c0 > 0 and self.c1 > 0):
            raise ParameterError(f"roof coefficients must be positive, got c0={self.c0!r}, c1={self.c1!r}")


@dataclass(frozen=True)
class GeometricLorenzSystem:
    map: LorenzMapParams = field(default_factory=LorenzMapParams)
    skew: SkewParams = field(default_factory=SkewParams)
    roof: RoofParams = field(default_factory=RoofParams)
    ode: OdeParams = field(default_factory=OdeParams)

    def to_config(self) -> dict[str, float]:
        out: dict[str, float] = {"rho": self.map.rho, "scale": self.map.scale}
        out.update(asdict(self.skew))
        out.update(asdict(self.roof))
        out.update(asdict(self.ode))
        return out

    @classmethod
    def from_config(cls, section) -> "GeometricLorenzSystem":
        """Build from a mapping of ``key=value`` strings (the ``[lorenz]`` section)."""
        get = lambda k, d: float(section.get(k, d))  # noqa: E731
        return cls(
            map=LorenzMapParams(rho=get("rho", 0.75), scale=get("scale", 2.0)),
            skew=SkewParams(beta=get("beta", 0.2), gamma=get("gamma", 0.5), theta=get("theta", 0.25)),
            roof=RoofParams(c0=get("c0", 1.0), c1=get("c1", 1.0)),
            ode=OdeParams(a=get("a", 10.0), b=get("b", 28.0), c=get("c", 8.0 / 3.0)),
        )


def _check_section_points(x, what="x"):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0) or not np.all(np.isfinite(x)):
        raise DomainError(f"{what} must lie in [-1, 1]")
    if np.any(np.abs(x) < GAMMA_TOL):
        raise DomainError(f"{what} lies on the singular leaf Γ (|x| < {GAMMA_TOL:g})")
    return x


def _out(x, like):
    return float(x) if np.ndim(like) == 0 else x


def lorenz_map_eval(params: LorenzMapParams, x):
    """g(x) = sign(x)(scale |x|^rho - 1); accepts scalars or arrays."""
    xa = _check_section_points(x)
    y = np.sign(xa) * (params.scale * np.abs(xa) ** params.rho - 1.0)
    return _out(y, x)


def lorenz_map_derivative(params: LorenzMapParams, x):
    """|g'(x)| = scale * rho * |x|^(rho - 1)."""
    xa = _check_section_points(x)
    d = params.scale * params.rho * np.abs(xa) ** (params.rho - 1.0)
    return _out(d, x)


def lorenz_map_inverse(params: LorenzMapParams, y, side: int):
    """Inverse of g restricted to ``{x > 0}`` (side=+1) or ``{x < 0}`` (side=-1)."""
    y = np.asarray(y, dtype=float)
    if side > 0:
        x = ((y + 1.0) / params.scale) ** (1.0 / params.rho)
    else:
        x = -(((1.0 - y) / params.scale) ** (1.0 / params.rho))
    return float(x) if x.ndim == 0 else x


def verify_expansion(params: LorenzMapParams) -> tuple[float, bool]:
    """Infimum of |g'| over I \\ {0} (attained at |x| = 1) and whether it exceeds sqrt(2)."""
    m = params.scale * params.rho
    return m, bool(m > SQRT2)


def poincare_eval(sys: GeometricLorenzSystem, p):
    """P(x, y) = (g(x), beta*y + gamma*sign(x)).

    ``p`` is a pair or an ``(n, 2)`` array.
    """
    arr = np.asarray(p, dtype=float)
    x, y = arr[..., 0], arr[..., 1]
    if np.any(np.abs(y) > 1.0):
        raise DomainError("y must lie in [-1, 1]")
    gx = np.asarray(lorenz_map_eval(sys.map, x))
    hy = sys.skew.beta * y + sys.skew.gamma * np.sign(x)
    out = np.stack([gx, hy], axis=-1)
    return (float(out[0]), float(out[1])) if arr.ndim == 1 else out


def roof_eval(params: RoofParams, x):
    """Return time R(x) = c0 + c1 * (-log|x|); infinite on Γ."""
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) < GAMMA_TOL):
        raise DomainError("return time is infinite on Γ (x = 0)")
    if np.any(np.abs(xa) > 1.0):
        raise DomainError("x must lie in [-1, 1]")
    return _out(params.c0 - params.c1 * np.log(np.abs(xa)), x)


def ode_vector_field(params: OdeParams, state) -> np.ndarray:
    """Lorenz field (a(y-x), bx - y - xz, xy - cz)."""
    x, y, z = np.asarray(state, dtype=float)
    return np.array([params.a * (y - x), params.b * x - y - x * z, x * y - params.c * z])


@dataclass(frozen=True)
class EquilibriumSpectrum:
    eigenvalues: tuple[float, float, float]  # ascending: alpha_ss, alpha_s, alpha_u
    quadratic_pair: tuple[float, float]
    standard_ordering: bool  # alpha_ss < alpha_s < 0 < -alpha_s < alpha_u
    literal_ordering: bool  # alpha_ss < alpha_s < 0 < -alpha_ss < alpha_u
    dissipative_sum: bool  # alpha_s + alpha_u > 0


def equilibrium_eigenvalues(params: OdeParams) -> EquilibriumSpectrum:
    """Eigenvalues of the linearization at the origin.

    The (x, y) block has characteristic polynomial l^2 + (a+1) l - a(b-1); the z
    direction contributes -c.
    """
    a, b, c = params.a, params.b, params.c
    B, C = a + 1.0, -a * (b - 1.0)
    disc = B * B - 4.0 * C
    if disc < 0:
        raise EigenvalueError(disc)
    q = -0.5 * (B + math.copysign(math.sqrt(disc), B))
    if q == 0.0:
        pair = (0.0, 0.0)
    else:
        r1, r2 = q, C / q
        pair = (min(r1, r2), max(r1, r2))
    ev = tuple(sorted((pair[0], pair[1], -c)))
    ass, as_, au = ev
    return EquilibriumSpectrum(
        eigenvalues=ev,
        quadratic_pair=pair,
        standard_ordering=bool(ass < as_ < 0 < -as_ < au),
        literal_ordering=bool(ass < as_ < 0 < -ass < au),
        dissipative_sum=bool(as_ + au > 0),
    )


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    states: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "z", "t"])
            for (x, y, z), t in zip(self.states, self.t):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(z)), repr(float(t))])


def integrate_flow(params: OdeParams, state, dt: float, steps: int) -> Trajectory:
    """Fixed-step classical RK4."""
    if not dt > 0:
        raise ParameterError("dt must be positive")
    f = lambda s: ode_vector_field(params, s)  # noqa: E731
    out = np.empty((steps + 1, 3))
    s = np.asarray(state, dtype=float).copy()
    out[0] = s
    for i in range(1, steps + 1):
        k1 = f(s)
        k2 = f(s + 0.5 * dt * k1)
        k3 = f(s + 0.5 * dt * k2)
        k4 = f(s + dt * k3)
        s = s + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(s)):
            raise IntegrationError(i, s)
        out[i] = s
    return Trajectory(t=dt * np.arange(steps + 1), states=out)


@dataclass(frozen=True)
class AttractorSample:
    points: np.ndarray  # (n, 2)
    collisions: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "t"])
            for i, (x, y) in enumerate(self.points):
                w.writerow([repr(float(x)), repr(float(y)), i])


def sample_attractor(sys: GeometricLorenzSystem, seed: int, n_iterates: int, burn_in: int = 100) -> AttractorSample:
    """Forward P-iterates of a seeded random point after ``burn_in`` steps.

    An orbit that comes within GAMMA_TOL of Γ is discarded and restarted from a
    fresh random point; the number of restarts is reported as ``collisions``.
    """
    rng = np.random.default_rng(seed)
    pts = np.empty((max(n_iterates, 0), 2))
    collisions = 0
    while True:
        p = rng.uniform(-1.0, 1.0, size=2)
        ok = True
        k = 0
        for i in range(burn_in + max(n_iterates, 0)):
            if abs(p[0]) < GAMMA_TOL:
                ok = False
                break
            p = np.asarray(poincare_eval(sys, p))
            if i >= burn_in:
                pts[k] = p
                k += 1
        if ok:
            return AttractorSample(points=pts, collisions=collisions)
        collisions += 1


# -- interval maps ----------------------------------------------------------

@dataclass(frozen=True)
class Piece:
    """A monotone C^1 branch of an interval map on the open interval (lo, hi)."""

    lo: float
    hi: float
    f: Callable
    df: Callable  # |f'|
    finv: Callable
    increasing: bool = True
    # optional arbitrary-precision versions (mpmath scalars); default to f/finv
    mp_f: Callable | None = None
    mp_finv: Callable | None = None

    def image(self, a: float, b: float) -> tuple[float, float]:
        fa, fb = float(self.f(a)), float(self.f(b))
        return (fa, fb) if self.increasing else (fb, fa)

    def preimage(self, c: float, d: float) -> tuple[float, float]:
        ca, db = float(self.finv(c)), float(self.finv(d))
        return (ca, db) if self.increasing else (db, ca)


@dataclass(frozen=True)
class PiecewiseMonotoneMap:
    """Interval map given by monotone pieces with disjoint interiors, ordered left to right."""

    pieces: tuple[Piece, ...]
    name: str = "map"

    @property
    def domain(self) -> tuple[float, float]:
        return self.pieces[0].lo, self.pieces[-1].hi

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([p.hi for p in self.pieces[:-1]])

    def piece_index(self, x):
        return np.searchsorted(self.breakpoints, x, side="right")

    def __call__(self, x):
        xa = np.asarray(x, dtype=float)
        idx = self.piece_index(xa)
        out = np.empty_like(xa)
        for k, p in enumerate(self.pieces):
            m = idx == k
            if np.any(m):
                out[m] = p.f(xa[m])
        return float(out) if out.ndim == 0 else out

    def derivative(self, x):
        xa = np.asarray(x, dtype=float)
        idx = self.piece_index(xa)
        out = np.empty_like(xa)
        for k, p in enumerate(self.pieces):
            m = idx == k
            if np.any(m):
                out[m] = p.df(xa[m])
        return float(out) if out.ndim == 0 else out


def lorenz_interval_map(params: LorenzMapParams) -> PiecewiseMonotoneMap:
    import mpmath

    s, r = params.scale, params.rho
    ms, mr = mpmath.mpf(s), mpmath.mpf(r)
    left = Piece(
        -1.0, 0.0,
        f=lambda x: 1.0 - s * np.abs(x) ** r,
        df=lambda x: s * r * np.abs(x) ** (r - 1.0),
        finv=lambda y: lorenz_map_inverse(params, y, -1),
        mp_f=lambda x: 1 - ms * abs(x) ** mr,
        mp_finv=lambda y: -(((1 - y) / ms) ** (1 / mr)),
    )
    right = Piece(
        0.0, 1.0,
        f=lambda x: s * np.abs(x) ** r - 1.0,
        df=lambda x: s * r * np.abs(x) ** (r - 1.0),
        finv=lambda y: lorenz_map_inverse(params, y, +1),
        mp_f=lambda x: ms * abs(x) ** mr - 1,
        mp_finv=lambda y: ((y + 1) / ms) ** (1 / mr),
    )
    return PiecewiseMonotoneMap((left, right), name=f"lorenz(rho={r}, scale={s})")


def linear_full_branch_map(k: int) -> PiecewiseMonotoneMap:
    """x -> k x mod 2 on [-1, 1]: k affine full branches of slope k, Lebesgue invariant."""
    edges = np.linspace(-1.0, 1.0, k + 1)
    pieces = []
    for a, b in zip(edges[:-1], edges[1:]):
        pieces.append(
            Piece(
                float(a), float(b),
                f=lambda x, a=float(a): -1.0 + k * (x - a),
                df=lambda x: np.full(np.shape(x), float(k)) if np.ndim(x) else float(k),
                finv=lambda y, a=float(a): a + (y + 1.0) / k,
            )
        )
    return PiecewiseMonotoneMap(tuple(pieces), name=f"linear{k}")


def doubling_map() -> PiecewiseMonotoneMap:
    """g(x) = 2x - sign(x): two full affine branches, invariant density 1/2."""
    return linear_full_branch_map(2)


def lorenz_config_keys() -> Sequence[str]:
    return ("rho", "scale", "beta", "gamma", "theta", "c0", "c1", "a", "b", "c")
