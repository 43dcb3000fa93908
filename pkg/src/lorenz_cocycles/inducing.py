"""Full-branch inducing scheme for the 1-D Lorenz map and its symbolic coding.

The scheme is the first-return map of g to the symmetric interval
Î = (-delta, delta), restricted to the maximal intervals on which the return
is a monotone bijection onto Î.  Each such interval is a *branch*; branch
indices 1..L order the branches from left to right and serve as the symbols
of the (truncated) countable alphabet.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import (
    DomainError,
    InconsistentItineraryError,
    NotCoveredError,
    ParameterError,
    PartialItineraryError,
    SchemeError,
)
from .lorenz_model import (
    GAMMA_TOL,
    GeometricLorenzSystem,
    LorenzMapParams,
    PiecewiseMonotoneMap,
    SkewParams,
    lorenz_interval_map,
    roof_eval,
)

ONTO_TOL = 1e-10  # construction tolerance for "maps onto Î"
FULL_BRANCH_TOL = 1e-8  # validation tolerance (forward evaluation amplifies rounding)


@dataclass(frozen=True)
class Branch:
    index: int
    left: float
    right: float
    inducing_time: int
    orientation: int
    chain: tuple[int, ...]  # map piece used at each of the inducing_time steps

    @property
    def length(self) -> float:
        return self.right - self.left


@dataclass(frozen=True)
class Itinerary:
    """A finite or periodic symbol sequence.

    For bilateral itineraries ``origin`` is the position of index 0 inside
    ``symbols``; index ``n`` refers to ``symbols[origin + n]``.
    """

    symbols: tuple[int, ...]
    bilateral: bool = False
    origin: int = 0
    periodic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))
        if not self.bilateral and self.origin != 0:
            raise ParameterError("unilateral itineraries have origin 0")

    def __len__(self):
        return len(self.symbols)

    @property
    def first_index(self) -> int:
        return -self.origin

    @property
    def stop_index(self) -> int:
        return len(self.symbols) - self.origin

    def has(self, n: int) -> bool:
        if self.periodic:
            return True
        return self.first_index <= n < self.stop_index

    def __getitem__(self, n: int) -> int:
        if self.periodic:
            return self.symbols[(self.origin + n) % len(self.symbols)]
        if not self.has(n):
            raise IndexError(f"index {n} outside itinerary range [{self.first_index}, {self.stop_index})")
        return self.symbols[self.origin + n]

    def word(self, start: int, length: int) -> tuple[int, ...]:
        return tuple(self[start + i] for i in range(length))

    def shift(self, m: int = 1) -> "Itinerary":
        """Shift map f^m: index n of the result is index n + m of self."""
        if self.periodic:
            L = len(self.symbols)
            k = (self.origin + m) % L
            return Itinerary(self.symbols[k:] + self.symbols[:k], bilateral=self.bilateral, periodic=True)
        if self.bilateral:
            return Itinerary(self.symbols, bilateral=True, origin=self.origin + m)
        return Itinerary(self.symbols[m:])

    def future(self) -> "Itinerary":
        if self.periodic:
            return Itinerary(self.symbols[self.origin:] + self.symbols[: self.origin], periodic=True)
        return Itinerary(self.symbols[self.origin:])

    def past(self) -> tuple[int, ...]:
        """Symbols at indices -1, -2, ... (most recent first)."""
        return tuple(self.symbols[: self.origin][::-1])


@dataclass(frozen=True)
class SymbolicMetric:
    theta: float

    def __post_init__(self):
        if not (0.0 < self.theta < 1.0):
            raise ParameterError(f"theta={self.theta!r} must lie in (0, 1)")


@dataclass(frozen=True)
class InducingScheme:
    map: PiecewiseMonotoneMap
    delta: float
    branches: tuple[Branch, ...]
    max_time: int
    min_expansion: float
    gap_measure: float = 0.0
    truncated_measure: float = 0.0
    theta: float = field(default=float("nan"))
    _lefts: np.ndarray = field(init=False, repr=False, compare=False)
    _rights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_lefts", np.array([b.left for b in self.branches]))
        object.__setattr__(self, "_rights", np.array([b.right for b in self.branches]))
        if math.isnan(self.theta):
            object.__setattr__(self, "theta", 1.0 / self.min_expansion)

    @property
    def coverage(self) -> float:
        return float(sum(b.length for b in self.branches) / (2.0 * self.delta))

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @property
    def inducing_times(self) -> np.ndarray:
        return np.array([b.inducing_time for b in self.branches])

    def branch(self, index: int) -> Branch:
        if not 1 <= index <= len(self.branches):
            raise DomainError(f"no branch with index {index}")
        return self.branches[index - 1]

    def branch_index(self, x) -> np.ndarray:
        """Branch index (1-based) of each point, 0 for points in the gap set."""
        xa = np.asarray(x, dtype=float)
        i = np.searchsorted(self._lefts, xa, side="right") - 1
        ok = (i >= 0) & (xa <= self._rights[np.clip(i, 0, None)]) & (np.abs(xa) < self.delta)
        return np.where(ok, i + 1, 0)

    def nearest_branch(self, x: float) -> int | None:
        if not self.branches:
            return None
        mids = 0.5 * (self._lefts + self._rights)
        return int(np.argmin(np.abs(mids - x))) + 1

    # -- branch-level maps ---------------------------------------------------

    def forward(self, index: int, x):
        """ĝ restricted to branch ``index`` (no membership check)."""
        b = self.branches[index - 1]
        y = np.asarray(x, dtype=float)
        for k in b.chain:
            y = self.map.pieces[k].f(y)
        return y

    def forward_derivative(self, index: int, x):
        b = self.branches[index - 1]
        y = np.asarray(x, dtype=float)
        d = np.ones_like(y)
        for k in b.chain:
            p = self.map.pieces[k]
            d = d * p.df(y)
            y = p.f(y)
        return d

    def pullback(self, index: int, y):
        """Inverse of ĝ on branch ``index``."""
        b = self.branches[index - 1]
        z = np.asarray(y, dtype=float)
        for k in reversed(b.chain):
            z = self.map.pieces[k].finv(z)
        return z

    def pullback_interval(self, index: int, lo: float, hi: float) -> tuple[float, float]:
        b = self.branches[index - 1]
        for k in reversed(b.chain):
            lo, hi = self.map.pieces[k].preimage(lo, hi)
        return float(lo), float(hi)

    def fiber_map(self, index: int, skew: SkewParams) -> tuple[float, float]:
        """(slope, offset) of y -> slope*y + offset, the fiber part of the induced Poincaré map."""
        b = self.branches[index - 1]
        y_slope, y_off = 1.0, 0.0
        for k in b.chain:
            p = self.map.pieces[k]
            s = math.copysign(1.0, 0.5 * (p.lo + p.hi))
            y_slope, y_off = skew.beta * y_slope, skew.beta * y_off + skew.gamma * s
        return y_slope, y_off

    def induced_step(self, x):
        """Vectorized ĝ: returns (ĝ(x), branch index); gap points give (nan, 0)."""
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        idx = self.branch_index(xa)
        out = np.full_like(xa, np.nan)
        for l in np.unique(idx):
            if l == 0:
                continue
            m = idx == l
            out[m] = self.forward(int(l), xa[m])
        return out, idx

    def induced_derivative(self, x):
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        idx = self.branch_index(xa)
        out = np.full_like(xa, np.nan)
        for l in np.unique(idx):
            if l == 0:
                continue
            m = idx == l
            out[m] = self.forward_derivative(int(l), xa[m])
        return out

    # -- persistence ---------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(
                f"# delta={self.delta!r};max_time={self.max_time};coverage={self.coverage!r};"
                f"theta={self.theta!r};map={self.map.name}\n"
            )
            w = csv.writer(fh)
            w.writerow(["index", "left", "right", "inducing_time", "orientation"])
            for b in self.branches:
                w.writerow([b.index, repr(b.left), repr(b.right), b.inducing_time, b.orientation])

    @classmethod
    def from_csv(cls, path, interval_map: PiecewiseMonotoneMap, theta: float | None = None) -> "InducingScheme":
        """Load a scheme and re-validate every invariant."""
        meta: dict[str, str] = {}
        rows = []
        with open(path, newline="") as fh:
            lines = []
            for line in fh:
                if line.startswith("#"):
                    for kv in line[1:].strip().split(";"):
                        if "=" in kv:
                            k, v = kv.split("=", 1)
                            meta[k.strip()] = v.strip()
                else:
                    lines.append(line)
            for r in csv.DictReader(lines):
                rows.append(r)
        if "delta" not in meta:
            raise SchemeError(f"{path}: missing '# delta=...' metadata line")
        delta = float(meta["delta"])
        max_time = int(meta.get("max_time", max(int(r["inducing_time"]) for r in rows)))
        branches = []
        for r in rows:
            left, right, t = float(r["left"]), float(r["right"]), int(r["inducing_time"])
            chain = _chain_of(interval_map, 0.5 * (left + right), t)
            branches.append(Branch(int(r["index"]), left, right, t, int(r["orientation"]), chain))
        scheme = cls(
            map=interval_map,
            delta=delta,
            branches=tuple(branches),
            max_time=max_time,
            min_expansion=_min_expansion(interval_map, branches),
            theta=theta if theta is not None else float(meta.get("theta", "nan")),
        )
        problems = validate_scheme(scheme)
        if problems:
            raise SchemeError(f"{path}: " + "; ".join(problems))
        return scheme


def _chain_of(interval_map: PiecewiseMonotoneMap, x: float, r: int) -> tuple[int, ...]:
    chain = []
    for _ in range(r):
        k = int(interval_map.piece_index(x))
        chain.append(k)
        x = float(interval_map.pieces[k].f(x))
    return tuple(chain)


def _min_expansion(interval_map, branches, samples: int = 65) -> float:
    best = math.inf
    for b in branches:
        xs = np.linspace(b.left, b.right, samples)
        d = np.ones_like(xs)
        y = xs
        for k in b.chain:
            p = interval_map.pieces[k]
            d = d * p.df(y)
            y = p.f(y)
        best = min(best, float(np.min(d)))
    return best


def markov_delta(params: LorenzMapParams) -> float:
    """The point delta of the symmetric period-two orbit g(delta) = -delta.

    With this choice the first-return map to (-delta, delta) has only full branches.
    """
    s, r = params.scale, params.rho
    return brentq(lambda d: s * d**r - 1.0 + d, 1e-12, 1.0, xtol=1e-16, rtol=4 * np.finfo(float).eps)


def build_inducing_scheme(
    map: LorenzMapParams | PiecewiseMonotoneMap,
    delta: float | None = None,
    max_time: int = 40,
    min_length: float = 1e-9,
    beta: float | None = None,
) -> InducingScheme:
    """Discover the full branches of the first-return map to Î = (-delta, delta).

    Works by recursive subdivision: every live piece J carries its image
    K = g^j(J) (an interval, since g^j is monotone on J).  At each step the part
    of K inside Î is either all of Î (a branch with inducing time j) or a proper
    subinterval (a non-full return, counted in ``gap_measure``); the parts
    outside Î are split at the discontinuities of g and iterated again.
    """
    if isinstance(map, LorenzMapParams):
        if delta is None:
            delta = markov_delta(map)
        imap = lorenz_interval_map(map)
    else:
        imap = map
        if delta is None:
            raise ParameterError("delta is required for a generic interval map")
    if not (0.0 < delta < 1.0):
        raise ParameterError(f"delta={delta!r} must lie in (0, 1)")
    if max_time < 1:
        raise ParameterError("max_time must be >= 1")
    if not min_length > 0:
        raise ParameterError("min_length must be positive")

    pieces = imap.pieces

    def pull(chain, lo, hi):
        for k in reversed(chain):
            lo, hi = pieces[k].preimage(lo, hi)
        return lo, hi

    work = deque()
    for k, p in enumerate(pieces):
        a, b = max(-delta, p.lo), min(delta, p.hi)
        if a < b:
            work.append((*p.image(a, b), (k,)))

    found = []
    gap = trunc = 0.0
    while work:
        lo, hi, chain = work.popleft()
        j = len(chain)
        a, b = max(lo, -delta), min(hi, delta)
        if a < b:
            if lo <= -delta + ONTO_TOL and hi >= delta - ONTO_TOL:
                jl, jr = pull(chain, -delta, delta)
                orient = 1
                for k in chain:
                    orient *= 1 if pieces[k].increasing else -1
                found.append((jl, jr, j, orient, chain))
            else:
                jl, jr = pull(chain, a, b)
                gap += jr - jl
        for a, b in ((lo, min(hi, -delta)), (max(lo, delta), hi)):
            if not a < b:
                continue
            jl, jr = pull(chain, a, b)
            if j >= max_time or jr - jl < min_length:
                trunc += jr - jl
                continue
            for k, q in enumerate(pieces):
                c, d = max(a, q.lo), min(b, q.hi)
                if c < d:
                    work.append((*q.image(c, d), chain + (k,)))

    if not found:
        raise SchemeError(
            f"no full branch found with inducing time <= {max_time}; try a larger max_time or a different delta"
        )
    found.sort(key=lambda t: t[0])
    branches = tuple(Branch(i + 1, *t) for i, t in enumerate(found))
    min_exp = _min_expansion(imap, branches)
    theta = 1.0 / min_exp if beta is None else max(beta, 1.0 / min_exp)
    return InducingScheme(
        map=imap,
        delta=float(delta),
        branches=branches,
        max_time=max_time,
        min_expansion=min_exp,
        gap_measure=gap,
        truncated_measure=trunc,
        theta=theta,
    )


def validate_scheme(scheme: InducingScheme, tol: float = FULL_BRANCH_TOL) -> list[str]:
    """Check the full-branch, disjointness and time-cap invariants; returns problems found."""
    problems = []
    prev_right = -math.inf
    for b in scheme.branches:
        if not b.left < b.right:
            problems.append(f"branch {b.index} has non-positive length")
        if b.left < prev_right:
            problems.append(f"branch {b.index} overlaps its left neighbour")
        prev_right = b.right
        if b.inducing_time > scheme.max_time:
            problems.append(f"branch {b.index} inducing time {b.inducing_time} exceeds cap {scheme.max_time}")
        if not (-scheme.delta - tol <= b.left and b.right <= scheme.delta + tol):
            problems.append(f"branch {b.index} leaves Î")
        lo, hi = scheme.forward(b.index, np.array([b.left, b.right]))
        if b.orientation < 0:
            lo, hi = hi, lo
        err = max(abs(lo + scheme.delta), abs(hi - scheme.delta))
        if not err <= tol:
            problems.append(f"branch {b.index} image misses Î by {err:.3e}")
    return problems


def full_branch_errors(scheme: InducingScheme) -> np.ndarray:
    out = []
    for b in scheme.branches:
        lo, hi = scheme.forward(b.index, np.array([b.left, b.right]))
        if b.orientation < 0:
            lo, hi = hi, lo
        out.append(max(abs(lo + scheme.delta), abs(hi - scheme.delta)))
    return np.array(out)


def induced_eval(scheme: InducingScheme, x: float) -> tuple[float, int]:
    l = int(scheme.branch_index(x))
    if l == 0:
        raise NotCoveredError(x, scheme.nearest_branch(x))
    return float(scheme.forward(l, x)), l


def _mp_dps(n: int) -> int:
    return max(40, 20 + 5 * n)


def encode(scheme: InducingScheme, x: float, n: int, dps: int | None = None) -> Itinerary:
    """Branch indices visited by ĝ^0(x), ..., ĝ^(n-1)(x).

    The orbit of the float ``x`` is followed in mpmath arithmetic: deep
    cylinders are far narrower than one ulp, so double-precision forward
    iteration would return the itinerary of a nearby shadow point instead.
    Each induced step runs g until the orbit re-enters Î and identifies the
    branch by the sequence of monotone pieces it used.
    """
    import mpmath

    chains = {b.chain: b.index for b in scheme.branches}
    pieces = scheme.map.pieces
    bps = scheme.map.breakpoints
    with mpmath.workdps(dps or _mp_dps(n)):
        y = x if isinstance(x, mpmath.mpf) else mpmath.mpf(float(x))
        delta = mpmath.mpf(scheme.delta)
        symbols: list[int] = []
        for _ in range(n):
            if not abs(y) < delta:
                raise PartialItineraryError(symbols, x)
            chain = []
            while True:
                k = int(np.searchsorted(bps, float(y), side="right"))
                chain.append(k)
                p = pieces[k]
                y = (p.mp_f or p.f)(y)
                if abs(y) < delta or len(chain) >= scheme.max_time:
                    break
            l = chains.get(tuple(chain))
            if l is None:
                raise PartialItineraryError(symbols, x)
            symbols.append(l)
    return Itinerary(tuple(symbols))


def decode(
    scheme: InducingScheme,
    itinerary: Itinerary | Sequence[int],
    n: int | None = None,
    dps: int | None = None,
    exact_mid: bool = False,
):
    """Nested preimage interval of the first ``n`` symbols and its midpoint.

    With ``dps`` set the pullbacks run in mpmath at that precision and the
    interval is rounded outward to floats, so it always contains every float
    whose itinerary starts with these symbols.  ``exact_mid`` returns the
    midpoint as an mpmath number: deep cylinders can be narrower than one ulp
    and then contain no float at all.
    """
    if not isinstance(itinerary, Itinerary):
        itinerary = Itinerary(tuple(itinerary))
    if n is None:
        n = len(itinerary)
    if not itinerary.periodic and n > itinerary.stop_index:
        raise ParameterError(f"n={n} exceeds the itinerary length {itinerary.stop_index}")
    syms = [itinerary[i] for i in range(n)]
    for l in syms:
        if not 1 <= l <= scheme.n_branches:
            raise DomainError(f"symbol {l} references no branch")
    if dps is None and exact_mid:
        dps = _mp_dps(n)
    if dps is None:
        lo, hi = -scheme.delta, scheme.delta
        for i in range(n - 1, -1, -1):
            lo, hi = scheme.pullback_interval(syms[i], lo, hi)
            if hi < lo:
                raise InconsistentItineraryError(f"empty nested preimage after symbol index {i}")
        return 0.5 * (lo + hi), (lo, hi)

    import mpmath

    pieces = scheme.map.pieces
    with mpmath.workdps(dps):
        lo, hi = -mpmath.mpf(scheme.delta), mpmath.mpf(scheme.delta)
        for i in range(n - 1, -1, -1):
            for k in reversed(scheme.branches[syms[i] - 1].chain):
                p = pieces[k]
                inv = p.mp_finv or p.finv
                lo, hi = (inv(lo), inv(hi)) if p.increasing else (inv(hi), inv(lo))
            if hi < lo:
                raise InconsistentItineraryError(f"empty nested preimage after symbol index {i}")
        mid = (lo + hi) / 2 if exact_mid else float((lo + hi) / 2)
        flo, fhi = float(lo), float(hi)
        if flo > lo:
            flo = float(np.nextafter(flo, -np.inf))
        if fhi < hi:
            fhi = float(np.nextafter(fhi, np.inf))
    return mid, (flo, fhi)


def bilateral_decode(
    scheme: InducingScheme,
    skew: SkewParams,
    itinerary: Itinerary,
    n_past: int,
    n_future: int,
):
    """Point (x, y) coded by a bilateral itinerary and a rectangle containing it.

    x comes from the future symbols; y from pushing the fiber midpoint y = 0
    through the affine fiber maps of the past symbols, oldest first.
    """
    if not itinerary.bilateral:
        raise ParameterError("bilateral_decode needs a bilateral itinerary")
    x, (xl, xr) = decode(scheme, itinerary.future(), n_future)
    y, width = 0.0, 2.0
    for k in range(-n_past, 0):
        a, c = scheme.fiber_map(itinerary[k], skew)
        y = a * y + c
        width *= a
    return (x, y), ((xl, xr), (y - 0.5 * width, y + 0.5 * width))


def symbolic_distance(metric: SymbolicMetric, a: Itinerary, b: Itinerary) -> float:
    """theta^s, s the smallest |index| where a and b disagree (0 if they agree)."""
    if a.bilateral != b.bilateral:
        raise ParameterError("itineraries must have the same sidedness")
    lo = max(a.first_index, b.first_index)
    hi = min(a.stop_index, b.stop_index)
    if a.periodic and b.periodic:
        lo, hi = (-max(len(a), len(b)) * 2, max(len(a), len(b)) * 2) if a.bilateral else (0, 2 * max(len(a), len(b)))
    elif a.periodic:
        lo, hi = b.first_index, b.stop_index
    elif b.periodic:
        lo, hi = a.first_index, a.stop_index
    order = sorted(range(lo, hi), key=lambda n: (abs(n), n))
    for n in order:
        if a[n] != b[n]:
            return metric.theta ** abs(n)
    return 0.0


def return_time_r(scheme: InducingScheme, x) -> int:
    """r(x) = r̂(π(x)); ``x`` is a section point (x, y) or its leaf coordinate."""
    xc = float(x[0]) if np.ndim(x) else float(x)
    l = int(scheme.branch_index(xc))
    if l == 0:
        raise NotCoveredError(xc, scheme.nearest_branch(xc))
    return scheme.branches[l - 1].inducing_time


def total_return_time_T(sys: GeometricLorenzSystem, scheme: InducingScheme, x) -> float:
    """T(x) = sum of R(P^j x) for j < r(x)."""
    xc = float(x[0]) if np.ndim(x) else float(x)
    l = int(scheme.branch_index(xc))
    if l == 0:
        raise NotCoveredError(xc, scheme.nearest_branch(xc))
    total = 0.0
    for k in scheme.branches[l - 1].chain:
        if abs(xc) < GAMMA_TOL:
            raise DomainError("orbit meets Γ before returning")
        total += roof_eval(sys.roof, xc)
        xc = float(scheme.map.pieces[k].f(xc))
    return total


def total_return_time_vec(roof, scheme: InducingScheme, x) -> np.ndarray:
    """Vectorized T over an array of covered points (roof: RoofParams)."""
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    idx = scheme.branch_index(xa)
    if np.any(idx == 0):
        bad = float(xa[np.argmax(idx == 0)])
        raise NotCoveredError(bad, scheme.nearest_branch(bad))
    out = np.zeros_like(xa)
    for l in np.unique(idx):
        m = idx == l
        y = xa[m]
        t = np.zeros_like(y)
        for k in scheme.branches[l - 1].chain:
            t += roof.c0 - roof.c1 * np.log(np.abs(y))
            y = scheme.map.pieces[k].f(y)
        out[m] = t
    return out


# -- distortion ---------------------------------------------------------------

@dataclass(frozen=True)
class DistortionReport:
    max_log_ratio: dict[int, float]
    c_fit: float
    pairs_used: int
    discarded: int


def _split_depth(scheme: InducingScheme, x: np.ndarray, y: np.ndarray, max_depth: int):
    """First induced iterate where the itineraries of x and y differ (-1 if a gap is hit first,
    0 if no split within max_depth)."""
    n = np.zeros(x.shape, dtype=int)
    active = np.ones(x.shape, dtype=bool)
    x, y = x.copy(), y.copy()
    for k in range(max_depth):
        if not active.any():
            break
        bx = scheme.branch_index(x[active])
        by = scheme.branch_index(y[active])
        ids = np.flatnonzero(active)
        gap = (bx == 0) | (by == 0)
        split = ~gap & (bx != by)
        n[ids[gap]] = -1
        n[ids[split]] = k
        active[ids[gap | split]] = False
        go = ids[~gap & ~split]
        if go.size:
            x[go], _ = scheme.induced_step(x[go])
            y[go], _ = scheme.induced_step(y[go])
    return n


def _pair_sample(scheme: InducingScheme, n_pairs: int, rng, branch: int | None):
    if branch is None:
        w = np.array([b.length for b in scheme.branches])
        idx = rng.choice(scheme.n_branches, size=n_pairs, p=w / w.sum()) + 1
    else:
        idx = np.full(n_pairs, branch)
    left = scheme._lefts[idx - 1]
    length = scheme._rights[idx - 1] - left
    x = left + length * rng.uniform(0.0, 1.0, n_pairs)
    off = length * 10.0 ** (-rng.uniform(0.0, 12.0, n_pairs)) * rng.choice([-1.0, 1.0], n_pairs)
    y = x + off
    out = (y <= left) | (y >= left + length)
    y[out] = x[out] - off[out]
    y = np.clip(y, left, left + length)
    return x, y


def _log_ratios(scheme, x, y):
    return np.abs(np.log(scheme.induced_derivative(x)) - np.log(scheme.induced_derivative(y)))


def check_distortion(
    scheme: InducingScheme,
    branch: int | None = None,
    n_pairs: int = 20000,
    seed: int = 0,
    max_depth: int = 60,
) -> DistortionReport:
    """Empirical distortion table and the smallest c with c^n above every bin maximum.

    Pairs are drawn inside a branch (``branch=None``: a length-weighted random
    branch per pair) at log-uniform separations, plus the two near-endpoint
    pairs of every branch, which realise the widest spread of ĝ'.
    """
    if n_pairs < 1:
        raise ParameterError("n_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    x, y = _pair_sample(scheme, n_pairs, rng, branch)
    bs = scheme.branches if branch is None else (scheme.branch(branch),)
    eps = np.array([1e-12 * b.length for b in bs])
    ex = np.array([b.left for b in bs]) + eps
    ey = np.array([b.right for b in bs]) - eps
    x, y = np.concatenate([x, ex]), np.concatenate([y, ey])
    n = _split_depth(scheme, x, y, max_depth)
    keep = n > 0
    ratios = _log_ratios(scheme, x[keep], y[keep])
    table: dict[int, float] = {}
    for k, r in zip(n[keep], ratios):
        table[int(k)] = max(table.get(int(k), 0.0), float(r))
    c_fit = max((m ** (1.0 / k) for k, m in table.items() if m > 0), default=0.0)
    return DistortionReport(
        max_log_ratio=dict(sorted(table.items())),
        c_fit=c_fit,
        pairs_used=int(keep.sum()),
        discarded=int((n < 0).sum()),
    )


def distortion_violations(
    scheme: InducingScheme, c: float, n_pairs: int = 10000, seed: int = 1, branch: int | None = None, max_depth: int = 60
) -> tuple[int, int]:
    """Count pairs of a fresh sample with log ratio > c^n(x,y); returns (violations, pairs checked)."""
    rng = np.random.default_rng(seed)
    x, y = _pair_sample(scheme, n_pairs, rng, branch)
    n = _split_depth(scheme, x, y, max_depth)
    keep = n > 0
    ratios = _log_ratios(scheme, x[keep], y[keep])
    return int(np.sum(ratios > c ** n[keep].astype(float))), int(keep.sum())
