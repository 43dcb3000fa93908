"""Locally constant matrix cocycles over the induced shift.

A generator of depth k assigns a complex d×d matrix to every k-word over the
truncated alphabet; words absent from the table (in particular words with
symbols beyond the alphabet) take the ``default`` matrix.  Depth 0 means a
constant cocycle.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidGeneratorError, LengthError, ParameterError
from .inducing import InducingScheme, Itinerary, SymbolicMetric, total_return_time_vec

SCHEMA_VERSION = 1
DET_MIN = 1e-12


def opnorm(a: np.ndarray) -> float:
    """Operator 2-norm (largest singular value)."""
    return float(np.linalg.svd(a, compute_uv=False)[0])


def singular_values(a: np.ndarray) -> np.ndarray:
    return np.linalg.svd(a, compute_uv=False)


def _freeze(a) -> np.ndarray:
    m = np.array(a, dtype=complex)
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class CocycleGenerator:
    d: int
    depth: int
    table: Mapping[tuple[int, ...], np.ndarray]
    default: np.ndarray
    _stack: np.ndarray = field(init=False, repr=False, compare=False)
    _keys: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.d < 1:
            raise InvalidGeneratorError("dimension d must be >= 1")
        if self.depth < 0:
            raise InvalidGeneratorError("depth must be >= 0")
        table = {}
        for w, m in self.table.items():
            w = tuple(int(s) for s in w)
            if len(w) != self.depth:
                raise InvalidGeneratorError(f"table word {w} does not have length {self.depth}")
            table[w] = _freeze(m)
        default = _freeze(self.default)
        for w, m in list(table.items()) + [("default", default)]:
            if m.shape != (self.d, self.d):
                raise InvalidGeneratorError(f"entry {w} has shape {m.shape}, expected ({self.d}, {self.d})")
            if not np.all(np.isfinite(m)):
                raise InvalidGeneratorError(f"entry {w} has non-finite values")
            if abs(np.linalg.det(m)) <= DET_MIN:
                raise InvalidGeneratorError(f"entry {w} is singular (|det| <= {DET_MIN:g})")
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "default", default)
        words = sorted(table)
        object.__setattr__(self, "_keys", {w: i + 1 for i, w in enumerate(words)})
        object.__setattr__(self, "_stack", np.stack([default] + [table[w] for w in words]))

    @classmethod
    def constant(cls, m) -> "CocycleGenerator":
        m = np.asarray(m)
        return cls(d=m.shape[0], depth=0, table={(): m}, default=m)

    @property
    def words(self) -> list[tuple[int, ...]]:
        return sorted(self.table)

    @property
    def stack(self) -> np.ndarray:
        """All distinct entries: index 0 is the default, then table words in sorted order."""
        return self._stack

    def entry_index(self, symbols) -> np.ndarray:
        """Index into ``stack`` of the generator value at every shift of a symbol array.

        Position j uses the word symbols[j : j + depth]; the result has length
        len(symbols) - depth + 1.
        """
        s = np.asarray(symbols, dtype=np.int64)
        k = self.depth
        n = s.size - k + 1
        if n < 1:
            raise LengthError(f"need at least {k} symbols, got {s.size}")
        if k == 0:
            return np.full(n, 1 if () in self.table else 0, dtype=np.int64)
        top = max(max((max(w) for w in self.table), default=0), 0)
        base = top + 2  # symbols above ``top`` collapse to one out-of-table value
        if base**k <= 4_000_000:
            lut = np.zeros(base**k, dtype=np.int64)
            for w, i in self._keys.items():
                lut[int(np.polyval(np.array(w, dtype=np.int64), base))] = i
            c = np.minimum(s, base - 1)
            code = np.zeros(n, dtype=np.int64)
            for i in range(k):
                code = code * base + c[i : i + n]
            return lut[code]
        return np.array([self._keys.get(tuple(s[j : j + k].tolist()), 0) for j in range(n)], dtype=np.int64)

    def condition_numbers(self) -> dict:
        out = {}
        for w, m in list(self.table.items()) + [("default", self.default)]:
            sv = singular_values(m)
            out[w] = float(sv[0] / sv[-1])
        return out

    # -- JSON -----------------------------------------------------------------

    def to_json(self) -> str:
        def flat(m):
            return [[float(z.real), float(z.imag)] for z in np.asarray(m).ravel()]

        doc = {
            "schema_version": SCHEMA_VERSION,
            "d": self.d,
            "depth": self.depth,
            "entries": {",".join(map(str, w)): flat(self.table[w]) for w in self.words},
            "default": flat(self.default),
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "CocycleGenerator":
        try:
            doc = json.loads(text)
            d, depth = int(doc["d"]), int(doc["depth"])

            def mat(v):
                a = np.array(v, dtype=float)
                if a.shape != (d * d, 2):
                    raise InvalidGeneratorError(f"matrix entry has shape {a.shape}, expected ({d * d}, 2)")
                return (a[:, 0] + 1j * a[:, 1]).reshape(d, d)

            table = {tuple(int(s) for s in k.split(",")) if k else (): mat(v) for k, v in doc["entries"].items()}
            return cls(d=d, depth=depth, table=table, default=mat(doc["default"]))
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidGeneratorError(f"malformed generator JSON: {e}") from None


def _as_symbols(itinerary) -> tuple[Itinerary | None, Sequence[int]]:
    if isinstance(itinerary, Itinerary):
        return itinerary, itinerary
    return None, list(itinerary)


def generator_eval(gen: CocycleGenerator, itinerary) -> np.ndarray:
    """A(x): table lookup by the leading depth-k word of the itinerary."""
    it, seq = _as_symbols(itinerary)
    try:
        w = tuple(int(seq[i]) for i in range(gen.depth))
    except IndexError:
        w = None
    if w is None:
        return gen.default
    return gen.table.get(w, gen.default)


def _symbols_from(itinerary, start: int, count: int) -> list[int]:
    it, seq = _as_symbols(itinerary)
    try:
        return [int(seq[start + i]) for i in range(count)]
    except IndexError:
        raise LengthError(f"itinerary too short: need indices {start}..{start + count - 1}") from None


def cocycle_product(gen: CocycleGenerator, itinerary, n: int) -> np.ndarray:
    """A^n(x) = A(f^(n-1) x) ... A(f x) A(x); A^0 = id."""
    if n < 0:
        raise ParameterError("use cocycle_inverse_product for negative n")
    out = np.eye(gen.d, dtype=complex)
    if n == 0:
        return out
    stack = gen.stack
    if gen.depth == 0:
        idx = np.full(n, gen.entry_index([])[0])
    else:
        idx = gen.entry_index(_symbols_from(itinerary, 0, n - 1 + gen.depth))
    for i in idx:
        out = stack[i] @ out
    return out


def cocycle_inverse_product(gen: CocycleGenerator, itinerary: Itinerary, n: int) -> np.ndarray:
    """A^{-n}(x) = (A^n(f^{-n} x))^{-1}, using the past of a bilateral itinerary."""
    if n < 0:
        raise ParameterError("n must be >= 0")
    if n == 0:
        return np.eye(gen.d, dtype=complex)
    if not isinstance(itinerary, Itinerary) or not (itinerary.bilateral or itinerary.periodic):
        raise LengthError("cocycle_inverse_product needs a bilateral or periodic itinerary")
    if not itinerary.periodic and -n < itinerary.first_index:
        raise LengthError(f"itinerary has fewer than {n} past symbols")
    syms = _symbols_from(itinerary, -n, n - 1 + gen.depth) if gen.depth else []
    return np.linalg.inv(cocycle_product(gen, syms, n))


# -- Hölder seminorm and fiber bunching ------------------------------------------

def _agreement(w1: tuple | None, w2: tuple | None, depth: int) -> int:
    """Guaranteed number of leading agreeing symbols between points in the two word classes.

    ``None`` stands for the default class, whose members can share up to
    depth-1 leading symbols with any table word.
    """
    if w1 is None or w2 is None:
        return max(depth - 1, 0)
    for i, (a, b) in enumerate(zip(w1, w2)):
        if a != b:
            return i
    return depth


def holder_seminorm(
    gen: CocycleGenerator,
    metric: SymbolicMetric,
    eta: float,
    sample_pairs: int = 100000,
    seed=0,
    exact_limit: int = 2_000_000,
) -> float:
    """sup ||A(x) - A(y)|| / d(x, y)^eta over pairs of distinct word classes.

    Exact enumeration when the number of pairs is at most ``exact_limit``;
    otherwise the maximum over ``sample_pairs`` seeded random pairs (a lower
    estimate of the exact value).
    """
    if not (0.0 < eta <= 1.0):
        raise ParameterError("eta must lie in (0, 1]")
    classes: list[tuple | None] = list(gen.words)
    mats = [gen.table[w] for w in gen.words]
    if gen.depth > 0:
        classes.append(None)
        mats.append(gen.default)
    m = len(classes)
    if m < 2:
        return 0.0
    n_pairs = m * (m - 1) // 2
    if n_pairs <= exact_limit:
        pairs = itertools.combinations(range(m), 2)
    else:
        rng = np.random.default_rng(seed)
        a = rng.integers(0, m, sample_pairs)
        b = rng.integers(0, m, sample_pairs)
        pairs = ((int(i), int(j)) for i, j in zip(a, b) if i != j)
    best = 0.0
    for i, j in pairs:
        diff = mats[i] - mats[j]
        if not np.any(diff):
            continue
        s = _agreement(classes[i], classes[j], gen.depth)
        best = max(best, opnorm(diff) / metric.theta ** (eta * s))
    return best


@dataclass(frozen=True)
class BunchingReport:
    eta: float
    tau: float
    theta: float
    worst_product: float
    worst_word: object
    passed: bool

    @property
    def margin(self) -> float:
        return self.tau - self.worst_product


def bunching_products(gen: CocycleGenerator, theta: float, eta: float) -> dict:
    """||A(w)|| ||A(w)^{-1}|| theta^eta for every table word and the default."""
    out = {}
    for w, m in list(gen.table.items()) + [("default", gen.default)]:
        sv = singular_values(m)
        if sv[-1] <= 0 or not np.isfinite(sv[0] / sv[-1]):
            raise InvalidGeneratorError(f"entry {w} is singular")
        out[w] = float(sv[0] / sv[-1]) * theta**eta
    return out


def fiber_bunching_check(gen: CocycleGenerator, theta: float, eta: float = 1.0, tau: float = 0.95, mode: str = "exact") -> BunchingReport:
    """Fiber-bunching test ||A(x)|| ||A(x)^{-1}|| theta^eta < tau over every table entry."""
    if not (0.0 < theta < 1.0):
        raise ParameterError("theta must lie in (0, 1)")
    if not (0.0 < eta <= 1.0):
        raise ParameterError("eta must lie in (0, 1]")
    if not (0.0 < tau < 1.0):
        raise ParameterError("tau must lie in (0, 1)")
    if mode != "exact":
        raise ParameterError(f"unknown mode {mode!r}; finite tables are always checked exactly")
    prods = bunching_products(gen, theta, eta)
    worst_word = max(prods, key=lambda w: prods[w])
    worst = prods[worst_word]
    return BunchingReport(eta, tau, theta, worst, worst_word, bool(worst < tau))


def bunching_bound(d: int, epsilon: float, theta: float, eta: float) -> float:
    return (1.0 + epsilon * d) ** 2 * theta**eta


def _unit_disk(rng, shape) -> np.ndarray:
    r = np.sqrt(rng.random(shape))
    phi = 2.0 * np.pi * rng.random(shape)
    return r * np.exp(1j * phi)


def sample_fiber_bunched(
    seed,
    d: int,
    depth: int = 1,
    epsilon: float = 0.3,
    theta: float = 0.25,
    eta: float = 1.0,
    tau: float = 0.95,
    alphabet: int = 8,
    max_redraws: int = 1000,
) -> CocycleGenerator:
    """Random generator with entries I + epsilon*Z, Z with i.i.d. entries uniform in the unit disk.

    The table covers every depth-k word over symbols 1..alphabet plus the
    default.  (1 + epsilon d)^2 theta^eta < tau bounds ||A|| but not ||A^{-1}||,
    so an entry failing the exact bunching test is redrawn from the same
    per-word stream until it passes.
    """
    if d < 1 or depth < 0 or alphabet < 1:
        raise ParameterError("need d >= 1, depth >= 0, alphabet >= 1")
    if epsilon < 0:
        raise ParameterError("epsilon must be >= 0")
    if not (0.0 < theta < 1.0 and 0.0 < eta <= 1.0 and 0.0 < tau < 1.0):
        raise ParameterError("need theta in (0,1), eta in (0,1], tau in (0,1)")
    bound = bunching_bound(d, epsilon, theta, eta)
    if not bound < tau:
        raise ParameterError(
            f"epsilon={epsilon!r} too large: (1 + epsilon*d)^2 * theta^eta = {bound:.6g} must be < tau = {tau!r}"
        )
    words: list = [w for w in itertools.product(range(1, alphabet + 1), repeat=depth)] if depth else [()]
    if depth:
        words.append("default")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    # one child stream per word, independent of how often this function is called
    streams = [np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (i,)) for i in range(len(words))]
    eye = np.eye(d, dtype=complex)
    mats = []
    for w, ss in zip(words, streams):
        rng = np.random.default_rng(ss)
        for _ in range(max_redraws):
            m = eye + epsilon * _unit_disk(rng, (d, d))
            sv = singular_values(m)
            if sv[-1] > 0 and abs(np.linalg.det(m)) > DET_MIN and sv[0] / sv[-1] * theta**eta < tau:
                break
        else:
            raise ParameterError(f"no bunched entry found for word {w} in {max_redraws} draws; lower epsilon")
        mats.append(m)
    if depth == 0:
        return CocycleGenerator(d=d, depth=0, table={(): mats[0]}, default=mats[0])
    return CocycleGenerator(d=d, depth=depth, table=dict(zip(words[:-1], mats[:-1])), default=mats[-1])


# -- suspension cocycle --------------------------------------------------------------

@dataclass(frozen=True)
class SuspensionCocycle:
    """The flow cocycle A^t over the suspension of ĝ by the total return time T.

    Identity between returns; at the j-th return (flow time s_j) the factor
    A(ĝ^(j-1) x) is applied, so A^{s_n(x)}(x) = A^n(x).
    """

    generator: CocycleGenerator
    scheme: InducingScheme
    roof: object  # RoofParams, or a callable mapping leaf points to return times

    def return_times(self, points) -> np.ndarray:
        if callable(self.roof):
            return np.asarray(self.roof(np.asarray(points, dtype=float)), dtype=float)
        return total_return_time_vec(self.roof, self.scheme, points)

    def cumulative_times(self, points) -> np.ndarray:
        """s_1, ..., s_n along the orbit points x, ĝx, ..., ĝ^(n-1)x."""
        return np.cumsum(self.return_times(points))


def _orbit_of(scheme: InducingScheme, x: float, n: int):
    pts, syms = [], []
    y = float(x)
    for _ in range(n):
        l = int(scheme.branch_index(y))
        if l == 0:
            from .errors import NotCoveredError

            raise NotCoveredError(y, scheme.nearest_branch(y))
        pts.append(y)
        syms.append(l)
        y = float(scheme.forward(l, y))
    return np.array(pts), syms


def induced_from_suspension(susp: SuspensionCocycle, x: float) -> np.ndarray:
    """A_f(x) = A^{T(x)}(x)."""
    pts, syms = _orbit_of(susp.scheme, x, max(susp.generator.depth, 1))
    t = float(susp.return_times(pts[:1])[0])
    return suspension_eval(susp, x, t)


def suspension_eval(susp: SuspensionCocycle, x: float, t: float, max_returns: int = 10000) -> np.ndarray:
    """A^t(x): product of the generator values at every return crossed by time t (right-continuous)."""
    if t < 0:
        raise ParameterError("t must be >= 0")
    gen = susp.generator
    out = np.eye(gen.d, dtype=complex)
    if t == 0:
        return out
    y = float(x)
    syms: list[int] = []
    pts: list[float] = []
    s = 0.0
    n = 0
    while n < max_returns:
        need = n + max(gen.depth, 1)
        while len(pts) < need:
            l = int(susp.scheme.branch_index(y))
            if l == 0:
                from .errors import NotCoveredError

                raise NotCoveredError(y, susp.scheme.nearest_branch(y))
            pts.append(y)
            syms.append(l)
            y = float(susp.scheme.forward(l, y))
        s = s + float(susp.return_times(np.array([pts[n]]))[0])
        if s > t:
            break
        out = generator_eval(gen, syms[n:]) @ out
        n += 1
    else:
        raise LengthError(f"more than {max_returns} returns before time {t}")
    return out


def suspension_eval_orbit(susp: SuspensionCocycle, symbols, points, t: float) -> np.ndarray:
    """A^t along a given base orbit (symbols and leaf points of the successive returns)."""
    if t < 0:
        raise ParameterError("t must be >= 0")
    gen = susp.generator
    s = np.cumsum(susp.return_times(np.asarray(points, dtype=float)))
    n = int(np.searchsorted(s, t, side="right"))
    return cocycle_product(gen, list(symbols), n)
