"""Orbit sources for Birkhoff and Oseledets averages over the induced map.

``iid`` orbits draw every point independently from μ̂ (the symbolic sampling
model: symbols are i.i.d. with the μ̂ branch weights).  ``dynamic`` orbits
iterate ĝ from a μ̂ sample and restart from a fresh sample if rounding pushes
the orbit into the gap set.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .inducing import InducingScheme, Itinerary, total_return_time_vec
from .measure import DensityEstimate


@dataclass(frozen=True)
class Orbit:
    symbols: np.ndarray  # branch indices, 1-based
    points: np.ndarray  # leaf coordinates in Î
    kind: str = "iid"
    restarts: int = 0

    def __len__(self):
        return self.symbols.size

    @property
    def partial(self) -> bool:
        return self.restarts > 0

    def itinerary(self, start: int = 0) -> Itinerary:
        return Itinerary(tuple(self.symbols[start:].tolist()))


@dataclass(frozen=True)
class OrbitSource:
    scheme: InducingScheme
    density: DensityEstimate
    kind: str = "iid"

    def __post_init__(self):
        if self.kind not in ("iid", "dynamic"):
            raise ParameterError(f"unknown orbit kind {self.kind!r}")

    def _covered(self, rng, m: int) -> np.ndarray:
        x = self.density.sample(rng, m)
        bad = self.scheme.branch_index(x) == 0
        while bad.any():
            x[bad] = self.density.sample(rng, int(bad.sum()))
            bad = self.scheme.branch_index(x) == 0
        return x

    def orbit(self, n: int, seed=0) -> Orbit:
        if n < 1:
            raise ParameterError("n must be >= 1")
        rng = np.random.default_rng(seed)
        if self.kind == "iid":
            x = self._covered(rng, n)
            return Orbit(self.scheme.branch_index(x), x, "iid")
        pts = np.empty(n)
        sym = np.empty(n, dtype=int)
        x = self._covered(rng, 1)
        restarts = 0
        for t in range(n):
            l = self.scheme.branch_index(x)
            if l[0] == 0:
                restarts += 1
                x = self._covered(rng, 1)
                l = self.scheme.branch_index(x)
            pts[t], sym[t] = x[0], l[0]
            x = self.scheme.forward(int(l[0]), x)
        return Orbit(sym, pts, "dynamic", restarts)


def return_time_observable(scheme: InducingScheme):
    """Observable r: the inducing time of the branch visited."""
    times = np.concatenate([[0], scheme.inducing_times])
    return lambda orbit: times[orbit.symbols]


def total_return_time_observable(roof, scheme: InducingScheme):
    """Observable T: the flow time until the next return to Î."""
    return lambda orbit: total_return_time_vec(roof, scheme, orbit.points)


def symbol_observable(values_by_symbol: dict[int, float], default: float = 0.0):
    def f(orbit):
        table = np.full(int(orbit.symbols.max()) + 1, default)
        for k, v in values_by_symbol.items():
            if k < table.size:
                table[k] = v
        return table[orbit.symbols]

    return f
