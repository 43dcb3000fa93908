"""End-to-end experiments: build artifacts, typicality sweeps, perturbation probes.

Every output is a pure function of the configuration: random streams are
derived from ``[experiment] seed`` and fixed stream tags, trial t of dimension
d uses SeedSequence([seed, d, t]), and results are written in trial order
whatever the number of worker processes.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .cocycle import (
    SCHEMA_VERSION,
    CocycleGenerator,
    _unit_disk,
    fiber_bunching_check,
    sample_fiber_bunched,
)
from .config import ConfigError, ExperimentConfig
from .errors import LorenzCocycleError
from .inducing import InducingScheme, build_inducing_scheme, total_return_time_vec
from .lorenz_model import GeometricLorenzSystem, lorenz_interval_map, verify_expansion
from .lyapunov import qr_spectrum, simplicity_check
from .measure import DensityEstimate, induced_density, product_density, ulam_density
from .orbits import OrbitSource

# stream tags for the non-trial random streams
DENSITY_STREAM = 101
INDUCED_STREAM = 102
PRODUCT_STREAM = 103
PERTURB_STREAM = 104


def stream(seed: int, *tags: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), *map(int, tags)])


def child(ss: np.random.SeedSequence, i: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (i,))


def _json_value(v):
    if isinstance(v, dict):
        return {str(k): _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def write_json(path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_json_value(doc), fh, indent=1, sort_keys=False)
        fh.write("\n")


def provenance(cfg: ExperimentConfig) -> dict:
    return {"config_hash": cfg.hash(), "seed": cfg.experiment.seed, "version": __version__}


# -- building --------------------------------------------------------------------


@dataclass(frozen=True)
class Built:
    config: ExperimentConfig
    system: GeometricLorenzSystem
    scheme: InducingScheme
    density: DensityEstimate  # μ_g on I
    induced: DensityEstimate  # μ̂ on Î

    def orbit_source(self) -> OrbitSource:
        return OrbitSource(self.scheme, self.induced, self.config.experiment.orbit)


def build_objects(cfg: ExperimentConfig) -> Built:
    sys = cfg.system
    scheme = build_inducing_scheme(
        sys.map, delta=cfg.inducing.delta, max_time=cfg.inducing.max_time, min_length=cfg.inducing.min_length, beta=sys.skew.beta
    )
    m = cfg.measure
    seed = cfg.experiment.seed
    dens = ulam_density(sys.map, m.bins, m.mc_samples, stream(seed, DENSITY_STREAM))
    ind = induced_density(scheme, m.bins, m.mc_samples, stream(seed, INDUCED_STREAM))
    return Built(cfg, sys, scheme, dens, ind)


def _out(cfg: ExperimentConfig, name: str) -> str:
    return os.path.join(cfg.experiment.output_dir, name)


def cmd_build(cfg: ExperimentConfig) -> dict:
    """Write scheme.csv, density.csv, induced_density.csv and system.json (summary + provenance)."""
    os.makedirs(cfg.experiment.output_dir, exist_ok=True)
    b = build_objects(cfg)
    b.scheme.to_csv(_out(cfg, "scheme.csv"))
    b.density.to_csv(_out(cfg, "density.csv"))
    b.induced.to_csv(_out(cfg, "induced_density.csv"))
    m_exp, ok = verify_expansion(b.system.map)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "provenance": provenance(cfg),
        "lorenz": b.system.to_config(),
        "expansion": {"min_derivative": m_exp, "exceeds_sqrt2": ok},
        "scheme": {
            "delta": b.scheme.delta,
            "n_branches": b.scheme.n_branches,
            "coverage": b.scheme.coverage,
            "max_time": b.scheme.max_time,
            "min_expansion": b.scheme.min_expansion,
            "theta": b.scheme.theta,
        },
        "density": {"bins": b.density.bin_count, "residual": b.density.residual, "min_weight": float(b.density.weights.min())},
        "induced_density": {"bins": b.induced.bin_count, "residual": b.induced.residual},
    }
    write_json(_out(cfg, "system.json"), summary)
    return summary


def load_built(cfg: ExperimentConfig) -> Built:
    """Reload the artifacts written by ``cmd_build`` (the scheme is re-validated on load)."""
    need = [_out(cfg, f) for f in ("scheme.csv", "density.csv", "induced_density.csv")]
    missing = [p for p in need if not os.path.exists(p)]
    if missing:
        raise ConfigError(f"missing build artifacts {missing}; run the build command first")
    imap = lorenz_interval_map(cfg.system.map)
    scheme = InducingScheme.from_csv(need[0], imap)
    return Built(cfg, cfg.system, scheme, DensityEstimate.from_csv(need[1]), DensityEstimate.from_csv(need[2]))


# -- typicality ----------------------------------------------------------------------

_WORKER: dict = {}


def _init_worker(cfg: ExperimentConfig):
    _WORKER["built"] = load_built(cfg)


def trial_seed(seed: int, d: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(d), int(trial)])


def trial_generator(cfg: ExperimentConfig, d: int, trial: int, epsilon: float | None = None) -> CocycleGenerator:
    c = cfg.cocycle
    eps = c.epsilon if epsilon is None else epsilon
    return sample_fiber_bunched(
        child(trial_seed(cfg.experiment.seed, d, trial), 0), d, c.depth, eps, cfg.system.skew.theta, c.eta, c.tau, c.alphabet
    )


def run_trial(task) -> dict:
    """One typicality trial: a pure function of (config, d, trial index)."""
    cfg, d, t = task
    b: Built = _WORKER["built"]
    e = cfg.experiment
    row = {"seed": e.seed, "d": d, "trial": t, "exponents": [], "half_widths": [], "min_gap": math.nan,
           "simple": False, "bunching_margin": math.nan, "mean_T": math.nan, "error": ""}
    try:
        gen = trial_generator(cfg, d, t)
        rep = fiber_bunching_check(gen, cfg.system.skew.theta, cfg.cocycle.eta, cfg.cocycle.tau)
        orbit = b.orbit_source().orbit(e.n_iterates + max(gen.depth - 1, 0), child(trial_seed(e.seed, d, t), 1))
        spec = qr_spectrum(gen, orbit, e.n_iterates)
        v = simplicity_check(spec, e.gap_tolerance)
        T = total_return_time_vec(b.config.system.roof, b.scheme, orbit.points[: e.n_iterates])
        row.update(
            exponents=spec.exponents.tolist(), half_widths=spec.half_widths.tolist(), min_gap=v.min_gap,
            simple=v.simple, bunching_margin=rep.margin, mean_T=float(T.mean()),
        )
    except LorenzCocycleError as err:
        row["error"] = f"{type(err).__name__}: {err}"
    return row


def _map_trials(cfg: ExperimentConfig, tasks: list, fn=run_trial, built: Built | None = None) -> list:
    """Run tasks in order; with threads > 1, worker processes reload the build artifacts from disk."""
    if cfg.experiment.threads > 1 and built is None:
        with ProcessPoolExecutor(cfg.experiment.threads, initializer=_init_worker, initargs=(cfg,)) as ex:
            return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (8 * cfg.experiment.threads))))
    if built is None:
        _init_worker(cfg)
    else:
        _WORKER["built"] = built
    return [fn(t) for t in tasks]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def typicality_rows(cfg: ExperimentConfig, built: Built | None = None) -> list[dict]:
    e = cfg.experiment
    return _map_trials(cfg, [(cfg, d, t) for d in e.d_list for t in range(e.trials)], built=built)


def summarize_typicality(cfg: ExperimentConfig, rows: list[dict]) -> dict:
    e = cfg.experiment
    per_dim = {}
    qs = [0.0, 0.01, 0.05, 0.25, 0.5, 0.75, 1.0]
    for d in e.d_list:
        rs = [r for r in rows if r["d"] == d]
        ok = [r for r in rs if not r["error"]]
        gaps = np.array([r["min_gap"] for r in ok]) if ok else np.array([math.nan])
        margins = np.array([r["bunching_margin"] for r in ok]) if ok else np.array([math.nan])
        per_dim[str(d)] = {
            "trials": len(rs),
            "completed": len(ok),
            "fraction_simple": (sum(r["simple"] for r in ok) / len(rs)) if rs else 0.0,
            "min_gap_quantiles": {str(q): float(np.quantile(gaps, q)) for q in qs},
            "bunching_margin": {"min": float(margins.min()), "median": float(np.median(margins))},
            "mean_T": float(np.mean([r["mean_T"] for r in ok])) if ok else math.nan,
            "failures": [{"trial": r["trial"], "seed": [e.seed, d, r["trial"]], "error": r["error"]} for r in rs if r["error"]],
            "not_simple": [{"trial": r["trial"], "seed": [e.seed, d, r["trial"]], "min_gap": r["min_gap"]} for r in ok if not r["simple"]],
        }
    report = {
        "schema_version": SCHEMA_VERSION,
        "provenance": provenance(cfg),
        "n_iterates": e.n_iterates,
        "gap_tolerance": e.gap_tolerance,
        "epsilon": cfg.cocycle.epsilon,
        "depth": cfg.cocycle.depth,
        "alphabet": cfg.cocycle.alphabet,
        "orbit": e.orbit,
        "per_dimension": per_dim,
    }
    return report


def write_trials_csv(path, rows: list[dict], dmax: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "d", "trial"] + [f"lambda_{i + 1}" for i in range(dmax)] + ["min_gap", "simple", "bunching_margin", "mean_T", "error"])
        for r in rows:
            ex = [_fmt(x) for x in r["exponents"]] + [""] * (dmax - len(r["exponents"]))
            w.writerow([r["seed"], r["d"], r["trial"]] + ex + [_fmt(r["min_gap"]), _fmt(r["simple"]), _fmt(r["bunching_margin"]), _fmt(r["mean_T"]), r["error"]])


def cmd_typicality(cfg: ExperimentConfig) -> dict:
    """Sweep random fiber-bunched generators; write typicality.json and trials.csv."""
    rows = typicality_rows(cfg)
    write_trials_csv(_out(cfg, "trials.csv"), rows, max(cfg.experiment.d_list))
    report = summarize_typicality(cfg, rows)
    write_json(_out(cfg, "typicality.json"), report)
    return report


# -- perturbation probe ----------------------------------------------------------------


def random_unitary(rng, d: int) -> np.ndarray:
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def degenerate_generator(cfg: ExperimentConfig, degenerate_seed: int, d: int, scale: float = 1.0) -> CocycleGenerator:
    """Depth-1 generator whose entries are scale times random unitaries: all exponents equal log(scale)."""
    rng = np.random.default_rng(stream(degenerate_seed, PERTURB_STREAM, 0))
    words = [(l,) for l in range(1, cfg.cocycle.alphabet + 1)]
    table = {w: scale * random_unitary(rng, d) for w in words}
    return CocycleGenerator(d=d, depth=1, table=table, default=scale * random_unitary(rng, d))


def perturbed(gen: CocycleGenerator, direction: dict, size: float) -> CocycleGenerator:
    return CocycleGenerator(
        d=gen.d, depth=gen.depth,
        table={w: gen.table[w] + size * direction[w] for w in gen.words},
        default=gen.default + size * direction["default"],
    )


def perturbation_direction(cfg: ExperimentConfig, degenerate_seed: int, gen: CocycleGenerator, m: int) -> dict:
    rng = np.random.default_rng(stream(degenerate_seed, PERTURB_STREAM, 1, m))
    out = {w: _unit_disk(rng, (gen.d, gen.d)) for w in gen.words}
    out["default"] = _unit_disk(rng, (gen.d, gen.d))
    return out


def _perturb_task(task) -> dict:
    cfg, degenerate_seed, m, j = task
    b: Built = _WORKER["built"]
    e = cfg.experiment
    gen = degenerate_generator(cfg, degenerate_seed, e.perturb_d)
    size = 0.0 if j < 0 else e.perturb_epsilon * 2.0 ** (-j)
    row = {"direction": m, "halving": j, "size": size, "exponents": [], "min_gap": math.nan, "simple": False, "error": ""}
    try:
        g = perturbed(gen, perturbation_direction(cfg, degenerate_seed, gen, m), size) if size > 0 else gen
        orbit = b.orbit_source().orbit(e.n_iterates, stream(degenerate_seed, PERTURB_STREAM, 2, m))
        spec = qr_spectrum(g, orbit, e.n_iterates)
        v = simplicity_check(spec, e.gap_tolerance)
        row.update(exponents=spec.exponents.tolist(), min_gap=v.min_gap, simple=v.simple)
    except LorenzCocycleError as err:
        row["error"] = f"{type(err).__name__}: {err}"
    return row


def cmd_perturbation_probe(cfg: ExperimentConfig, degenerate_seed: int | None = None) -> dict:
    """Perturb a unitary-scalar cocycle along random directions at sizes epsilon * 2^-j.

    Halving index -1 is the unperturbed control.  Writes perturbation.csv and
    perturbation.json with the per-size fraction of directions that regain a gap above the
    tolerance, plus the log-log slope of the median regained gap against size.
    """
    e = cfg.experiment
    if degenerate_seed is None:
        degenerate_seed = e.seed
    tasks = [(cfg, degenerate_seed, m, j) for j in range(-1, e.perturb_halvings) for m in range(1, e.perturb_directions + 1)]
    rows = _map_trials(cfg, tasks, _perturb_task)
    d = e.perturb_d
    with open(_out(cfg, "perturbation.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["direction", "halving", "size"] + [f"lambda_{i + 1}" for i in range(d)] + ["min_gap", "simple", "error"])
        for r in rows:
            ex = [_fmt(x) for x in r["exponents"]] + [""] * (d - len(r["exponents"]))
            w.writerow([r["direction"], r["halving"], _fmt(r["size"])] + ex + [_fmt(r["min_gap"]), _fmt(r["simple"]), r["error"]])
    by_j = {}
    for j in range(-1, e.perturb_halvings):
        rs = [r for r in rows if r["halving"] == j]
        reg = [r["min_gap"] for r in rs if r["simple"]]
        by_j[j] = {
            "size": rs[0]["size"],
            "fraction_regained": sum(r["simple"] for r in rs) / len(rs),
            "median_gap_regained": float(np.median(reg)) if reg else math.nan,
        }
    pts = [(v["size"], v["median_gap_regained"]) for j, v in by_j.items() if j >= 0 and math.isfinite(v["median_gap_regained"])]
    slope = float(np.polyfit(np.log([p[0] for p in pts]), np.log([p[1] for p in pts]), 1)[0]) if len(pts) >= 2 else math.nan
    report = {
        "schema_version": SCHEMA_VERSION,
        "provenance": provenance(cfg),
        "degenerate_seed": degenerate_seed,
        "d": d,
        "epsilon": e.perturb_epsilon,
        "directions": e.perturb_directions,
        "n_iterates": e.n_iterates,
        "gap_tolerance": e.gap_tolerance,
        "by_halving": by_j,
        "loglog_slope": slope,
    }
    write_json(_out(cfg, "perturbation.json"), report)
    return report


# -- single spectra and densities ---------------------------------------------------------


def cmd_spectrum(cfg: ExperimentConfig, d: int | None = None, trial: int = 0, generator_path: str | None = None) -> dict:
    """Spectrum of one cocycle (a saved generator, or trial ``trial`` of dimension d); writes spectrum.json."""
    b = load_built(cfg)
    e = cfg.experiment
    if generator_path is not None:
        with open(generator_path) as fh:
            gen = CocycleGenerator.from_json(fh.read())
        orbit_ss = stream(e.seed, 0)
    else:
        d = cfg.cocycle.d if d is None else d
        gen = trial_generator(cfg, d, trial)
        orbit_ss = child(trial_seed(e.seed, d, trial), 1)
    orbit = b.orbit_source().orbit(e.n_iterates + max(gen.depth - 1, 0), orbit_ss)
    spec = qr_spectrum(gen, orbit, e.n_iterates)
    v = simplicity_check(spec, e.gap_tolerance)
    T = total_return_time_vec(cfg.system.roof, b.scheme, orbit.points[: e.n_iterates])
    doc = spec.to_dict(v, float(T.mean()))
    doc["provenance"] = provenance(cfg)
    doc["trial"] = None if generator_path else [e.seed, gen.d, trial]
    write_json(_out(cfg, "spectrum.json"), doc)
    return doc


def cmd_density(cfg: ExperimentConfig) -> dict:
    """Write density.csv, induced_density.csv and product_density.csv."""
    os.makedirs(cfg.experiment.output_dir, exist_ok=True)
    b = build_objects(cfg)
    m = cfg.measure
    b.density.to_csv(_out(cfg, "density.csv"))
    b.induced.to_csv(_out(cfg, "induced_density.csv"))
    pd = product_density(
        b.scheme, b.induced, m.depth, m.product_samples, stream(cfg.experiment.seed, PRODUCT_STREAM), m.n_truncation, top=m.top
    )
    pd.to_csv(_out(cfg, "product_density.csv"))
    return {"bound_constant": pd.bound_constant, "values": len(pd.values), "residual": b.density.residual}
