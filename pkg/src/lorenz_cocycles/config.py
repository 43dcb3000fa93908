"""INI configuration: sections [lorenz] [inducing] [measure] [cocycle] [experiment]."""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import asdict, dataclass, field, replace

from .errors import ParameterError
from .lorenz_model import GeometricLorenzSystem

SECTIONS = ("lorenz", "inducing", "measure", "cocycle", "experiment")


class ConfigError(ParameterError):
    pass


@dataclass(frozen=True)
class InducingConfig:
    delta: float | None = None  # None: the symmetric period-two point (Markov choice)
    max_time: int = 40
    min_length: float = 1e-9


@dataclass(frozen=True)
class MeasureConfig:
    bins: int = 2048
    mc_samples: int = 100
    depth: int = 2
    n_truncation: int = 30
    product_samples: int = 4000
    top: int = 2


@dataclass(frozen=True)
class CocycleConfig:
    d: int = 2
    depth: int = 1
    epsilon: float = 0.3
    eta: float = 1.0
    tau: float = 0.95
    alphabet: int = 8


@dataclass(frozen=True)
class ExperimentSettings:
    trials: int = 1000
    d_list: tuple[int, ...] = (2, 3)
    n_iterates: int = 100000
    gap_tolerance: float = 1e-3
    seed: int = 0
    output_dir: str = "out"
    orbit: str = "iid"
    threads: int = 1
    perturb_d: int = 2
    perturb_epsilon: float = 0.1
    perturb_directions: int = 100
    perturb_halvings: int = 4


@dataclass(frozen=True)
class ExperimentConfig:
    system: GeometricLorenzSystem = field(default_factory=GeometricLorenzSystem)
    inducing: InducingConfig = field(default_factory=InducingConfig)
    measure: MeasureConfig = field(default_factory=MeasureConfig)
    cocycle: CocycleConfig = field(default_factory=CocycleConfig)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    source: str = "<defaults>"

    def canonical(self) -> str:
        """Stable text form of every result-relevant setting (used for the provenance hash).

        Output location and worker count do not change results and are left out.
        """
        parts = [f"lorenz.{k}={v!r}" for k, v in sorted(self.system.to_config().items())]
        for name in ("inducing", "measure", "cocycle", "experiment"):
            for k, v in sorted(asdict(getattr(self, name)).items()):
                if name == "experiment" and k in ("output_dir", "threads"):
                    continue
                parts.append(f"{name}.{k}={v!r}")
        return "\n".join(parts)

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def with_overrides(self, seed=None, output_dir=None, threads=None) -> "ExperimentConfig":
        e = self.experiment
        if seed is not None:
            e = replace(e, seed=int(seed))
        if output_dir is not None:
            e = replace(e, output_dir=str(output_dir))
        if threads is not None:
            e = replace(e, threads=int(threads))
        return replace(self, experiment=_validated(e))


def _typed(cls, raw: dict, section: str):
    out = {}
    fields = cls.__dataclass_fields__
    for k, v in raw.items():
        if k not in fields:
            raise ConfigError(f"[{section}] unknown key {k!r}")
        kind = fields[k].type
        try:
            if "tuple" in str(kind):
                out[k] = tuple(int(s) for s in str(v).replace(" ", "").split(",") if s)
            elif "float | None" in str(kind):
                out[k] = None if str(v).strip().lower() in ("", "none", "markov") else float(v)
            elif "int" in str(kind):
                out[k] = int(v)
            elif "float" in str(kind):
                out[k] = float(v)
            else:
                out[k] = str(v)
        except ValueError:
            raise ConfigError(f"[{section}] {k} = {v!r} is not a valid {kind}") from None
    return cls(**out)


def _validated(e: ExperimentSettings) -> ExperimentSettings:
    if e.trials < 1:
        raise ConfigError("[experiment] trials must be >= 1")
    if not e.d_list or min(e.d_list) < 1:
        raise ConfigError("[experiment] d_list must list dimensions >= 1")
    if e.n_iterates < 1:
        raise ConfigError("[experiment] n_iterates must be >= 1")
    if not e.gap_tolerance > 0:
        raise ConfigError("[experiment] gap_tolerance must be > 0")
    if e.orbit not in ("iid", "dynamic"):
        raise ConfigError("[experiment] orbit must be 'iid' or 'dynamic'")
    if e.threads < 1:
        raise ConfigError("[experiment] threads must be >= 1")
    return e


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from None
    for s in cp.sections():
        if s not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{s}]")
    get = lambda s: dict(cp[s]) if cp.has_section(s) else {}  # noqa: E731
    lor = get("lorenz")
    unknown = set(lor) - set(GeometricLorenzSystem().to_config())
    if unknown:
        raise ConfigError(f"{source}: [lorenz] unknown keys {sorted(unknown)}")
    try:
        system = GeometricLorenzSystem.from_config(lor)
    except ValueError as e:
        raise ConfigError(f"{source}: [lorenz] {e}") from None
    ind = _typed(InducingConfig, get("inducing"), "inducing")
    meas = _typed(MeasureConfig, get("measure"), "measure")
    coc = _typed(CocycleConfig, get("cocycle"), "cocycle")
    exp = _validated(_typed(ExperimentSettings, get("experiment"), "experiment"))
    if meas.bins < 2 or meas.mc_samples < 1 or meas.depth < 1 or meas.n_truncation < meas.depth:
        raise ConfigError(f"{source}: [measure] needs bins >= 2, mc_samples >= 1, 1 <= depth <= n_truncation")
    if coc.d < 1 or coc.depth < 0 or coc.alphabet < 1:
        raise ConfigError(f"{source}: [cocycle] needs d >= 1, depth >= 0, alphabet >= 1")
    if ind.max_time < 1:
        raise ConfigError(f"{source}: [inducing] max_time must be >= 1")
    return ExperimentConfig(system, ind, meas, coc, exp, source)


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(text, path)


def default_config_text() -> str:
    c = ExperimentConfig()
    lines = ["[lorenz]"] + [f"{k} = {v!r}" for k, v in c.system.to_config().items()]
    for name in ("inducing", "measure", "cocycle", "experiment"):
        lines.append(f"\n[{name}]")
        for k, v in asdict(getattr(c, name)).items():
            if isinstance(v, tuple):
                v = ",".join(map(str, v))
            elif v is None:
                v = "markov"
            lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
