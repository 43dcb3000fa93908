"""Command-line front end: ``lorenz-cocycles <command> [--config PATH] [--seed N] [--out DIR] [--threads N]``.

Exit codes: 0 success, 1 invariant failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .config import ConfigError, default_config_text, load_config
from .errors import LorenzCocycleError, ParameterError

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2

# module that raises each error family, for error messages
_ERROR_MODULE = {
    "DomainError": "lorenz_model", "EigenvalueError": "lorenz_model", "IntegrationError": "lorenz_model",
    "SchemeError": "inducing", "NotCoveredError": "inducing", "PartialItineraryError": "inducing",
    "InconsistentItineraryError": "inducing", "TruncationError": "measure", "ConvergenceError": "measure",
    "InvalidGeneratorError": "cocycle", "LengthError": "lyapunov", "UnderflowError": "lyapunov",
}


def _global_flags(p: argparse.ArgumentParser, top: bool) -> None:
    # defaults live on the top-level parser only, so flags work before or after the command
    default = None if top else argparse.SUPPRESS
    p.add_argument("--config", metavar="PATH", default=default, help="INI file with [lorenz] [inducing] [measure] [cocycle] [experiment]")
    p.add_argument("--seed", type=int, metavar="N", default=default, help="override [experiment] seed")
    p.add_argument("--out", metavar="DIR", default=default, help="override [experiment] output_dir")
    p.add_argument("--threads", type=int, metavar="N", default=default, help="worker processes for trial sweeps")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lorenz-cocycles", description="Lyapunov spectra of linear cocycles over a geometric Lorenz flow.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(p, top=True)
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    cmds = {
        "build": "construct the system, inducing scheme and densities; write them to the output directory",
        "typicality": "simplicity frequency over random fiber-bunched cocycles (trials.csv, typicality.json)",
        "perturb": "perturb a degenerate unitary-scalar cocycle along random directions (perturbation.csv)",
        "verify": "run the invariant and acceptance suite (verify.json); exit 1 on any failure",
        "spectrum": "Lyapunov spectrum of a single cocycle (spectrum.json)",
        "density": "write the Ulam densities and the product-structure density",
        "config-template": "print a configuration file with every default",
    }
    subs = {name: sub.add_parser(name, help=text, description=text) for name, text in cmds.items()}
    for s in subs.values():
        _global_flags(s, top=False)
    subs["perturb"].add_argument("--degenerate-seed", type=int, default=None, help="seed of the degenerate cocycle (default: --seed)")
    subs["spectrum"].add_argument("--d", type=int, default=None, help="dimension of a sampled trial generator (default: [cocycle] d)")
    subs["spectrum"].add_argument("--trial", type=int, default=0, help="trial index of the sampled generator")
    subs["spectrum"].add_argument("--generator", metavar="JSON", default=None, help="use a saved generator instead of a sampled one")
    subs["verify"].add_argument("--skip-typicality", action="store_true", help="leave out the typicality sweep")
    subs["verify"].add_argument("--skip-determinism", action="store_true", help="leave out the rerun comparison")
    return p


def _print_json(doc) -> None:
    from .experiment import _json_value

    print(json.dumps(_json_value(doc), indent=1))


def _run(args, cfg) -> int:
    from . import experiment as ex

    if args.command == "build":
        _print_json(ex.cmd_build(cfg))
    elif args.command == "typicality":
        rep = ex.cmd_typicality(cfg)
        for d, r in rep["per_dimension"].items():
            print(f"d={d}: fraction_simple={r['fraction_simple']:.4f} over {r['trials']} trials, {len(r['failures'])} errors")
    elif args.command == "perturb":
        rep = ex.cmd_perturbation_probe(cfg, args.degenerate_seed)
        for j, r in rep["by_halving"].items():
            print(f"halving={j} size={r['size']:.6g}: fraction_regained={r['fraction_regained']:.3f} median_gap={r['median_gap_regained']:.4g}")
        print(f"log-log slope of median regained gap against size: {rep['loglog_slope']:.3f}")
    elif args.command == "verify":
        from .verify import cmd_verify

        doc = cmd_verify(cfg, typicality=not args.skip_typicality, determinism=not args.skip_determinism)
        return EXIT_OK if doc["passed"] else EXIT_INVARIANT
    elif args.command == "spectrum":
        _print_json(ex.cmd_spectrum(cfg, args.d, args.trial, args.generator))
    elif args.command == "density":
        _print_json(ex.cmd_density(cfg))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "config-template":
        sys.stdout.write(default_config_text())
        return EXIT_OK
    where = args.config or "<defaults>"
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.out, args.threads)
    except (ConfigError, ParameterError, ValueError) as e:
        print(f"config error ({where}): {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _run(args, cfg)
    except (ConfigError, ParameterError) as e:
        print(f"config error ({where}): {e}", file=sys.stderr)
        return EXIT_CONFIG
    except LorenzCocycleError as e:
        module = _ERROR_MODULE.get(type(e).__name__, "lorenz_cocycles")
        print(f"{module}: {type(e).__name__}: {e} (config {where})", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    raise SystemExit(main())
