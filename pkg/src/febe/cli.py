"""Command line interface: ``febe solve ...``.

Settings are taken from built-in defaults, then an optional key-value
config file (``key = value`` lines, ``#`` comments), then command line
flags.
"""
import argparse
import configparser
import logging
import sys
from pathlib import Path

from .problems import example1_spec, example2_spec
from .solver import SolverConfig
from .study import StudyConfig, StudyError, emit_csv, fill_energy_errors, run_study, CSV_COLUMNS

DEFAULTS = {
    "example": 2,
    "levels": 4,
    "mode": "uniform",
    "p": 3.0,
    "delta": 1.0,
    "epsilon": 1e-5,
    "law": "power",
    "g": 0.5,
    "uzawa_rho": 25.0,
    "uzawa_tol": 1e-10,
    "uzawa_max": 50,
    "newton_tol": 1e-10,
    "newton_max": 50,
    "line_search": "fallback",
    "linear_backend": "direct",
    "linear_tol": 1e-10,
    "mark_fraction": 0.1,
    "out": None,
    "dump_meshes": None,
}

_TYPES = {k: type(v) for k, v in DEFAULTS.items() if v is not None}
_TYPES.update(out=str, dump_meshes=str)


def read_config(path):
    """Parse a sectionless ``key = value`` file into typed settings."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SystemExit(f"febe: cannot read config {path}: {exc}")
    parser.read_string("[febe]\n" + text)
    out = {}
    for key, raw in parser["febe"].items():
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise SystemExit(f"febe: unknown config key {key!r} in {path}")
        try:
            out[key] = _TYPES[key](raw)
        except ValueError:
            raise SystemExit(f"febe: bad value {raw!r} for {key} in {path}")
    return out


def build_parser():
    ap = argparse.ArgumentParser(prog="febe", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="run a convergence study on the L-shape examples")
    s.add_argument("--example", type=int, choices=(1, 2))
    s.add_argument("--levels", type=int)
    s.add_argument("--mode", choices=("uniform", "adaptive"))
    s.add_argument("--p", type=float)
    s.add_argument("--delta", type=float)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--g", type=float, help="friction coefficient (example 1)")
    s.add_argument("--uzawa-rho", type=float, dest="uzawa_rho")
    s.add_argument("--mark-fraction", type=float, dest="mark_fraction")
    s.add_argument("--linear-backend", choices=("direct", "iterative"), dest="linear_backend")
    s.add_argument("--out", metavar="CSV_PATH")
    s.add_argument("--dump-meshes", metavar="DIR", dest="dump_meshes")
    s.add_argument("--config", metavar="FILE", help="key = value settings file")
    s.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_settings(args):
    settings = dict(DEFAULTS)
    if args.config:
        settings.update(read_config(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val
    return settings


def make_spec(settings):
    if settings["law"] != "power":
        raise SystemExit("febe: only law = power is available from the command line")
    common = dict(p=settings["p"], epsilon=settings["epsilon"], delta=settings["delta"])
    if settings["example"] == 1:
        return example1_spec(g=settings["g"], uzawa_rho=settings["uzawa_rho"], **common)
    return example2_spec(**common)


def _print_rows(rows, stream):
    from .study import _fmt
    stream.write(",".join(CSV_COLUMNS) + "\n")
    for r in rows:
        stream.write(",".join(_fmt(getattr(r, c)) for c in CSV_COLUMNS) + "\n")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    settings = resolve_settings(args)
    if settings["levels"] < 1:
        print("febe: --levels must be at least 1", file=sys.stderr)
        return 2
    try:
        spec = make_spec(settings)
    except ValueError as exc:
        print(f"febe: {exc}", file=sys.stderr)
        return 2
    solver = SolverConfig(
        newton_tol=settings["newton_tol"], newton_max=settings["newton_max"],
        line_search=settings["line_search"], linear_backend=settings["linear_backend"],
        linear_tol=settings["linear_tol"], uzawa_rho=settings["uzawa_rho"],
        uzawa_tol=settings["uzawa_tol"], uzawa_max=settings["uzawa_max"])
    cfg = StudyConfig(levels=settings["levels"], mode=settings["mode"],
                      mark_fraction=settings["mark_fraction"], solver=solver,
                      dump_meshes=settings["dump_meshes"],
                      dump_indicators=settings["dump_meshes"] is not None)
    status = 0
    try:
        rows = run_study(spec, settings["mode"], settings["levels"], cfg)
    except StudyError as exc:
        print(f"febe: solver failure at {exc}", file=sys.stderr)
        rows = exc.rows
        fill_energy_errors(rows)
        status = 1
    except ValueError as exc:
        print(f"febe: {exc}", file=sys.stderr)
        return 2
    if settings["out"]:
        emit_csv(rows, settings["out"])
    _print_rows(rows, sys.stdout)
    return status


if __name__ == "__main__":
    sys.exit(main())
