"""Command line entry point.

Exit codes: 0 all verdicts PASS, 1 some verdict FAIL, 2 INCONCLUSIVE,
3 configuration or domain error, 4 numerical error.
"""

import argparse
import os
import sys

from . import verify
from .config import parse_config
from .errors import (ConfigError, DomainError, FitError, NumericalAccuracyError, ResolventError,
                     SpectralError, TruncationError)

OUTDIR_ENV = "RENEWLAB_OUTDIR"
EXIT = {verify.PASS: 0, verify.FAIL: 1, verify.INCONCLUSIVE: 2}
EXIT_CONFIG, EXIT_NUMERICAL = 3, 4

COMMANDS = ("srt", "wre", "llt", "liminf", "spectral", "xval", "iid", "constants", "density")


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def build_parser():
    p = argparse.ArgumentParser(prog="renewlab",
                                description="Renewal experiments for intermittent semiflows.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("-c", "--config", help="flat key = value config file")
    p.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--seed", help="RNG seed")
    p.add_argument("--mode", choices=("map", "iid"))
    p.add_argument("--shards", help="number of sample shards")
    p.add_argument("--n-jobs", dest="n_jobs", help="worker threads")
    p.add_argument("--outdir", help="artifact directory")
    p.add_argument("--budget", dest="budget_seconds", help="wall-clock budget in seconds")
    p.add_argument("--beta", type=_floats, help="beta list for constants/density")
    p.add_argument("--refine-grid", type=int, help="second Ulam grid for the drift check")
    p.add_argument("--quiet", action="store_true")
    return p


def _overrides(args):
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    for key in ("seed", "mode", "shards", "n_jobs", "outdir", "budget_seconds"):
        v = getattr(args, key)
        if v is not None:
            out[key] = str(v)
    return out


def dispatch(command, cfg, beta=None, refine_grid=None):
    """Run ``command`` and return its reports."""
    if command == "srt":
        return [verify.run_srt(cfg)]
    if command == "wre":
        return [verify.run_wre(cfg)]
    if command == "llt":
        return [verify.run_llt(cfg)]
    if command == "liminf":
        wre = verify.run_wre(cfg)
        return [wre, verify.run_liminf(cfg, wre_report=wre)]
    if command == "spectral":
        return [verify.run_spectral(cfg, refine_grid=refine_grid)]
    if command == "xval":
        return [verify.cross_validate(cfg)]
    if command == "iid":
        icfg = cfg.replace(mode="iid")
        reps = []
        for fn in (verify.run_srt, verify.run_wre, verify.run_llt, verify.cross_validate):
            r = fn(icfg)
            r.experiment_id = "iid_" + r.experiment_id
            reps.append(r)
        return reps
    if command == "constants":
        return [verify.run_constants(cfg, *([beta] if beta else []))]
    if command == "density":
        return [verify.run_density(cfg, *([beta] if beta else []),
                                   csv_dir=cfg.outdir if "csv" in cfg.formats else None)]
    raise ConfigError(f"unknown command {command!r}", key="command")


def overall(reports):
    states = {r.status for r in reports}
    for s in (verify.FAIL, verify.INCONCLUSIVE):
        if s in states:
            return s
    return verify.PASS


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        overrides = _overrides(args)
        env = os.environ.get(OUTDIR_ENV)
        if env:
            overrides["outdir"] = env
        cfg = parse_config(args.config, overrides)
        reports = dispatch(args.command, cfg, args.beta, args.refine_grid)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalAccuracyError, SpectralError, ResolventError, TruncationError,
            FitError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for r in reports:
        r.write(cfg.outdir, cfg.formats)
        if not args.quiet:
            print("\n".join(r.summary_lines()))
    return EXIT[overall(reports)]


if __name__ == "__main__":
    sys.exit(main())
