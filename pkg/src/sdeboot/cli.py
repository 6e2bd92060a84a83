"""Command line entry point: ``sdeboot {simulate,fit,bootstrap,coverage}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import adjustment, bootstrap, gqmle
from .errors import SdeBootError
from .experiment import (ExperimentConfig, dumps_json, load_config, run_coverage,
                         with_overrides, write_report)
from .model import SamplingDesign, get_model
from .noise import RngStream, parse_noise
from .simulate import SamplePath, simulate


def _emit(obj, out):
    text = dumps_json(obj)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def fit_report(path: SamplePath, model_name: str) -> dict:
    m = get_model(model_name).model
    fit = gqmle.fit(path, m)
    full, bar = gqmle.hessians(path, m, fit)
    s = adjustment.scalings(path, m, fit)
    return {
        "model": model_name,
        "n": path.n,
        "h": path.h,
        "T": path.T,
        "gamma_hat": fit.gamma_hat.tolist(),
        "alpha_hat": fit.alpha_hat.tolist(),
        "h1_at_opt": fit.h1_at_opt,
        "h2_at_opt": fit.h2_at_opt,
        "gamma_hat_matrix": full.tolist(),
        "gamma_bar_matrix": bar.tolist(),
        "interior": [bool(v) for v in fit.interior],
        **s.to_dict(),
    }


def cmd_simulate(args):
    entry = get_model(args.model)
    dyn = entry.dynamics(parse_noise(args.noise))
    design = SamplingDesign.from_horizon(args.n, args.t)
    path = simulate(dyn, design, args.substeps, RngStream.for_role(args.seed, "path", 1))
    if args.out:
        path.to_csv(args.out)
    else:
        path.to_csv(sys.stdout)


def cmd_fit(args):
    _emit(fit_report(SamplePath.from_csv(args.path), args.model), args.out)


def cmd_bootstrap(args):
    path = SamplePath.from_csv(args.path)
    m = get_model(args.model).model
    fit = gqmle.fit(path, m)
    _, bar = gqmle.hessians(path, m, fit)
    s = adjustment.scalings(path, m, fit)
    part = bootstrap.partition(path.n, args.k)
    bootstrap.check_block_growth(args.k, path.T)
    dist = bootstrap.distribution(path, m, fit, s, bar, part, bootstrap.parse_scheme(args.scheme),
                                  args.reps, args.mode, RngStream.for_role(args.seed, "weights", 1))
    ci = bootstrap.confidence_interval(dist, fit, bar, s, args.level)
    _emit({
        "model": args.model,
        "k": args.k,
        "reps": args.reps,
        "scheme": bootstrap.parse_scheme(args.scheme).name,
        "mode": dist.mode.value,
        "level": args.level,
        "seed": args.seed,
        "theta_hat": fit.theta_hat.tolist(),
        "b": s.b,
        "b1": s.b1,
        "b2": s.b2,
        "quantiles": {"lower": ci.q_lo.tolist(), "upper": ci.q_hi.tolist()},
        "intervals": [[float(lo), float(hi)] for lo, hi in zip(ci.lower, ci.upper)],
        "failures": dist.failures,
    }, args.out)


def cmd_coverage(args):
    base = load_config(args.config) if args.config else {}
    cfg = ExperimentConfig.from_dict(base)
    cfg = with_overrides(cfg, n=args.n, T=args.t, k=args.k, paths=args.paths, reps=args.reps,
                         noise=args.noise, scheme=args.scheme, level=args.level, seed=args.seed,
                         threads=args.threads, mode=args.mode, model=args.model,
                         substeps=args.substeps)
    report = run_coverage(cfg)
    if args.out:
        write_report(report, args.out, args.format)
    else:
        sys.stdout.write(dumps_json(report.to_dict()))
    logging.getLogger(__name__).info("wall time %.2fs", report.wall_time)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdeboot", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a path and write it as CSV (t,x)")
    p.add_argument("--model", default="ou_sqrt_scale")
    p.add_argument("--noise", default="wiener")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--t", type=float, default=500.0)
    p.add_argument("--substeps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit the stepwise GQMLE to a path CSV")
    p.add_argument("--path", required=True)
    p.add_argument("--model", default="ou_sqrt_scale")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bootstrap", help="bootstrap confidence intervals for a path CSV")
    p.add_argument("--path", required=True)
    p.add_argument("--model", default="ou_sqrt_scale")
    p.add_argument("--k", type=int, default=25)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--scheme", default="beta")
    p.add_argument("--mode", default="score_shortcut")
    p.add_argument("--level", type=float, default=0.99)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("coverage", help="Monte Carlo coverage study")
    p.add_argument("--config", help="TOML or JSON file with ExperimentConfig fields")
    p.add_argument("--model")
    p.add_argument("--n", type=int)
    p.add_argument("--t", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--paths", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--noise")
    p.add_argument("--scheme")
    p.add_argument("--mode")
    p.add_argument("--level", type=float)
    p.add_argument("--substeps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out")
    p.add_argument("--format", choices=["json", "csv"])
    p.set_defaults(func=cmd_coverage)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except SdeBootError as exc:
        sys.stderr.write(json.dumps(exc.to_dict(), sort_keys=True) + "\n")
        return 1
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "io", "message": str(exc)}, sort_keys=True) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
