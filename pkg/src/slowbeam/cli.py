"""Command-line front end.

Subcommands:
  run      slow-time simulation for a set of methods, per-step CSV out
  sweep    cross-product parameter sweep (repeatable --axis name=v1,v2,...)
  pattern  beam-pattern CSV export for figure tooling
  spread   mean filtered-covariance beamspace profiles (series CSV)

Exit codes: 0 ok, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import runner
from .scenario import (ScenarioError, apply_overrides, default_scenario,
                       load_scenario, small_scenario)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", help="scenario YAML (default: built-in "
                                      "four-group reference)")
    p.add_argument("--small", action="store_true",
                   help="use the N=32 quick preset")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a top-level scenario field")
    p.add_argument("--alpha", type=float, help="mobility coefficient")
    p.add_argument("--beta", type=float, help="recursion coefficient")
    p.add_argument("--sigma-est", type=float,
                   help="angle-estimate error std (degrees)")
    p.add_argument("--nq", type=int, help="quantizer depth")
    p.add_argument("--rank", type=int, help="kernel rank")
    p.add_argument("--trials", type=int, help="Monte Carlo trials")
    p.add_argument("--steps", type=int, help="slow-time steps")
    p.add_argument("--seed", type=int, help="master RNG seed")
    p.add_argument("--group", type=int, default=1,
                   help="intended group (1-based, default 1)")
    p.add_argument("--methods", default="geb",
                   help="comma list, from: " + ",".join(runner.METHODS))
    p.add_argument("--mc-draws", type=int, default=64,
                   help="channel draws per step for multi-user groups")
    p.add_argument("--with-nmse", action="store_true",
                   help="also evaluate channel-acquisition nMSE")
    p.add_argument("--t-len", type=int, default=6, help="training length")
    p.add_argument("--npl-complexity", type=int, default=3,
                   help="own-patch count used in the whitening complexity "
                        "charge")
    p.add_argument("--burn-in", type=int, default=0,
                   help="steps excluded from summaries")
    p.add_argument("--summary-out", help="also write an aggregated CSV")


def _build_config(args):
    if args.scenario:
        config = load_scenario(args.scenario)
    elif args.small:
        config = small_scenario()
    else:
        config = default_scenario()
    overrides = dict(kv.split("=", 1) for kv in args.set)
    if overrides:
        config = apply_overrides(config, overrides)
    direct = {
        "mobility_alpha": args.alpha,
        "recursion_beta": args.beta,
        "aoa_error_std_deg": args.sigma_est,
        "quantizer_depth": args.nq,
        "d_rank": args.rank,
        "monte_carlo_trials": args.trials,
        "slow_time_steps": args.steps,
        "rng_seed": args.seed,
    }
    direct = {k: v for k, v in direct.items() if v is not None}
    if direct:
        config = replace(config, **direct)
    return config


def _build_options(args, config) -> runner.RunOptions:
    group = args.group - 1
    if not (0 <= group < config.num_groups):
        raise ScenarioError(f"--group {args.group} out of range "
                            f"(scenario has {config.num_groups} groups)")
    return runner.RunOptions(
        group=group,
        methods=tuple(m.strip() for m in args.methods.split(",") if m.strip()),
        mc_draws=args.mc_draws,
        with_nmse=args.with_nmse,
        t_len=args.t_len,
        npl_complexity=args.npl_complexity,
        burn_in=args.burn_in,
    )


def _write_summary(rows, args) -> None:
    if args.summary_out:
        summary = runner.summarize(rows, burn_in=args.burn_in)
        runner.emit_csv(summary, args.summary_out,
                        columns=runner.SUMMARY_COLUMNS,
                        schema=runner.SUMMARY_SCHEMA)


def cmd_run(args) -> int:
    config = _build_config(args)
    options = _build_options(args, config)
    rows = runner.run_slow_time(config, options)
    runner.emit_csv(rows, args.out)
    _write_summary(rows, args)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_sweep(args) -> int:
    config = _build_config(args)
    options = _build_options(args, config)
    axes = {}
    for spec in args.axis:
        name, _, values = spec.partition("=")
        if not values:
            raise ScenarioError(f"--axis needs name=v1,v2,..., got '{spec}'")
        parsed = []
        for v in values.split(","):
            try:
                parsed.append(int(v))
            except ValueError:
                parsed.append(float(v))
        axes[name.strip()] = parsed
    rows = runner.sweep(config, axes, options)
    runner.emit_csv(rows, args.out)
    _write_summary(rows, args)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_pattern(args) -> int:
    config = _build_config(args)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    rows = runner.pattern_rows(config, methods, group=args.group - 1,
                               step_deg=args.grid_step)
    runner.emit_csv(rows, args.out,
                    columns=["method", "column", "phi_deg", "gain"],
                    schema=runner.PATTERN_SCHEMA)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_spread(args) -> int:
    config = _build_config(args)
    sig = [float(v) for v in args.sigma_e.split(",")]
    rows = runner.spread_rows(config, sig, beta=args.beta)
    runner.emit_csv(rows, args.out,
                    columns=["figure_id", "curve_id", "x", "y"],
                    schema=runner.SERIES_SCHEMA)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slowbeam",
        description="Slow-time adaptive analog beamforming simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="slow-time simulation")
    _add_common(p_run)
    p_run.add_argument("--out", default="results.csv")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="parameter sweep")
    _add_common(p_sweep)
    p_sweep.add_argument("--axis", action="append", default=[],
                         metavar="NAME=V1,V2,...",
                         help="sweep axis (repeatable; axes cross-multiply); "
                              "names: alpha, beta, sigma-est, nq, rank, snr, "
                              "t, seed, trials, steps, noise-power")
    p_sweep.add_argument("--out", default="sweep.csv")
    p_sweep.set_defaults(func=cmd_sweep)

    p_pat = sub.add_parser("pattern", help="beam-pattern CSV export")
    _add_common(p_pat)
    p_pat.add_argument("--out", default="pattern.csv")
    p_pat.add_argument("--grid-step", type=float, default=0.25,
                       help="azimuth grid step in degrees")
    p_pat.set_defaults(func=cmd_pattern)

    p_spr = sub.add_parser("spread", help="filtered-covariance beamspace "
                                          "profiles")
    _add_common(p_spr)
    p_spr.add_argument("--sigma-e", default="0.5,1,2",
                       help="comma list of phase-domain error stds (degrees)")
    p_spr.add_argument("--out", default="spread.csv")
    p_spr.set_defaults(func=cmd_spread)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
