"""Command line: ``simulate``, ``threshold`` and ``optimize``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys

from .code import DegreeDistributions, build_encoder, degree_distributions, dvbt2_short_half_profile, ira_degree_distributions
from .de import DEFAULT_MAX_ITER, DEFAULT_TARGET_BER, ThresholdNotFound, threshold_search
from .decoder import GSVS, SVS, Constant, parse_schedule
from .harness import ConfigError, Simulator, load_code, read_config
from .optimize import OptimizeConfig, optimize_schedule

log = logging.getLogger("gsvs_ldpc")


def _ensemble(args) -> tuple[DegreeDistributions, float | None]:
    """Degree distributions and rate from --alist or --ensemble."""
    if args.alist:
        H = load_code(args.alist)
        enc = build_encoder(H)
        log.info("n=%d m=%d rank=%d nominal rate %.4f effective rate %.4f",
                 H.n, H.m, enc.rank, H.k_nominal / H.n, enc.k / H.n)
        return degree_distributions(H), enc.k / H.n
    spec = args.ensemble
    if spec == "dvbt2-half":
        return ira_degree_distributions(*dvbt2_short_half_profile()), None
    if spec.startswith("regular:"):
        dv, dc = (int(x) for x in spec.split(":", 1)[1].split(","))
        return DegreeDistributions.from_node_counts({dv: 1}, {dc: 1}), None
    raise ConfigError(f"unknown ensemble {spec!r} (dvbt2-half or regular:<dv>,<dc>)")


def _add_ensemble_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--alist", help="parity-check matrix in alist format")
    g.add_argument("--ensemble", help="dvbt2-half | regular:<dv>,<dc>")
    p.add_argument("--mod", default="bpsk", help="bpsk | qam16 | qam64 | qam256")
    p.add_argument("--target-ber", type=float, default=DEFAULT_TARGET_BER)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)


def cmd_simulate(args) -> int:
    cfg = read_config(args.config)
    if args.fail_iters:
        cfg.fail_iters = args.fail_iters
    sim = Simulator(cfg)
    if args.out == "-":
        sim.run_curve(sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            sim.run_curve(fh)
    return 0


def cmd_threshold(args) -> int:
    dists, rate = _ensemble(args)
    rule, schedule = parse_schedule(args.schedule)
    if rule == "spa":
        raise ConfigError("density evolution covers min-sum decoders only")
    res = threshold_search(dists, args.mod, schedule, args.target_ber, args.max_iter, rate=rate)
    alpha0 = step = ""
    if isinstance(schedule, GSVS):
        alpha0, step = schedule.alpha0, schedule.step
    elif isinstance(schedule, SVS):
        alpha0, step = 0.5, schedule.step
    elif isinstance(schedule, Constant):
        alpha0 = schedule.value
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["schedule", "alpha0", "S", "modulation", "ebn0_min_db", "iterations"])
    w.writerow([str(schedule), alpha0, step, res.modulation, f"{res.ebn0_min_db:.2f}", res.converged_iteration])
    return 0


def cmd_optimize(args) -> int:
    dists, rate = _ensemble(args)
    cfg = OptimizeConfig(modulation=args.mod, target_ber=args.target_ber, max_iter=args.max_iter, rate=rate,
                         max_evals=args.max_evals, seed=args.seed)
    res = optimize_schedule(dists, cfg)
    out = open(args.log, "w", newline="") if args.log else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["stage", "alpha0", "S", "ebn0_min_db"])
        for row in res.log:
            w.writerow([row["stage"], row["alpha0"], row["S"], row["ebn0_min_db"]])
    finally:
        if out is not sys.stdout:
            out.close()
    print(f"{res.alpha0:g},{res.step},{res.ebn0_min_db:.2f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gsvs-ldpc", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Monte-Carlo WER/BER sweep from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="CSV path, or - for stdout")
    p.add_argument("--fail-iters", choices=["max", "exclude"], help="override the config's averaging rule")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("threshold", help="DE threshold of one schedule")
    _add_ensemble_args(p)
    p.add_argument("--schedule", required=True, help="none | const:<a> | svs:<S> | gsvs:<a0>,<S> | 2d")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("optimize", help="Nelder-Mead search for the best GSVS (alpha0, S)")
    _add_ensemble_args(p)
    p.add_argument("--max-evals", type=int, default=80)
    p.add_argument("--seed", type=int, help="random initial simplex instead of the default one")
    p.add_argument("--log", help="write the evaluation log here instead of stdout")
    p.set_defaults(func=cmd_optimize)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, ThresholdNotFound, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
