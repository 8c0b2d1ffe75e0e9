"""Desk-scale WER / iteration ordering of DE-optimized schedules on the surrogate DVB-T2 short rate-1/2 code.

Each scaled family gets its own best point from a cached DE surface (see sweep_surface.py):
GSVS from the optimizer, SVS from the alpha0 = 0.5 row, constant scaling from the longest-step column.

    python scripts/ordering_check.py --surface results/sweep_dvbt2_half_1e-4.json --ebn0 1.1 --words 500
"""

import argparse
import json
import sys

import numpy as np

from gsvs_ldpc.code import dvbt2_short_half_profile, ira_degree_distributions
from gsvs_ldpc.harness import SimConfig, Simulator
from gsvs_ldpc.optimize import OptimizeConfig, optimize_schedule


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--surface", required=True, help="JSON written by sweep_surface.py")
    ap.add_argument("--ebn0", type=float, default=1.1)
    ap.add_argument("--words", type=int, default=500)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--workers", type=int)
    args = ap.parse_args(argv)

    data = json.loads(open(args.surface).read())
    alpha0 = data["alpha0"]
    cost = np.array([[np.inf if v is None else v for v in row] for row in data["cost"]])
    steps = data["steps"]
    opt = optimize_schedule(ira_degree_distributions(*dvbt2_short_half_profile()),
                            OptimizeConfig(target_ber=data["target_ber"], max_iter=data["max_iter"]))
    decoders = {
        "gsvs_opt": f"gsvs:{opt.alpha0},{opt.step}",
        "svs_opt": f"svs:{steps[int(np.argmin(cost[alpha0.index(0.5)]))]}",
        "const_opt": f"const:{alpha0[int(np.argmin(cost[:, -1]))]}",
        "minsum": "none",
        "2d": "2d",
    }
    cfg = SimConfig(code="dvbt2-half:1,1", decoders=decoders, min_word_errors=10**9, max_words=args.words,
                    seed=args.seed, workers=args.workers, batch=50)
    sim = Simulator(cfg)
    pts = {}
    for name, sched in decoders.items():
        p = pts[name] = sim.run_point(name, args.ebn0)
        lo, hi = p.wer_interval()
        print(f"{name:10s} {sched:20s} WER {p.wer:.3f} [{lo:.3f},{hi:.3f}]  avg it {p.avg_iterations:.2f}", flush=True)

    g_hi = pts["gsvs_opt"].wer_interval()[1]
    ok = all(g_hi < pts[o].wer_interval()[0] for o in ("svs_opt", "const_opt"))
    ok &= pts["gsvs_opt"].avg_iterations == min(p.avg_iterations for p in pts.values())
    print("ordering holds" if ok else "ordering not established")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
