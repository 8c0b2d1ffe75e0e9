"""Exhaustive DE threshold sweep over admissible (alpha0, S) and a unimodality report.

    python scripts/sweep_surface.py --out results/sweep_dvbt2_half.json
"""

import argparse
import json
import sys
import time

import numpy as np

from gsvs_ldpc.code import DegreeDistributions, dvbt2_short_half_profile, ira_degree_distributions
from gsvs_ldpc.optimize import OptimizeConfig, sweep_surface


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ensemble", default="dvbt2-half", help="dvbt2-half or regular:<dv>,<dc>")
    ap.add_argument("--mod", default="bpsk")
    ap.add_argument("--target-ber", type=float, default=1e-6)
    ap.add_argument("--max-iter", type=int, default=40)
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)

    if args.ensemble == "dvbt2-half":
        dists = ira_degree_distributions(*dvbt2_short_half_profile())
    else:
        dv, dc = map(int, args.ensemble.split(":")[1].split(","))
        dists = DegreeDistributions.from_node_counts({dv: 1}, {dc: 1})
    cfg = OptimizeConfig(modulation=args.mod, target_ber=args.target_ber, max_iter=args.max_iter)
    t0 = time.time()

    def progress(done, total):
        if done % 40 == 0:
            print(f"{done}/{total}  {time.time() - t0:.0f}s", file=sys.stderr, flush=True)

    surf = sweep_surface(dists, cfg, progress=progress)
    minima = surf.local_minima()
    print(f"global min {surf.cost.min():.2f} dB at {surf.argmins()}")
    print(f"{len(minima)} local-minimum plateau(s):")
    for p in minima:
        i, j = p[0]
        print(f"  cost {surf.cost[i, j]:.2f} dB, {len(p)} cell(s), e.g. alpha0={surf.alpha0[i]} S={surf.steps[j]}")
    with open(args.out, "w") as fh:
        json.dump({"ensemble": args.ensemble, "modulation": args.mod, "target_ber": args.target_ber,
                   "max_iter": args.max_iter, "alpha0": surf.alpha0.tolist(), "steps": surf.steps.tolist(),
                   "cost": np.where(np.isfinite(surf.cost), surf.cost, None).tolist()}, fh, indent=1)


if __name__ == "__main__":
    main()
