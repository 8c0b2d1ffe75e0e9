"""Compare the DE threshold of plain min-sum with the Monte-Carlo BER crossing of a long regular code.

    python scripts/de_vs_mc.py --n 10000 --points 1.8 1.9 2.0 2.1 2.2 --out results/de_vs_mc.csv
"""

import argparse
import csv
import sys

from gsvs_ldpc.code import DegreeDistributions
from gsvs_ldpc.de import threshold_search
from gsvs_ldpc.decoder import parse_schedule
from gsvs_ldpc.harness import CSV_COLUMNS, SimConfig, Simulator, ber_crossing


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10000)
    ap.add_argument("--dv", type=int, default=3)
    ap.add_argument("--dc", type=int, default=6)
    ap.add_argument("--schedule", default="none")
    ap.add_argument("--points", type=float, nargs="+", default=[1.8, 1.9, 1.95, 2.0, 2.05, 2.1, 2.2])
    ap.add_argument("--target-ber", type=float, default=1e-4)
    ap.add_argument("--min-word-errors", type=int, default=60)
    ap.add_argument("--max-words", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=4)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out", help="CSV of the Monte-Carlo points")
    args = ap.parse_args(argv)

    dists = DegreeDistributions.from_node_counts({args.dv: 1}, {args.dc: 1})
    rule, schedule = parse_schedule(args.schedule)
    if rule == "spa":
        ap.error("density evolution covers min-sum decoders only")
    de = threshold_search(dists, "bpsk", schedule)
    print(f"DE threshold ({args.dv},{args.dc}) {args.schedule}: {de.ebn0_min_db:.2f} dB", flush=True)

    cfg = SimConfig(code=f"regular:{args.n},{args.dv},{args.dc},1", decoders={args.schedule: args.schedule},
                    min_word_errors=args.min_word_errors, max_words=args.max_words, seed=args.seed,
                    workers=args.workers, batch=50)
    sim = Simulator(cfg)
    points = []
    for e in sorted(args.points):
        p = sim.run_point(args.schedule, e)
        points.append(p)
        print(f"{e:.2f} dB  words {p.words}  WER {p.wer:.3e}  BER {p.ber:.3e}  it {p.avg_iterations:.2f}",
              file=sys.stderr, flush=True)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for p in points:
                w.writerow(p.csv_row())
    try:
        crossing = ber_crossing(points, args.target_ber)
    except ValueError as exc:
        print(f"no crossing: {exc}")
        return 1
    print(f"Monte-Carlo BER={args.target_ber:g} at {crossing:.3f} dB, gap {crossing - de.ebn0_min_db:+.3f} dB")
    return 0


if __name__ == "__main__":
    sys.exit(main())
