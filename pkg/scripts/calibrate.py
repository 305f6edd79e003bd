"""Generate corpora per domain and compare their statistics with the reference targets.

    python3 scripts/calibrate.py --n 10000 --workers 4
"""
import argparse
import json
import time

from sstod.config import load_domain
from sstod.core import DOMAINS
from sstod.evalgen import corpus_stats, generate_corpus

TARGETS = {"phone": (2.90, 13.01), "id": (4.15, 16.86), "name": (2.84, 9.86), "plate": (2.03, 13.90)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--domains", default=",".join(DOMAINS))
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--json", help="write all rows here")
    args = ap.parse_args()

    rows = []
    print(f"{'domain':7} {'sub-slots':>16} {'turns':>16} {'paths':>6} {'succ':>6} {'secs':>6}")
    for d in args.domains.split(","):
        t = time.perf_counter()
        s = corpus_stats(generate_corpus(load_domain(d), n=args.n, seed=args.seed, workers=args.workers))
        segs, turns = TARGETS[d]
        row = dict(domain=d, **s.to_dict(), target_subslots=segs, target_turns=turns,
                   seconds=round(time.perf_counter() - t, 1))
        rows.append(row)
        print(f"{d:7} {s.avg_subslots:7.2f} ({segs:5.2f}) {s.avg_turns:7.2f} ({turns:5.2f}) "
              f"{s.distinct_paths:6d} {s.success_rate:6.3f} {row['seconds']:6.1f}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
