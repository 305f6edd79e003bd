"""Knowledge on/off in the name domain across a sweep of snippet corruption rates.

    python3 scripts/ablation.py --n 500 --rates 0,0.1,0.3,0.5
"""
import argparse
import dataclasses

from sstod.config import load_domain
from sstod.evalgen import eval_online


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rates", default="0,0.1,0.3,0.5")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    spec = load_domain("name")
    print(f"{'corruption':>10} {'succ on':>8} {'succ off':>8} {'turns on':>8} {'turns off':>9}")
    for rate in map(float, args.rates.split(",")):
        noise = spec.noise.with_overrides(knowledge_corruption_prob=rate)
        on, off = (eval_online(dataclasses.replace(spec.agent, knowledge_enabled=k), spec, args.n,
                               seed=args.seed, noise=noise, workers=args.workers) for k in (True, False))
        fmt = lambda v: "-" if v is None else f"{v:.2f}"
        print(f"{rate:10.2f} {on.dialog_succ:8.3f} {off.dialog_succ:8.3f} {fmt(on.avg_turn):>8} {fmt(off.avg_turn):>9}")


if __name__ == "__main__":
    main()
