"""Tree-count comparison on Friedman data with the default settings.

Usage: python scripts/run_friedman_study.py [--out results/study] [--parallel]
"""

import argparse
import json

from bartviz.study import StudyConfig, run_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/study")
    ap.add_argument("--parallel", action="store_true")
    ap.add_argument("--iters", type=int, default=1000)
    ap.add_argument("--burnin", type=int, default=100)
    args = ap.parse_args()
    cfg = StudyConfig(total_iters=args.iters, burn_in=args.burnin, parallel=args.parallel)
    summary = run_study(args.out, cfg)
    for name in ("signal_ranking", "agnostic_ranking", "tree_count_effect"):
        check = summary["checks"][name]
        counts = {k: v for k, v in check.items() if k.endswith("_seeds")}
        print(f"{name:18s} {'PASS' if check['pass'] else 'FAIL'}  {json.dumps(counts)}")
    print(f"grid: {args.out}/{summary['grid_svg']}  total {summary['total_seconds']:.0f}s")


if __name__ == "__main__":
    main()
