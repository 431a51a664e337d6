#!/usr/bin/env python3
"""Train and evaluate the ablation grid, caching one JSON result per run.

    python scripts/run_ablation.py --suite components --epochs 20
    python scripts/run_ablation.py --suite steps
"""
import argparse
import json
import logging
import sys

from realmotion.ablation import AblationRun, component_runs, depth_runs, gradient_step_runs, run_cached

SUITES = {
    "core": lambda b: {k: v for k, v in component_runs(b).items() if k in ("realmotion-i", "continuous", "full")},
    "components": component_runs,
    "steps": gradient_step_runs,
    "depth": depth_runs,
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--suite", choices=sorted(SUITES), nargs="+", default=["core", "steps"])
    ap.add_argument("--cache", default="results/ablation")
    ap.add_argument("--n-train", type=int, default=AblationRun.n_train)
    ap.add_argument("--n-val", type=int, default=AblationRun.n_val)
    ap.add_argument("--epochs", type=int, default=AblationRun.epochs)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--refresh", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    base = AblationRun(n_train=args.n_train, n_val=args.n_val, epochs=args.epochs, seed=args.seed)
    for suite in args.suite:
        for label, run in SUITES[suite](base).items():
            res = run_cached(run, args.cache, refresh=args.refresh)
            m = res["metrics"]
            print(json.dumps({"suite": suite, "label": label, "key": res["key"], "minFDE_6": m["minFDE_6"],
                              "minADE_6": m["minADE_6"], "minFDE_1": m["minFDE_1"],
                              "seconds": round(res["seconds"], 1)}), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
