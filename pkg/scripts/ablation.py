"""Train every algorithm x selection configuration over several seeds, then analyze.

    python3 scripts/ablation.py --config configs/desk.json --out results/desk
"""

import argparse
import time
from pathlib import Path

from matpg.cli import (
    ALGOS,
    SELECTIONS,
    analyze,
    directional_claims,
    discover,
    resolve_specs,
    tasks_label,
    train_one,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", default="configs/desk.json")
    parser.add_argument("--out", default="results/desk")
    parser.add_argument("--seeds", help="comma-separated seeds (default: from the config)")
    parser.add_argument("--algos", default=",".join(ALGOS))
    parser.add_argument("--selections", default=",".join(SELECTIONS))
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()
    out = Path(args.out)

    tasks = None
    for algo in args.algos.split(","):
        for selection in args.selections.split(","):
            ns = argparse.Namespace(config=args.config, algo=algo, selection=selection, tasks=None,
                                    seed=None, seeds=args.seeds, generations=None, agents=None,
                                    workers=args.workers)
            for spec in resolve_specs(ns):
                start = time.perf_counter()
                run_dir = train_one(spec, out)
                tasks = tasks_label(spec.tasks)
                print(f"{run_dir}  {time.perf_counter() - start:.1f}s", flush=True)

    text, _ = analyze(out)
    print(text)
    claims = directional_claims(discover(out), tasks)
    print("## Directional claims")
    for seed, (a, b) in claims.combined.items():
        print(f"seed {seed}: matpg_lexicase {a:.3f} vs maple_tournament {b:.3f}")
    print(f"matpg_lexicase >= maple_tournament in {claims.wins}/{len(claims.seeds)} seeds")
    for name, (a, b) in claims.task_medians.items():
        print(f"{name}: lexicase {a:.3f} vs tournament {b:.3f}")
    print(f"lexicase strictly better on {claims.dominated}/{len(claims.task_medians)} tasks")


if __name__ == "__main__":
    main()
