"""Baseline-versus-surrogate efficiency study on the coupled channel case.

For each seed the study runs the evolutionary loop twice with identical
settings, once evaluating every candidate and once with surrogate gating,
then compares the hypervolume coverage of the expensive-evaluation Pareto
fronts and the total expensive-evaluation counts.

Usage:
    python3 scripts/efficiency_study.py [--seeds 10] [--generations 12]
        [--population 96] [--offspring 24] [--config path/to/run.json]
"""

import argparse
import dataclasses
import time

import numpy as np

from sagep.metrics import compare_coverage, pareto_front
from sagep.orchestrator import (
    EvaluatorSpec,
    RunConfig,
    load_run_config,
    run_training,
)


def expensive_front(db):
    points = np.array([r.objectives for r in db.records
                       if r.converged and r.provenance == "expensive"])
    return pareto_front(points)


def run_pair(config: RunConfig, seed: int) -> tuple[float, float, int, int]:
    base = dataclasses.replace(config, seed=seed, surrogate_enabled=False)
    surr = dataclasses.replace(config, seed=seed, surrogate_enabled=True)
    db_b, met_b = run_training(base)
    db_s, met_s = run_training(surr)
    cov_b, cov_s = compare_coverage([expensive_front(db_b),
                                     expensive_front(db_s)])
    ratio = cov_s / cov_b if cov_b > 0 else float("nan")
    return ratio, met_s.total_expensive / met_b.total_expensive, \
        met_s.total_expensive, met_b.total_expensive


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=10,
                        help="number of seeds, run as 0..N-1")
    parser.add_argument("--generations", type=int, default=12)
    parser.add_argument("--population", type=int, default=96)
    parser.add_argument("--offspring", type=int, default=24)
    parser.add_argument("--config", default=None,
                        help="run config JSON; overrides the size flags")
    args = parser.parse_args()

    if args.config is not None:
        config = load_run_config(args.config)
    else:
        config = RunConfig(seed=0, generations=args.generations,
                           population=args.population,
                           offspring=args.offspring,
                           surrogate_enabled=True,
                           evaluator=EvaluatorSpec(kind="channel"))

    cov_ratios = []
    eval_ratios = []
    t0 = time.perf_counter()
    print("seed  coverage_ratio  eval_ratio  expensive(surr/base)")
    for seed in range(args.seeds):
        cov, ev_ratio, n_s, n_b = run_pair(config, seed)
        cov_ratios.append(cov)
        eval_ratios.append(ev_ratio)
        print(f"{seed:4d}  {cov:14.4f}  {ev_ratio:10.4f}  {n_s:6d}/{n_b}")
    elapsed = time.perf_counter() - t0

    print(f"median coverage ratio: {np.median(cov_ratios):.4f}")
    print(f"median eval ratio:     {np.median(eval_ratios):.4f}")
    print(f"elapsed: {elapsed:.1f} s")


if __name__ == "__main__":
    main()
