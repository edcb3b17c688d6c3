"""Budget sweep of bb / greedy / equal on the builtin meshes with a synthetic-trained forest."""

import argparse
from dataclasses import dataclass

from meshqoe.bench import BenchConfig, run_bench
from meshqoe.dataset import builtin_meshes_with_synthetic_si, default_synthetic_dataset
from meshqoe.forest import Forest, TrainConfig, train_forest


@dataclass
class Experiment:
    model: str | None = None  # saved forest JSON; trained on the synthetic data when unset
    seed: int = 0
    runs: int = 10
    start: int = 25_000
    stop: int = 300_000
    step: int = 25_000
    jobs: int = 1
    csv: str | None = None


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--start", type=int, default=25_000)
    ap.add_argument("--stop", type=int, default=300_000)
    ap.add_argument("--step", type=int, default=25_000)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--csv")
    exp = Experiment(**vars(ap.parse_args()))

    if exp.model:
        forest = Forest.load(exp.model)
    else:
        X, y = default_synthetic_dataset(exp.seed).arrays()
        forest = train_forest(X, y, TrainConfig(seed=exp.seed), n_jobs=exp.jobs)
    cfg = BenchConfig(budgets=tuple(range(exp.start, exp.stop + 1, exp.step)), n_runs=exp.runs, seed=exp.seed)
    report = run_bench(builtin_meshes_with_synthetic_si(), forest, cfg, n_jobs=exp.jobs)
    print(report.table())
    if exp.csv:
        with open(exp.csv, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())


if __name__ == "__main__":
    main()
