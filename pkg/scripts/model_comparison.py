"""Forest vs linear baseline under repeated 80/20 holdout on the synthetic dataset."""

import argparse
import json
from dataclasses import asdict, dataclass

from meshqoe.dataset import default_synthetic_dataset, load_dataset
from meshqoe.evalstats import evaluate
from meshqoe.forest import TrainConfig


@dataclass
class Experiment:
    data: str | None = None  # CSV path; synthetic when unset
    seed: int = 0
    noise_sigma: float = 0.2
    n_runs: int = 10
    n_trees: int = 100
    m_try: int = 2
    jobs: int = 1


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    for name, value in asdict(Experiment()).items():
        ap.add_argument(f"--{name.replace('_', '-')}", type=type(value) if value is not None else str, default=value)
    exp = Experiment(**vars(ap.parse_args()))

    ds = load_dataset(exp.data) if exp.data else default_synthetic_dataset(exp.seed, exp.noise_sigma)
    cfg = TrainConfig(n_trees=exp.n_trees, m_try=exp.m_try, seed=exp.seed)
    reports = {kind: evaluate(ds, kind, cfg, n_runs=exp.n_runs, seed=exp.seed, n_jobs=exp.jobs)
               for kind in ("linear", "forest")}

    print(f"{'model':<8} {'RMSE':>7} {'PLCC':>7} {'SROCC':>7} {'KROCC':>7}")
    for kind, r in reports.items():
        print(f"{kind:<8} {r.rmse:7.4f} {r.plcc:7.4f} {r.srocc:7.4f} {r.krocc:7.4f}")
    print(json.dumps({"experiment": asdict(exp), **{k: r.to_dict() for k, r in reports.items()}}, indent=2))


if __name__ == "__main__":
    main()
