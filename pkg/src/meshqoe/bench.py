"""Budget sweep comparing branch-and-bound against the greedy and equal-share baselines."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .allocator import SOLVERS, InfeasibleError, build_instance
from .dataset import DISTANCE_POOL, MeshDescriptor
from .forest import Forest

CSV_HEADER = ("budget", "method", "mean_qoe", "mean_usage_pct", "mean_time_us", "n_feasible")
TIME_COLUMNS = ("mean_time_us",)


@dataclass(frozen=True)
class BenchConfig:
    budgets: tuple[int, ...] = tuple(range(25_000, 300_001, 25_000))
    n_runs: int = 10
    distance_pool: tuple[float, ...] = DISTANCE_POOL
    seed: int = 0
    methods: tuple[str, ...] = ("bb", "greedy", "equal")

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        object.__setattr__(self, "distance_pool", tuple(float(d) for d in self.distance_pool))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.budgets or any(b <= 0 for b in self.budgets):
            raise ValueError("budgets must be positive")
        if any(a >= b for a, b in zip(self.budgets, self.budgets[1:])):
            raise ValueError("budgets must be strictly ascending")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if not self.distance_pool:
            raise ValueError("distance pool is empty")
        unknown = set(self.methods) - {"bb", "greedy", "equal"}
        if unknown or not self.methods:
            raise ValueError(f"unknown methods {sorted(unknown)}")


@dataclass
class BenchRow:
    budget: int
    method: str
    mean_qoe: float | None
    mean_usage_pct: float | None
    mean_time_us: float | None
    n_feasible: int

    @property
    def infeasible(self) -> bool:
        return self.n_feasible == 0


@dataclass
class BenchReport:
    rows: list[BenchRow]
    runs: list[dict] = field(default_factory=list)

    def row(self, budget: int, method: str) -> BenchRow:
        for r in self.rows:
            if r.budget == budget and r.method == method:
                return r
        raise KeyError((budget, method))

    def to_csv(self, include_time: bool = True) -> str:
        cols = [c for c in CSV_HEADER if include_time or c not in TIME_COLUMNS]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            vals = {
                "budget": r.budget,
                "method": r.method,
                "mean_qoe": "" if r.mean_qoe is None else f"{r.mean_qoe:.6f}",
                "mean_usage_pct": "" if r.mean_usage_pct is None else f"{r.mean_usage_pct:.6f}",
                "mean_time_us": "" if r.mean_time_us is None else f"{r.mean_time_us:.3f}",
                "n_feasible": r.n_feasible,
            }
            w.writerow([vals[c] for c in cols])
        return buf.getvalue()

    def to_json(self, include_time: bool = True) -> str:
        rows = []
        for r in self.rows:
            d = asdict(r)
            d["infeasible"] = r.infeasible
            if not include_time:
                for c in TIME_COLUMNS:
                    d.pop(c)
            rows.append(d)
        return json.dumps({"columns": list(CSV_HEADER), "rows": rows}, indent=2) + "\n"

    def table(self) -> str:
        lines = [f"{'budget':>8} {'method':>7} {'QoE':>8} {'usage %':>8} {'time us':>10} {'n':>3}"]
        for r in self.rows:
            if r.infeasible:
                lines.append(f"{r.budget:>8} {r.method:>7} {'infeasible':>28} {0:>3}")
            else:
                lines.append(f"{r.budget:>8} {r.method:>7} {r.mean_qoe:8.2f} {r.mean_usage_pct:8.2f}"
                             f" {r.mean_time_us:10.1f} {r.n_feasible:>3}")
        return "\n".join(lines)


def sample_distances(meshes: Sequence[MeshDescriptor], config: BenchConfig, run: int) -> dict[str, float]:
    rng = np.random.default_rng([config.seed, run])
    picks = rng.choice(np.array(config.distance_pool), size=len(meshes))
    return {m.id: float(d) for m, d in zip(meshes, picks)}


def _bench_run(args) -> list[dict]:
    meshes, forest, config, run = args
    distances = sample_distances(meshes, config, run)
    base = build_instance(meshes, distances, forest, budget=1)
    out = []
    for budget in config.budgets:
        inst = base.with_budget(budget)
        for method in config.methods:
            rec = {"run": run, "budget": budget, "method": method, "distances": distances}
            try:
                res = SOLVERS[method](inst)
            except InfeasibleError:
                rec.update(feasible=False)
            else:
                rec.update(feasible=True, total_qoe=res.total_qoe, usage_pct=100.0 * res.utilization,
                           time_us=1e6 * res.wall_time, conforming=res.conforming,
                           chosen=res.chosen, nodes_explored=res.nodes_explored)
            out.append(rec)
    return out


def run_bench(meshes: Sequence[MeshDescriptor], forest: Forest, config: BenchConfig = BenchConfig(),
              n_jobs: int = 1) -> BenchReport:
    """Per run, draw each mesh's distance from the pool and solve every (budget, method) cell.

    Infeasible runs are left out of the means and counted in ``n_feasible``.
    """
    jobs = [(list(meshes), forest, config, r) for r in range(config.n_runs)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            per_run = list(pool.map(_bench_run, jobs))
    else:
        per_run = [_bench_run(j) for j in jobs]
    runs = [rec for recs in per_run for rec in recs]
    rows = []
    for budget in config.budgets:
        for method in config.methods:
            ok = [r for r in runs if r["budget"] == budget and r["method"] == method and r["feasible"]]
            if ok:
                rows.append(BenchRow(
                    budget, method,
                    float(np.mean([r["total_qoe"] for r in ok])),
                    float(np.mean([r["usage_pct"] for r in ok])),
                    float(np.mean([r["time_us"] for r in ok])),
                    len(ok),
                ))
            else:
                rows.append(BenchRow(budget, method, None, None, None, 0))
    return BenchReport(rows, runs)
