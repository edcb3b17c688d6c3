"""Command-line entry point: ``meshqoe <command> ...``.

Exit status is 0 on success, 1 on bad input or usage, 2 when a budget is infeasible.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .allocator import SOLVERS, AllocationInstance, InfeasibleError
from .bench import BenchConfig, run_bench
from .dataset import (DISTANCE_POOL, MeshDescriptor, builtin_meshes_with_synthetic_si,
                      dataset_to_csv, generate_synthetic, load_dataset)
from .evalstats import evaluate
from .features import FeatureVector, read_pgm, spatial_information
from .forest import Forest, TrainConfig, train_forest
from .geometry import all_metrics, read_xyz

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE = 0, 1, 2

METRICS_HELP = """\
Metrics over vertex sets (nearest neighbours by brute force):
  hausdorff  max of the two directed max-min Euclidean distances
  rmse       sqrt of the average of the two directed mean squared NN distances
  chamfer    sum of the two directed mean squared NN distances (squared convention)
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _budgets(text: str) -> tuple[int, ...]:
    parts = text.split(":")
    if len(parts) == 3:
        a, b, step = (int(p) for p in parts)
        if step <= 0:
            raise argparse.ArgumentTypeError("step must be positive")
        return tuple(range(a, b + 1, step))
    return tuple(int(v) for v in text.split(","))


def _train_config(args) -> TrainConfig:
    return TrainConfig(n_trees=args.n_trees, m_try=args.m_try, bootstrap=not args.no_bootstrap,
                       min_samples_leaf=args.min_samples_leaf, max_depth=args.max_depth, seed=args.seed)


def _add_forest_args(p):
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--m-try", type=int, default=2)
    p.add_argument("--no-bootstrap", action="store_true")
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")


def _load_meshes(path: str | None) -> list[MeshDescriptor]:
    if path is None:
        return builtin_meshes_with_synthetic_si()
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [MeshDescriptor.from_dict(m) for m in doc["meshes"]]


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_si(args) -> int:
    frames = [read_pgm(p) for p in args.frames]
    print(repr(spatial_information(frames, args.mode)))
    return EXIT_OK


def cmd_gen_data(args) -> int:
    meshes = _load_meshes(args.meshes)
    ds = generate_synthetic(meshes, args.distances, args.seed, args.noise_sigma)
    _write(dataset_to_csv(ds), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    X, y = load_dataset(args.data).arrays()
    forest = train_forest(X, y, _train_config(args), n_jobs=args.jobs)
    forest.save(args.out)
    names = ("faces", "distance", "lod", "si_geo", "si_col")
    print(json.dumps({"trees": forest.n_trees, "importances": dict(zip(names, forest.importances.tolist())),
                      "oob_rmse": forest.oob_rmse(X, y)}))
    return EXIT_OK


def cmd_eval(args) -> int:
    ds = load_dataset(args.data)
    report = evaluate(ds, args.model, _train_config(args), n_runs=args.runs, split=args.split,
                      seed=args.seed, n_jobs=args.jobs)
    text = json.dumps(report.to_dict(), indent=2) + "\n"
    print(report.table())
    _write(text, args.out)
    return EXIT_OK


def cmd_predict(args) -> int:
    forest = Forest.load(args.model)
    x = FeatureVector(args.faces, args.distance, args.lod, args.si_geo, args.si_col)
    print(repr(float(forest.predict(x.as_array())[0])))
    return EXIT_OK


def cmd_allocate(args) -> int:
    doc = json.loads(Path(args.instance).read_text(encoding="utf-8"))
    instance = AllocationInstance.from_dict(doc)
    result = SOLVERS[args.method](instance)
    _write(json.dumps(result.to_dict(), indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    meshes = _load_meshes(args.meshes)
    forest = Forest.load(args.model)
    config = BenchConfig(budgets=args.budgets, n_runs=args.runs, distance_pool=args.distances,
                         seed=args.seed, methods=tuple(args.methods.split(",")))
    report = run_bench(meshes, forest, config, n_jobs=args.jobs)
    _write(report.to_csv(), args.csv)
    if args.json:
        _write(report.to_json(), args.json)
    if args.dump_runs:
        with open(args.dump_runs, "w", encoding="utf-8") as fh:
            for rec in report.runs:
                fh.write(json.dumps(rec) + "\n")
    if args.table:
        print(report.table(), file=sys.stderr)
    return EXIT_OK


def cmd_metrics(args) -> int:
    print(json.dumps(all_metrics(read_xyz(args.a), read_xyz(args.b))))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="meshqoe", description="QoE prediction and LoD allocation for dynamic 3D meshes")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("si", help="spatial information of grayscale PGM (P5) frames")
    p.add_argument("frames", nargs="+")
    p.add_argument("--mode", choices=("max", "first"), default="max")
    p.set_defaults(func=cmd_si)

    p = sub.add_parser("gen-data", help="write a synthetic MOS dataset as CSV")
    p.add_argument("--out", "-o")
    p.add_argument("--meshes", help="mesh JSON {meshes: [{id, faces[9], si_geo, si_col}]}; default builtin")
    p.add_argument("--distances", type=_floats, default=DISTANCE_POOL)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sigma", type=float, default=0.2)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a random forest on a dataset CSV")
    p.add_argument("data")
    p.add_argument("--out", "-o", required=True)
    _add_forest_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="repeated 80/20 holdout evaluation")
    p.add_argument("data")
    p.add_argument("--model", choices=("forest", "linear"), default="forest")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--out", "-o", help="JSON report path (default: stdout after the table)")
    _add_forest_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict MOS for one feature vector")
    p.add_argument("--model", required=True)
    p.add_argument("--faces", type=int, required=True)
    p.add_argument("--distance", type=float, required=True)
    p.add_argument("--lod", type=float, required=True, help="fraction of faces removed, 0..1")
    p.add_argument("--si-geo", type=float, required=True)
    p.add_argument("--si-col", type=float, required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("allocate", help="solve an allocation instance JSON")
    p.add_argument("instance")
    p.add_argument("--method", choices=tuple(SOLVERS), default="bb")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("bench", help="budget sweep of bb / greedy / equal")
    p.add_argument("--model", required=True)
    p.add_argument("--meshes")
    p.add_argument("--budgets", type=_budgets, default=BenchConfig.budgets, help="a:b:step or a,b,c")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--methods", default="bb,greedy,equal")
    p.add_argument("--distances", type=_floats, default=DISTANCE_POOL)
    p.add_argument("--csv", help="CSV report path (default: stdout)")
    p.add_argument("--json", help="JSON report path")
    p.add_argument("--dump-runs", help="per-run JSON lines trace")
    p.add_argument("--table", action="store_true", help="also print a table to stderr")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("metrics", help="HD / RMSE / Chamfer between two XYZ files",
                       description=METRICS_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
