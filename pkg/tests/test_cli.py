import json

import numpy as np
import pytest

from meshqoe.allocator import AllocationInstance, MeshOptions, Option
from meshqoe.cli import main
from meshqoe.features import GrayImage, write_pgm
from meshqoe.forest import constant_forest


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """gen-data then a small forest, shared by the slower tests."""
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--out", str(d / "data.csv"), "--seed", "1"]) == 0
    assert main(["train", str(d / "data.csv"), "--out", str(d / "model.json"), "--n-trees", "8"]) == 0
    return d


def test_gen_data_is_byte_identical(tmp_path, pipeline):
    main(["gen-data", "--out", str(tmp_path / "again.csv"), "--seed", "1"])
    assert (tmp_path / "again.csv").read_bytes() == (pipeline / "data.csv").read_bytes()
    assert len((pipeline / "data.csv").read_text().splitlines()) == 321


def test_train_is_deterministic(tmp_path, pipeline, capsys):
    code, out, _ = run(capsys, "train", pipeline / "data.csv", "--out", tmp_path / "m.json", "--n-trees", 8,
                       "--jobs", 2)
    assert code == 0
    assert (tmp_path / "m.json").read_bytes() == (pipeline / "model.json").read_bytes()
    summary = json.loads(out)
    assert summary["trees"] == 8 and abs(sum(summary["importances"].values()) - 1) <= 1e-9


def test_eval_report(tmp_path, pipeline, capsys):
    args = ["eval", pipeline / "data.csv", "--model", "linear", "--runs", 3]
    code, out, _ = run(capsys, *args, "--out", tmp_path / "a.json")
    assert code == 0 and "RMSE" in out.upper()
    run(capsys, *args, "--out", tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    rep = json.loads((tmp_path / "a.json").read_text())
    assert rep["n_runs"] == 3 and len(rep["per_run"]) == 3


def test_predict_one_leaf(tmp_path, capsys):
    constant_forest(4.2).save(tmp_path / "leaf.json")
    code, out, _ = run(capsys, "predict", "--model", tmp_path / "leaf.json", "--faces", 1000, "--distance", 8,
                       "--lod", 0.5, "--si-geo", 10, "--si-col", 20)
    assert code == 0 and out.strip() == "4.2"


def test_predict_rejects_bad_lod(tmp_path, capsys):
    constant_forest(4.2).save(tmp_path / "leaf.json")
    code, _, err = run(capsys, "predict", "--model", tmp_path / "leaf.json", "--faces", 1000, "--distance", 8,
                       "--lod", 1.5, "--si-geo", 10, "--si-col", 20)
    assert code == 1 and err


def _instance(tmp_path, budget):
    inst = AllocationInstance((MeshOptions("A", (Option(1, 100, 5.0), Option(2, 50, 3.0))),), budget)
    p = tmp_path / "inst.json"
    p.write_text(json.dumps(inst.to_dict()))
    return p


@pytest.mark.parametrize("method", ["bb", "greedy", "equal", "exhaustive"])
def test_allocate(tmp_path, capsys, method):
    code, out, _ = run(capsys, "allocate", _instance(tmp_path, 60), "--method", method)
    assert code == 0
    doc = json.loads(out)
    assert doc["total_qoe"] == 3.0 and doc["chosen"] == {"A": 2}


def test_allocate_infeasible_exit_code(tmp_path, capsys):
    code, _, err = run(capsys, "allocate", _instance(tmp_path, 40))
    assert code == 2 and "50" in err


def test_usage_errors(tmp_path, capsys):
    assert run(capsys)[0] == 1
    assert run(capsys, "allocate")[0] == 1
    assert run(capsys, "allocate", tmp_path / "missing.json")[0] == 1
    assert run(capsys, "bench", "--model", "m.json", "--budgets", "5:1:0")[0] == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "allocate", bad)[0] == 1


def test_bench_twice_identical(tmp_path, pipeline, capsys):
    args = ["bench", "--model", pipeline / "model.json", "--budgets", "25000:100000:25000", "--runs", 3]
    run(capsys, *args, "--csv", tmp_path / "a.csv", "--dump-runs", tmp_path / "runs.jsonl")
    run(capsys, *args, "--csv", tmp_path / "b.csv", "--jobs", 2, "--json", tmp_path / "b.json")

    def strip_time(p):
        lines = [ln.split(",") for ln in p.read_text().splitlines()]
        col = lines[0].index("mean_time_us")
        return [ln[:col] + ln[col + 1:] for ln in lines]

    assert strip_time(tmp_path / "a.csv") == strip_time(tmp_path / "b.csv")
    rows = json.loads((tmp_path / "b.json").read_text())["rows"]
    assert rows[0]["infeasible"] and rows[0]["budget"] == 25_000

    runs = [json.loads(ln) for ln in (tmp_path / "runs.jsonl").read_text().splitlines()]
    for row in rows:
        ok = [r["total_qoe"] for r in runs
              if r["budget"] == row["budget"] and r["method"] == row["method"] and r["feasible"]]
        if ok:
            assert row["mean_qoe"] == pytest.approx(np.mean(ok), abs=1e-12)


def test_si(tmp_path, capsys):
    px = np.zeros((8, 8))
    px[:, 4:] = 255
    write_pgm(GrayImage.from_array(px), tmp_path / "edge.pgm")
    write_pgm(GrayImage.from_array(np.full((8, 8), 9.0)), tmp_path / "flat.pgm")
    code, out, _ = run(capsys, "si", tmp_path / "flat.pgm", tmp_path / "edge.pgm")
    assert code == 0 and float(out) == pytest.approx(1020 * np.sqrt(2 / 9), abs=1e-9)
    assert float(run(capsys, "si", tmp_path / "flat.pgm", tmp_path / "edge.pgm", "--mode", "first")[1]) == 0.0


def test_metrics(tmp_path, capsys):
    (tmp_path / "a.xyz").write_text("0 0 0\n")
    (tmp_path / "b.xyz").write_text("3 4 0\n")
    code, out, _ = run(capsys, "metrics", tmp_path / "a.xyz", tmp_path / "b.xyz")
    assert code == 0
    assert json.loads(out) == {"hausdorff": 5.0, "rmse": 5.0, "chamfer": 50.0}
