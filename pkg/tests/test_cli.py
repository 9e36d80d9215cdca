import csv
import hashlib
import json
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from bartviz import analytics as A
from bartviz.cli import main
from bartviz.core import Dataset, IterationDraw, PosteriorEnsemble, TreeDraw, read_dump, write_dump
from bartviz.sampler import SamplerConfig, fit_regression

from conftest import hand_ensemble

GOLDEN = Path(__file__).parent / "golden"
SMALL = ["--trees", "5", "--iters", "30", "--burnin", "10", "--seed", "3"]


def run(*argv):
    return main([str(a) for a in argv])


def sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """simulate -> fit -> analyze -> plot on a small problem."""
    root = tmp_path_factory.mktemp("pipe")
    assert run("simulate", "--n", 40, "--p", 6, "--seed", 5, "--out", root) == 0
    csv_path = root / "friedman.csv"
    assert run("fit", "--data", csv_path, "--out", root / "fit", *SMALL) == 0
    dump = root / "fit" / "trees.jsonl"
    assert run("analyze", "--dump", dump, "--data", csv_path, "--out", root / "tab",
               "--which", "vimp,vint,treetypes,prox,mds,diagnostics,agnostic") == 0
    assert run("plot", "all", "--dump", dump, "--data", csv_path, "--out", root / "fig", "--tag", "g") == 0
    return root


def test_simulate_shape_and_determinism(tmp_path):
    assert run("simulate", "--n", 250, "--p", 10, "--seed", 1, "--out", tmp_path / "a.csv") == 0
    assert run("simulate", "--n", 250, "--p", 10, "--seed", 1, "--out", tmp_path / "b.csv") == 0
    rows = list(csv.reader(open(tmp_path / "a.csv")))
    assert len(rows) == 251 and all(len(r) == 11 for r in rows)
    assert rows[0] == [f"x{i}" for i in range(1, 11)] + ["y"]
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_simulate_n_zero_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run("simulate", "--n", 0, "--out", tmp_path)
    assert exc.value.code == 2


def test_fit_outputs_and_console(tmp_path, capsys):
    run("simulate", "--n", 40, "--p", 6, "--seed", 5, "--out", tmp_path)
    assert run("fit", "--data", tmp_path / "friedman.csv", "--out", tmp_path / "f", *SMALL) == 0
    out = capsys.readouterr().out
    assert "mean acceptance rate" in out and "final sigma" in out and "runtime" in out
    ens = read_dump(tmp_path / "f" / "trees.jsonl")
    assert ens.total_iters == 30 and ens.m == 5
    lines = (tmp_path / "f" / "trees.jsonl").read_text().splitlines()
    assert len(lines) == 1 + 30 * 5
    rep = json.loads((tmp_path / "f" / "fit_report.json").read_text())
    assert len(rep["accept_rate"]) == 30


def test_fit_record_count_default_iterations(tmp_path):
    run("simulate", "--n", 30, "--p", 5, "--seed", 0, "--out", tmp_path)
    assert run("fit", "--data", tmp_path / "friedman.csv", "--out", tmp_path / "f", "--trees", 20) == 0
    lines = (tmp_path / "f" / "trees.jsonl").read_text().splitlines()
    assert len(lines) - 1 == 20 * 1000


def test_classification_on_continuous_y_fails(tmp_path, capsys):
    run("simulate", "--n", 30, "--p", 5, "--out", tmp_path)
    code = run("fit", "--data", tmp_path / "friedman.csv", "--task", "class", "--out", tmp_path / "f", *SMALL)
    assert code == 1
    assert "error in fit" in capsys.readouterr().err


def test_config_precedence(tmp_path):
    run("simulate", "--n", 30, "--p", 5, "--out", tmp_path)
    (tmp_path / "c.json").write_text(json.dumps({"m": 7, "total_iters": 20, "burn_in": 5, "seed": 9}))
    assert run("fit", "--data", tmp_path / "friedman.csv", "--out", tmp_path / "f", "--config",
               tmp_path / "c.json", "--trees", 4) == 0
    ens = read_dump(tmp_path / "f" / "trees.jsonl")
    assert ens.m == 4 and ens.total_iters == 20 and ens.burn_in == 5
    (tmp_path / "bad.json").write_text(json.dumps({"tres": 3}))
    assert run("fit", "--data", tmp_path / "friedman.csv", "--out", tmp_path / "g", "--config",
               tmp_path / "bad.json") == 1


def test_analyze_matches_in_memory(pipeline, tmp_path):
    data = Dataset.from_csv(pipeline / "friedman.csv")
    rep = fit_regression(data, SamplerConfig(m=5, total_iters=30, burn_in=10, seed=3))
    A.write_table(A.inclusion_importance(rep.ensemble).table(), tmp_path / "vimp.csv")
    A.write_table(A.inclusion_interaction(rep.ensemble).table(), tmp_path / "vint.csv")
    for name in ("vimp.csv", "vint.csv"):
        assert (tmp_path / name).read_bytes() == (pipeline / "tab" / name).read_bytes()
    P = np.loadtxt(pipeline / "tab" / "proximity_target.csv", delimiter=",")
    ens = rep.ensemble.with_data(data)
    np.testing.assert_array_equal(P, A.proximity_series(ens).matrix_at(A.target_iteration(ens)))


def test_analyze_hand_dump(tmp_path):
    write_dump(hand_ensemble(), tmp_path / "h.jsonl")
    assert run("analyze", "--dump", tmp_path / "h.jsonl", "--out", tmp_path, "--which", "vimp") == 0
    rows = list(csv.DictReader(open(tmp_path / "vimp.csv")))
    assert [r["variable"] for r in rows] == ["a", "b", "c"]
    assert [float(r["mean"]) for r in rows] == [0.5, 0.25, 0.25]


def test_analyze_needs_data(tmp_path, capsys):
    write_dump(hand_ensemble(), tmp_path / "h.jsonl")
    assert run("analyze", "--dump", tmp_path / "h.jsonl", "--out", tmp_path, "--which", "mds") == 1
    assert "error in load data" in capsys.readouterr().err
    assert run("analyze", "--dump", tmp_path / "h.jsonl", "--out", tmp_path, "--which", "bogus") == 1


def test_mds_on_all_stump_dump_warns(tmp_path, capsys):
    run("simulate", "--n", 10, "--p", 5, "--out", tmp_path)
    d = Dataset.from_csv(tmp_path / "friedman.csv")
    its = tuple(IterationDraw((TreeDraw.stump(0.1, tree_index=1),), 1.0) for _ in range(3))
    write_dump(PosteriorEnsemble(its, 1, 1, "regression", d.columns), tmp_path / "s.jsonl")
    assert run("analyze", "--dump", tmp_path / "s.jsonl", "--data", tmp_path / "friedman.csv",
               "--out", tmp_path / "o", "--which", "mds") == 0
    assert "degenerate" in capsys.readouterr().err.lower()


def test_plot_outputs(pipeline):
    svgs = sorted(p.name for p in (pipeline / "fig").glob("*.svg"))
    assert "vsupHeatmap_g.svg" in svgs and any(s.startswith("icicleGrid_g-iter") for s in svgs)
    assert any(s.startswith("icicleGrid_g-tree1") for s in svgs)
    for p in (pipeline / "fig").glob("*.svg"):
        ET.parse(p)
        assert p.with_suffix(".json").exists()


def test_plot_flags(pipeline, tmp_path):
    dump, csv_path = pipeline / "fit" / "trees.jsonl", pipeline / "friedman.csv"
    assert run("plot", "trees", "--dump", dump, "--data", csv_path, "--out", tmp_path, "--sort", "freq",
               "--no-stumps", "--highlight", "x1,x2", "--iteration", "12", "--tag", "f") == 0
    side = json.loads((tmp_path / "icicleGrid_f-iter12.json").read_text())
    assert side["style"]["sort"] == "freq" and side["style"]["remove_stumps"] is True
    assert side["style"]["highlight"] == ["x1", "x2"] and side["data"]["mode"] == "highlight"
    assert all(t["key"] != "S" for t in side["data"]["trees"])
    ens = read_dump(dump)
    freq = A.tree_type_frequencies(ens, "iteration", iteration=12)
    nonstump = [k for k, _ in freq if k != "S"]
    assert side["data"]["trees"][0]["key"] == nonstump[0]
    assert run("plot", "vsup", "--dump", dump, "--out", tmp_path, "--tag", "v") == 0
    assert (tmp_path / "vsupHeatmap_v.svg").exists()


def test_plot_errors(pipeline, tmp_path, capsys):
    dump = pipeline / "fit" / "trees.jsonl"
    assert run("plot", "pie", "--dump", dump, "--out", tmp_path) == 1
    assert run("plot", "trees", "--dump", dump, "--out", tmp_path, "--iteration", "999") == 1
    assert run("plot", "mds", "--dump", dump, "--out", tmp_path) == 1
    err = capsys.readouterr().err
    assert "error in plot" in err and "error in load data" in err


def test_end_to_end_is_byte_identical(pipeline, tmp_path_factory):
    other = tmp_path_factory.mktemp("again")
    run("simulate", "--n", 40, "--p", 6, "--seed", 5, "--out", other)
    run("fit", "--data", other / "friedman.csv", "--out", other / "fit", *SMALL)
    run("analyze", "--dump", other / "fit" / "trees.jsonl", "--data", other / "friedman.csv",
        "--out", other / "tab", "--which", "vimp,vint,treetypes,prox,mds,diagnostics,agnostic")
    run("plot", "all", "--dump", other / "fit" / "trees.jsonl", "--data", other / "friedman.csv",
        "--out", other / "fig", "--tag", "g")
    files = [p.relative_to(pipeline) for p in pipeline.rglob("*") if p.is_file()]
    assert len(files) > 20
    for rel in files:
        if rel.name == "fit_report.json":
            continue
        assert (pipeline / rel).read_bytes() == (other / rel).read_bytes(), rel
    assert read_dump(pipeline / "fit" / "trees.jsonl") == read_dump(other / "fit" / "trees.jsonl")


def test_golden_files(pipeline):
    """Outputs of the fixed-seed pipeline, frozen after the first verified run."""
    golden = json.loads((GOLDEN / "pipeline_sha256.json").read_text())
    for rel, digest in golden.items():
        assert sha(pipeline / rel) == digest, rel
