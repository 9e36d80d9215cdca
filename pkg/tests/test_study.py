import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from bartviz.study import StudyConfig, _jobs, evaluate, run_study

TINY = StudyConfig(tree_counts=(5, 8, 10), seeds=(0, 1), n=60, p=7, total_iters=40, burn_in=10, min_pass=1,
                   perm_repeats=2)


def test_jobs_cover_grid_seed_and_extremes():
    assert _jobs(TINY) == [(0, 5), (0, 8), (0, 10), (1, 5), (1, 10)]


def test_config_validation():
    for bad in ({"tree_counts": (20,)}, {"grid_seed": 9}, {"p": 5}):
        with pytest.raises(ValueError):
            StudyConfig(**bad)


def _fake_run(vimp, vint, cv, perm=None, h=None, runtime=1.0):
    r = {"vimp": np.asarray(vimp), "vint": np.asarray(vint), "vimp_cv": np.asarray(cv), "runtime": runtime}
    if perm is not None:
        r["perm"], r["h_un"] = np.asarray(perm), np.asarray(h)
    return r


def test_evaluate_hand_case():
    p = 6
    vint = np.zeros((p, p))
    vint[0, 1] = vint[1, 0] = 0.5
    h = vint.copy()
    good_lo = _fake_run([0.2, 0.2, 0.2, 0.2, 0.15, 0.05], vint, np.ones(p), [0, 0, 0, 9, 0, 0], h)
    good_hi = _fake_run([0.18] * 5 + [0.1], vint, [0.1] * 5 + [0.5])
    cfg = StudyConfig(tree_counts=(20, 200), seeds=(0,), p=6, min_pass=1)
    res = evaluate({(0, 20): good_lo, (0, 200): good_hi}, cfg)
    assert res["signal_ranking"]["pass"] and res["agnostic_ranking"]["pass"] and res["tree_count_effect"]["pass"]
    slow = dict(good_lo, runtime=61.0)
    assert not evaluate({(0, 20): slow, (0, 200): good_hi}, cfg)["signal_ranking"]["pass"]
    flat_hi = _fake_run([0.2] * 5 + [0.0], vint, [0.5] * 5 + [0.1])
    assert not evaluate({(0, 20): good_lo, (0, 200): flat_hi}, cfg)["tree_count_effect"]["pass"]


def test_run_study_outputs(tmp_path):
    summary = run_study(tmp_path, TINY, log=lambda *_: None)
    assert set(summary["checks"]) >= {"signal_ranking", "agnostic_ranking", "tree_count_effect"}
    assert isinstance(summary["all_pass"], bool)
    ET.parse(tmp_path / "studyGrid_friedman.svg")
    side = json.loads((tmp_path / "studyGrid_friedman.json").read_text())
    assert len(side["data"]["panels"]) == 3 and all(len(r) == 3 for r in side["data"]["panels"])
    assert "vimp_cv" in side["data"]["panels"][2][0] and "vimp_cv" not in side["data"]["panels"][1][0]
    on_disk = json.loads((tmp_path / "study_summary.json").read_text())
    assert on_disk["checks"]["signal_ranking"]["pass"] == summary["checks"]["signal_ranking"]["pass"]
    rows = (tmp_path / "study_rankings.csv").read_text().splitlines()
    assert len(rows) == 1 + 5


def test_parallel_matches_sequential(tmp_path):
    cfg = StudyConfig(tree_counts=(4, 6), seeds=(0, 1), n=40, p=6, total_iters=20, burn_in=5, min_pass=1,
                      perm_repeats=1)
    a = run_study(tmp_path / "a", cfg, log=lambda *_: None)
    from dataclasses import replace
    b = run_study(tmp_path / "b", replace(cfg, parallel=True, workers=2), log=lambda *_: None)
    for key in ("signal_ranking", "agnostic_ranking", "tree_count_effect"):
        ra = {k: v for k, v in a["checks"][key].items() if k not in ("max_fit_seconds", "per_seed")}
        rb = {k: v for k, v in b["checks"][key].items() if k not in ("max_fit_seconds", "per_seed")}
        assert ra == rb
    assert (tmp_path / "a" / "studyGrid_friedman.svg").read_bytes() == \
        (tmp_path / "b" / "studyGrid_friedman.svg").read_bytes()
