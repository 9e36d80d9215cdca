"""Acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line (shown in the terminal summary
under "acceptance criteria") and then asserts. Run directly with
``python tests/test_acceptance.py`` or through pytest.
"""

import time
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from bartviz import agnostic as G
from bartviz import analytics as A
from bartviz.cli import main
from bartviz.core import ColumnMeta, IterationDraw, PosteriorEnsemble, TreeDraw, read_dump, write_dump
from bartviz.embed import classical_mds, procrustes_align
from bartviz.sampler import log_marginal_likelihood
from bartviz.viz.palettes import vsup_bin

from conftest import ACCEPTANCE_LINES, hand_ensemble
from test_analytics import brute_proportions
from test_sampler import quad_log_marginal
from test_vsup import CORNERS

SEEDS = (0, 1, 2, 3, 4)
NEED = 4  # seeds out of five
SIGNAL, NOISE = slice(0, 5), slice(5, 10)


def record(number, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def top_pair(M):
    M = np.array(M, dtype=float)
    np.fill_diagonal(M, -np.inf)
    i, j = np.unravel_index(int(np.argmax(M)), M.shape)
    return tuple(sorted((int(i), int(j))))


def test_criterion_1_signal_ranking_m20(fits):
    inter_ok = sig_ok = 0
    runtimes = []
    for s in SEEDS:
        _, rep = fits.get(s, 20)
        runtimes.append(rep.runtime)
        vimp = A.inclusion_importance(rep.ensemble).vimp
        inter_ok += top_pair(A.inclusion_interaction(rep.ensemble).matrix()) == (0, 1)
        sig_ok += vimp[SIGNAL].min() > vimp[NOISE].max()
    passed = inter_ok >= NEED and sig_ok >= NEED and max(runtimes) <= 60.0
    record(1, passed, f"VInt(x1,x2) top in {inter_ok}/5 seeds, signal VImp > noise VImp in {sig_ok}/5, "
                      f"max fit {max(runtimes):.1f}s (need >= 4/5, <= 60s)")
    assert passed


def test_criterion_2_agnostic_ranking(fits):
    perm_ok = h_ok = 0
    for s in SEEDS:
        data, rep = fits.get(s, 20)
        ens = rep.ensemble.with_data(data)
        perm = G.permutation_importance(ens, data, repeats=5, rng=s)
        h_un, _ = G.h_statistic_matrix(ens, data)
        perm_ok += int(np.argmax(perm)) == 3
        h_ok += top_pair(h_un) == (0, 1)
    passed = perm_ok >= NEED and h_ok >= NEED
    record(2, passed, f"permutation ranks x4 first in {perm_ok}/5 seeds, H ranks (x1,x2) first in {h_ok}/5 "
                      "(need >= 4/5)")
    assert passed


def test_criterion_3_tree_count_effect(fits):
    share_ok = cv_ok = 0
    shares, cvs = [], []
    for s in SEEDS:
        lo = A.inclusion_importance(fits.get(s, 20)[1].ensemble)
        hi = A.inclusion_importance(fits.get(s, 200)[1].ensemble)
        a, b = lo.vimp[NOISE].mean(), hi.vimp[NOISE].mean()
        cv = hi.summary.cv
        share_ok += b > a
        cv_ok += cv[NOISE].mean() > cv[SIGNAL].mean()
        shares.append((a, b))
        cvs.append((cv[NOISE].mean(), cv[SIGNAL].mean()))
    passed = share_ok >= NEED and cv_ok >= NEED
    sh = np.mean(shares, axis=0)
    cm = np.mean(cvs, axis=0)
    record(3, passed, f"noise VImp rises 20->200 trees in {share_ok}/5 seeds (mean {sh[0]:.3f} -> {sh[1]:.3f}), "
                      f"noise CV > signal CV at 200 in {cv_ok}/5 ({cm[0]:.3f} vs {cm[1]:.3f})")
    assert passed


def test_criterion_4_sampler_calibration(fits):
    """Default sampler (200 trees); every seed must meet both bands."""
    sig, cov, info = [], [], []
    for s in SEEDS:
        data, rep = fits.get(s, 200)
        ens = rep.ensemble
        sig.append(float(np.mean([it.sigma for it in ens.retained])))
        d = A.regression_diagnostics(ens.with_data(data), draws=rep.fitted)
        cov.append(d["coverage"])
        f = G.friedman_function(data.X)
        info.append(float(np.mean((f >= d["fitted_lower"]) & (f <= d["fitted_upper"]))))
    sig_ok = all(0.8 <= v <= 1.3 for v in sig)
    cov_ok = all(0.85 <= v <= 0.99 for v in cov)
    record(4, sig_ok and cov_ok,
           f"posterior mean sigma {[round(v, 3) for v in sig]} in [0.8, 1.3]: {sig_ok}; "
           f"95% interval coverage of y {[round(v, 3) for v in cov]} in [0.85, 0.99]: {cov_ok} "
           f"(coverage of the true f: {[round(v, 3) for v in info]})")
    assert sig_ok and cov_ok


def test_criterion_5_oracles():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        leaves = [rng.normal(rng.normal(), 1.0, size=rng.integers(1, 6)) for _ in range(rng.integers(1, 4))]
        sigma, sigma_mu = rng.uniform(0.3, 2.0), rng.uniform(0.1, 1.5)
        exact = log_marginal_likelihood(leaves, sigma, sigma_mu)
        oracle = sum(quad_log_marginal(r, sigma, sigma_mu) for r in leaves)
        worst = max(worst, abs(exact - oracle) / abs(oracle))
    a = worst <= 1e-6

    ens = hand_ensemble()
    Z, W, _ = brute_proportions(ens)
    b = (np.array_equal(A.inclusion_importance(ens).per_iter, Z)
         and np.array_equal(A.inclusion_interaction(ens).per_iter, W))

    pts = np.random.default_rng(0).normal(size=(15, 2))
    Y = classical_mds(cdist(pts, pts))
    c_err = float(np.abs(cdist(Y, Y) - cdist(pts, pts)).max())
    c = c_err <= 1e-8

    S = np.random.default_rng(1).normal(size=(20, 2))
    th = 0.7
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    d_res = max(procrustes_align(S, S @ Q + 2.0)[2] for Q in (R, np.diag([1.0, -1.0]) @ R))
    d = d_res <= 1e-10
    passed = a and b and c and d
    record(5, passed, f"(a) max rel err {worst:.1e} <= 1e-6: {a}; (b) exact enumeration match: {b}; "
                      f"(c) MDS distance err {c_err:.1e} <= 1e-8: {c}; (d) Procrustes residual {d_res:.1e} "
                      f"<= 1e-10: {d}")
    assert passed


def test_criterion_6_conservation(fits):
    data, rep = fits.get(0, 20)
    ens = rep.ensemble.with_data(data)
    imp = A.inclusion_importance(ens)
    inter = A.inclusion_interaction(ens)
    sum_ok = abs(imp.vimp.sum() - 1.0) <= 1e-12
    z_ok = np.all(np.abs(imp.per_iter.sum(axis=1) - 1.0) <= 1e-12)
    w_ok = np.all(np.abs(inter.per_iter.sum(axis=1) - 1.0) <= 1e-12)
    ps = A.proximity_series(ens)
    prox_ok = all(np.array_equal(ps[i], ps[i].T) and np.all(np.diag(ps[i]) == 1.0)
                  for i in range(0, len(ps.iterations), 50))
    agg = A.aggregate_factors(imp, {"x1x2": [0, 1]})
    agg_ok = (np.all(np.abs(agg.per_iter.sum(axis=1) - 1.0) <= 1e-12)
              and np.allclose(agg.per_iter[:, 0], imp.per_iter[:, 0] + imp.per_iter[:, 1], rtol=0, atol=1e-15))
    cols = tuple(ColumnMeta(f"x{i + 1}") for i in range(3))
    add = PosteriorEnsemble((IterationDraw(tuple(TreeDraw.from_nested(s, tree_index=i + 1) for i, s in enumerate(
        [(0, 0.5, -1.0, 1.0), (1, 0.3, 0.5, -0.5), (2, 0.6, 0.2, 0.0), (1, 0.8, 0.0, 1.5)])), 1.0),),
        0, 4, "regression", cols)
    X = np.random.default_rng(2).uniform(size=(80, 3))
    from bartviz.core import Dataset
    dd = Dataset(X, X[:, 0], cols)
    h_un, h_n = G.h_statistic_matrix(add.with_data(dd), dd)
    h_max = float(max(np.abs(h_un).max(), np.nanmax(np.abs(h_n))))
    h_ok = h_max <= 1e-8
    passed = bool(sum_ok and z_ok and w_ok and prox_ok and agg_ok and h_ok)
    record(6, passed, f"VImp sum: {sum_ok}; z rows: {z_ok}; w rows: {w_ok}; proximity sym/diag: {prox_ok}; "
                      f"factor aggregation: {agg_ok}; additive H max {h_max:.1e} <= 1e-8: {h_ok}")
    assert passed


def test_criterion_7_vsup():
    got = [vsup_bin(v, u * 0.4, (0.0, 1.0), 0.4) for (v, u), _ in CORNERS]
    corners_ok = got == [e for _, e in CORNERS]
    grid = np.linspace(0, 1, 101)
    res = np.array([[vsup_bin(v, u, (0.0, 1.0), 1.0)[:2] for u in grid] for v in grid])
    ring, cell = res[..., 0], res[..., 1]
    mono_u = bool(np.all(np.diff(ring, axis=1) <= 0))
    mono_v = all(np.all(np.diff(cell[ring[:, j] == r, j]) >= 0) for r in range(4) for j in range(101))
    passed = corners_ok and mono_u and mono_v
    record(7, passed, f"6 corner cases match pre-registered cells: {corners_ok}; 101x101 sweep monotone in "
                      f"uncertainty: {mono_u}, in value: {mono_v}")
    assert passed


def _pipeline(root: Path):
    root.mkdir(parents=True, exist_ok=True)
    csv_path, dump = root / "friedman.csv", root / "fit" / "trees.jsonl"
    codes = [
        main(["simulate", "--seed", "7", "--out", str(csv_path)]),
        main(["fit", "--data", str(csv_path), "--out", str(root / "fit"), "--trees", "20", "--seed", "7"]),
        main(["analyze", "--dump", str(dump), "--data", str(csv_path), "--out", str(root / "tables"),
              "--which", "vimp,vint,prox,mds,treetypes,diagnostics,agnostic"]),
        main(["plot", "all", "--dump", str(dump), "--data", str(csv_path), "--out", str(root / "plots"),
              "--tag", "e2e"]),
    ]
    return codes


def test_criterion_8_determinism(tmp_path):
    a, b = tmp_path / "run1", tmp_path / "run2"
    codes = _pipeline(a) + _pipeline(b)
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file() and p.name != "fit_report.json")
    same = all((a / r).read_bytes() == (b / r).read_bytes() for r in files)
    svgs = [p for p in a.rglob("*.svg")]
    xml_ok = True
    for p in svgs:
        try:
            xml_ok &= ET.parse(p).getroot().get("viewBox") is not None
        except ET.ParseError:
            xml_ok = False
    dump = a / "fit" / "trees.jsonl"
    ens = read_dump(dump)
    write_dump(ens, tmp_path / "again.jsonl")
    rt_ok = read_dump(tmp_path / "again.jsonl") == ens and (tmp_path / "again.jsonl").read_bytes() == \
        dump.read_bytes()
    passed = all(c == 0 for c in codes) and same and xml_ok and rt_ok and len(svgs) >= 10
    record(8, passed, f"{len(files)} files byte-identical across two runs: {same}; {len(svgs)} SVGs well-formed "
                      f"with viewBox: {xml_ok}; dump round trip identity: {rt_ok}")
    assert passed


def test_criterion_9_study(tmp_path):
    import json
    t0 = time.perf_counter()
    code = main(["study", "--out", str(tmp_path)])
    elapsed = time.perf_counter() - t0
    svg = tmp_path / "studyGrid_friedman.svg"
    grid_ok = svg.exists() and ET.parse(svg).getroot() is not None
    side = json.loads((tmp_path / "studyGrid_friedman.json").read_text()) if grid_ok else {}
    grid_ok = grid_ok and len(side["data"]["panels"]) == 3 and all(len(r) == 3 for r in side["data"]["panels"])
    summary = json.loads((tmp_path / "study_summary.json").read_text())
    keys = ("signal_ranking", "agnostic_ranking", "tree_count_effect")
    summary_ok = all(isinstance(summary["checks"][k]["pass"], bool) for k in keys)
    passed = code == 0 and elapsed <= 600 and grid_ok and summary_ok
    verdicts = ", ".join(f"{k}={'pass' if summary['checks'][k]['pass'] else 'fail'}" for k in keys)
    record(9, passed, f"study finished in {elapsed:.0f}s (<= 600s), 3x3 grid written: {grid_ok}, "
                      f"machine-readable summary: {summary_ok} ({verdicts})")
    assert passed


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
