"""Tree-count comparison on the Friedman benchmark.

Fits BART with several tree counts on simulated Friedman data, draws a
3 x 3 grid of heatmaps (model-agnostic, inclusion proportions, proportions
with the VSUP; one column per tree count) and checks three ranking
properties over a sweep of seeds:

* ``signal_ranking``: with the smallest tree count, VInt(x1, x2) is the
  largest off-diagonal interaction and every signal variable (x1..x5) has a
  higher VImp than every noise variable, and a fit takes at most 60 s;
* ``agnostic_ranking``: with the smallest tree count, permutation
  importance ranks x4 first and the unnormalized H statistic ranks
  (x1, x2) first;
* ``tree_count_effect``: going from the smallest to the largest tree count
  raises the mean VImp of the noise variables, and at the largest count the
  noise variables' mean CV exceeds that of the signal variables.

Each property must hold in at least ``min_pass`` seeds.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import agnostic, analytics
from .sampler import SamplerConfig, fit_regression
from .viz import heatmap_payload, render, study_grid_spec

SIGNAL = slice(0, 5)
NOISE = slice(5, None)
FIT_TIME_LIMIT = 60.0


@dataclass(frozen=True)
class StudyConfig:
    tree_counts: tuple[int, ...] = (20, 100, 200)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    grid_seed: int = 0
    n: int = 250
    p: int = 10
    noise_sd: float = 1.0
    total_iters: int = 1000
    burn_in: int = 100
    min_pass: int = 4
    perm_repeats: int = 5
    parallel: bool = False
    workers: int | None = None

    def __post_init__(self):
        if len(self.tree_counts) < 2:
            raise ValueError("need at least two tree counts")
        if self.grid_seed not in self.seeds:
            raise ValueError("grid_seed must be one of the seeds")
        if self.p < 6:
            raise ValueError("need noise variables beyond the five signal variables (p >= 6)")


def _jobs(cfg: StudyConfig):
    lo, hi = min(cfg.tree_counts), max(cfg.tree_counts)
    jobs = []
    for s in cfg.seeds:
        counts = cfg.tree_counts if s == cfg.grid_seed else (lo, hi)
        jobs += [(s, m) for m in sorted(set(counts))]
    return jobs


def _run_one(args):
    """Fit one (seed, m) and reduce it to the numbers the study needs."""
    cfg, seed, m = args
    data = agnostic.friedman_data(cfg.n, cfg.p, cfg.noise_sd, rng=seed)
    scfg = SamplerConfig(m=m, total_iters=cfg.total_iters, burn_in=cfg.burn_in, seed=seed)
    t0 = time.perf_counter()
    rep = fit_regression(data, scfg)
    runtime = time.perf_counter() - t0
    ens = rep.ensemble.with_data(data)
    imp = analytics.inclusion_importance(ens)
    inter = analytics.inclusion_interaction(ens)
    out = {
        "seed": seed, "m": m, "runtime": runtime, "names": list(data.names),
        "vimp": imp.vimp, "vimp_cv": imp.summary.cv,
        "vint": inter.matrix(), "vint_cv": inter.matrix("cv"),
        "sigma_mean": float(rep.sigma_trace[scfg.burn_in:].mean()),
    }
    need_agnostic = m == min(cfg.tree_counts) or seed == cfg.grid_seed
    if need_agnostic:
        t1 = time.perf_counter()
        out["perm"] = agnostic.permutation_importance(ens, data, cfg.perm_repeats, rng=seed)
        out["h_un"], _ = agnostic.h_statistic_matrix(ens, data)
        out["agnostic_runtime"] = time.perf_counter() - t1
    return out


def _top_pair(M):
    M = np.array(M, dtype=float)
    np.fill_diagonal(M, -np.inf)
    r, q = np.unravel_index(int(np.argmax(M)), M.shape)
    return (int(min(r, q)), int(max(r, q)))


def evaluate(runs: dict, cfg: StudyConfig) -> dict:
    """Pass/fail of the three ranking properties from per-(seed, m) results."""
    lo, hi = min(cfg.tree_counts), max(cfg.tree_counts)
    c1, c2, c3 = [], [], []
    for s in cfg.seeds:
        a, b = runs[(s, lo)], runs[(s, hi)]
        vimp = np.asarray(a["vimp"])
        c1.append({
            "seed": s,
            "top_interaction": _top_pair(a["vint"]),
            "interaction_ok": _top_pair(a["vint"]) == (0, 1),
            "min_signal_vimp": float(vimp[SIGNAL].min()),
            "max_noise_vimp": float(vimp[NOISE].max()),
            "signal_ok": bool(vimp[SIGNAL].min() > vimp[NOISE].max()),
            "runtime": a["runtime"],
        })
        perm = np.asarray(a["perm"])
        c2.append({
            "seed": s,
            "top_permutation": int(np.argmax(perm)),
            "permutation_ok": int(np.argmax(perm)) == 3,
            "top_h": _top_pair(a["h_un"]),
            "h_ok": _top_pair(a["h_un"]) == (0, 1),
        })
        cv = np.asarray(b["vimp_cv"])
        share_lo = float(np.mean(np.asarray(a["vimp"])[NOISE]))
        share_hi = float(np.mean(np.asarray(b["vimp"])[NOISE]))
        c3.append({
            "seed": s,
            "noise_vimp_low_m": share_lo,
            "noise_vimp_high_m": share_hi,
            "share_ok": share_hi > share_lo,
            "noise_cv": float(np.mean(cv[NOISE])),
            "signal_cv": float(np.mean(cv[SIGNAL])),
            "cv_ok": bool(np.mean(cv[NOISE]) > np.mean(cv[SIGNAL])),
        })

    def count(rows, key):
        return int(sum(r[key] for r in rows))

    k = cfg.min_pass
    max_rt = max(r["runtime"] for r in c1)
    return {
        "signal_ranking": {
            "pass": count(c1, "interaction_ok") >= k and count(c1, "signal_ok") >= k and max_rt <= FIT_TIME_LIMIT,
            "interaction_seeds": count(c1, "interaction_ok"), "signal_seeds": count(c1, "signal_ok"),
            "max_fit_seconds": max_rt, "per_seed": c1,
        },
        "agnostic_ranking": {
            "pass": count(c2, "permutation_ok") >= k and count(c2, "h_ok") >= k,
            "permutation_seeds": count(c2, "permutation_ok"), "h_seeds": count(c2, "h_ok"), "per_seed": c2,
        },
        "tree_count_effect": {
            "pass": count(c3, "share_ok") >= k and count(c3, "cv_ok") >= k,
            "share_seeds": count(c3, "share_ok"), "cv_seeds": count(c3, "cv_ok"), "per_seed": c3,
        },
        "min_pass": k, "n_seeds": len(cfg.seeds), "tree_counts": [lo, hi],
    }


def _grid_panels(runs, cfg):
    rows = [[], [], []]
    for m in cfg.tree_counts:
        r = runs[(cfg.grid_seed, m)]
        rows[0].append(heatmap_payload(r["names"], r["perm"], r["h_un"]))
        rows[1].append(heatmap_payload(r["names"], r["vimp"], r["vint"]))
        rows[2].append(heatmap_payload(r["names"], r["vimp"], r["vint"], r["vimp_cv"], r["vint_cv"]))
    return rows


def _ranking_rows(runs, cfg):
    out = []
    for (s, m), r in sorted(runs.items()):
        names = r["names"]
        row = {"seed": s, "m": m, "fit_seconds": r["runtime"], "sigma_mean": r["sigma_mean"],
               "vimp_rank": " ".join(names[i] for i in np.argsort(-np.asarray(r["vimp"]), kind="stable")),
               "top_vint": "%s:%s" % tuple(names[i] for i in _top_pair(r["vint"]))}
        if "perm" in r:
            row["perm_rank"] = " ".join(names[i] for i in np.argsort(-np.asarray(r["perm"]), kind="stable"))
            row["top_h"] = "%s:%s" % tuple(names[i] for i in _top_pair(r["h_un"]))
        else:
            row["perm_rank"] = row["top_h"] = ""
        out.append(row)
    return out


def run_study(out_dir, cfg: StudyConfig = StudyConfig(), log=print) -> dict:
    """Run every fit, write the grid SVG, a ranking table and a JSON summary.

    Returns the summary dict (also written to ``study_summary.json``).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    jobs = [(cfg, s, m) for s, m in _jobs(cfg)]
    if cfg.parallel:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_run_one(job))
            log(f"seed {job[1]} m={job[2]}: {results[-1]['runtime']:.1f}s")
    runs = {(r["seed"], r["m"]): r for r in results}
    checks = evaluate(runs, cfg)
    rendered = render(study_grid_spec(_grid_panels(runs, cfg), cfg.tree_counts,
                                      ["agnostic", "proportions", "proportions + VSUP"]))
    svg_path, _ = rendered.save(out_dir, "friedman")
    table = _ranking_rows(runs, cfg)
    with open(out_dir / "study_rankings.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(table[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(table)
    summary = {
        "config": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(replace(cfg)).items()},
        "checks": checks,
        "all_pass": all(checks[k]["pass"] for k in ("signal_ranking", "agnostic_ranking", "tree_count_effect")),
        "grid_svg": svg_path.name,
        "total_seconds": time.perf_counter() - t0,
    }
    with open(out_dir / "study_summary.json", "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True, default=_json_default)
        fh.write("\n")
    return summary


def _json_default(o):
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))
