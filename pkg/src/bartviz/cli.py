"""Command-line front end.

Commands form a dump-centred pipeline: ``fit`` writes a line-delimited JSON
tree dump, and ``analyze`` and ``plot`` read it back (plus the training CSV
when an analysis routes observations through the trees).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import agnostic, analytics, embed, forest
from .core import Dataset, read_dump, write_dump
from .sampler import SamplerConfig, fit
from .study import StudyConfig, run_study

ANALYSES = ("vimp", "vint", "prox", "mds", "treetypes", "diagnostics", "agnostic")
PLOT_KINDS = ("vimp", "vivi", "vsup", "trees", "tree", "treetypes", "mds", "diagnostics", "acceptance",
              "depthnodes", "splitdensity")
TASKS = {"reg": "regression", "class": "classification"}


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage


class _Stage:
    """Context manager that tags any exception with the pipeline stage."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, et, ev, tb):
        if ev is not None and not isinstance(ev, (StageError, KeyboardInterrupt, SystemExit)):
            raise StageError(self.name, ev) from ev
        return False


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _csv_list(s):
    return [x.strip() for x in s.split(",") if x.strip()] if s else []


# --------------------------------------------------------------------------
# Config


def sampler_config(args) -> SamplerConfig:
    """Defaults, overridden by the JSON config file, overridden by flags."""
    cfg = SamplerConfig()
    if getattr(args, "config", None):
        with open(args.config) as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(SamplerConfig)}
        unknown = set(raw) - known - {"task"}
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        cfg = replace(cfg, **{k: (tuple(v) if k == "move_probs" else v) for k, v in raw.items() if k in known})
    flags = {"m": args.trees, "total_iters": args.iters, "burn_in": args.burnin, "seed": args.seed}
    return replace(cfg, **{k: v for k, v in flags.items() if v is not None})


def _task(args):
    if args.task:
        return TASKS[args.task]
    if getattr(args, "config", None):
        with open(args.config) as fh:
            t = json.load(fh).get("task")
        if t:
            return TASKS.get(t, t)
    return "regression"


def _load_data(path, factors=(), response=None) -> Dataset:
    return Dataset.from_csv(path, factors=factors, response=response)


def _load_ensemble(args, need_data=False):
    with _Stage("read dump"):
        ens = read_dump(args.dump)
    if args.data:
        with _Stage("load data"):
            factors = _csv_list(args.factors) or sorted({c.parent_factor for c in ens.columns if c.parent_factor})
            data = _load_data(args.data, factors, args.response)
            ens = ens.with_data(data)
    elif need_data:
        raise StageError("load data", "this analysis needs the training CSV (--data)")
    return ens


# --------------------------------------------------------------------------
# Commands


def cmd_simulate(args):
    with _Stage("simulate"):
        data = agnostic.friedman_data(args.n, args.p, args.noise_sd, rng=args.seed)
    out = Path(args.out)
    path = out if out.suffix == ".csv" else out / "friedman.csv"
    with _Stage("write csv"):
        path.parent.mkdir(parents=True, exist_ok=True)
        data.to_csv(path)
    print(f"wrote {path} ({data.n} rows, {data.p} predictors)")
    return 0


def cmd_fit(args):
    with _Stage("config"):
        cfg = sampler_config(args)
        task = _task(args)
    with _Stage("load data"):
        data = _load_data(args.data, _csv_list(args.factors), args.response)
    with _Stage("fit"):
        t0 = time.perf_counter()
        rep = fit(data, cfg, task)
        runtime = time.perf_counter() - t0
    out = Path(args.out)
    with _Stage("write dump"):
        out.mkdir(parents=True, exist_ok=True)
        write_dump(rep.ensemble, out / "trees.jsonl")
        analytics.write_json(rep.to_json(), out / "fit_report.json")
    print(f"mean acceptance rate: {rep.accept_rate.mean():.4f}")
    print(f"final sigma: {rep.sigma_trace[-1]:.4f}")
    print(f"runtime: {runtime:.2f}s")
    return 0


def _analyze_one(which, ens, out, seed):
    if which == "vimp":
        analytics.write_table(analytics.inclusion_importance(ens).table(), out / "vimp.csv")
    elif which == "vint":
        analytics.write_table(analytics.inclusion_interaction(ens).table(), out / "vint.csv")
    elif which == "treetypes":
        rows = [{"type": k, "count": c} for k, c in analytics.tree_type_frequencies(ens)]
        analytics.write_table(rows, out / "treetypes.csv")
    elif which == "prox":
        ps = analytics.proximity_series(ens)
        k = analytics.target_iteration(ens)
        P = ps.matrix_at(k)
        np.savetxt(out / "proximity_target.csv", P, delimiter=",", fmt="%.17g")
        analytics.write_json({"target_iteration": k}, out / "proximity_target.json")
    elif which == "mds":
        ps = analytics.proximity_series(ens)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", embed.DegenerateEmbeddingWarning)
            res = embed.build_embedding(ps, analytics.target_iteration(ens), labels=_labels(ens))
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        analytics.write_json(res.to_json(), out / "mds.json")
    elif which == "diagnostics":
        draws = forest.prediction_draws(ens, ens.require_data().X)
        if ens.task == "regression":
            d = analytics.regression_diagnostics(ens, draws=draws)
        else:
            d = analytics.classification_diagnostics(ens, draws=draws)
        analytics.write_json(d, out / "diagnostics.json")
    elif which == "agnostic":
        data = ens.require_data()
        perm = agnostic.permutation_importance(ens, data, rng=seed)
        h_un, h_norm = agnostic.h_statistic_matrix(ens, data)
        analytics.write_table([{"variable": nm, "permutation_importance": float(v)}
                               for nm, v in zip(ens.names, perm)], out / "permutation_importance.csv")
        rows = [{"var1": ens.names[j], "var2": ens.names[k], "h_unnormalized": float(h_un[j, k]),
                 "h_normalized": float(h_norm[j, k])}
                for j in range(ens.p) for k in range(j + 1, ens.p)]
        analytics.write_table(rows, out / "h_statistic.csv")


NEEDS_DATA = {"prox", "mds", "diagnostics", "agnostic"}


def cmd_analyze(args):
    which = _csv_list(args.which) or ["vimp", "vint", "treetypes"]
    bad = [w for w in which if w not in ANALYSES]
    if bad:
        raise StageError("analyze", f"unknown analyses {bad}; choose from {', '.join(ANALYSES)}")
    ens = _load_ensemble(args, need_data=bool(NEEDS_DATA & set(which)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for w in which:
        with _Stage(f"analyze {w}"):
            _analyze_one(w, ens, out, args.seed or 0)
        print(f"analyze {w}: done")
    return 0


def _labels(ens):
    if ens.data is None:
        return None
    y = ens.data.y
    return y.astype(int) if ens.task == "classification" else y


def _iteration(ens, spec):
    if spec in (None, "target"):
        return analytics.target_iteration(ens)
    k = int(spec)
    if not 0 <= k < ens.total_iters:
        raise ValueError(f"iteration {k} outside 0..{ens.total_iters - 1}")
    return k


def _plot_one(kind, ens, args):
    from . import viz  # matplotlib is only needed here

    data = ens.data
    style = {"remove_stumps": args.no_stumps, "highlight": _csv_list(args.highlight), "sort": args.sort}
    mode = args.mode or ("highlight" if style["highlight"] else "splitVariable")
    if kind == "vimp":
        return viz.render_importance_dotplot(analytics.inclusion_importance(ens))
    if kind in ("vivi", "vsup"):
        return viz.render_vivi_heatmap(analytics.inclusion_importance(ens), analytics.inclusion_interaction(ens),
                                       uncertainty=kind == "vsup")
    if kind == "trees":
        k = _iteration(ens, args.iteration)
        trees = ens.iterations[k].trees
        return viz.render_icicle(trees, data, mode, names=ens.names, mu_scale=ens.y_scale,
                                 labels=[f"tree {t.tree_index}" for t in trees],
                                 title=f"iteration {k}", **style), f"iter{k}"
    if kind == "tree":
        j = args.tree
        if not 1 <= j <= ens.m:
            raise ValueError(f"--tree must lie in 1..{ens.m}")
        trees = [it.trees[j - 1] for it in ens.retained]
        labels = [f"iter {ens.burn_in + i}" for i in range(len(trees))]
        return viz.render_icicle(trees, data, mode, names=ens.names, mu_scale=ens.y_scale, labels=labels,
                                 title=f"tree {j} over post burn-in iterations", **style), f"tree{j}"
    if kind == "treetypes":
        return viz.render_tree_barplot(analytics.tree_type_frequencies(ens), ens.names, args.top_n)
    if kind == "mds":
        ps = analytics.proximity_series(ens)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", embed.DegenerateEmbeddingWarning)
            res = embed.build_embedding(ps, analytics.target_iteration(ens), labels=_labels(ens))
        return viz.render_mds(res, show_index=args.labels)
    if kind == "diagnostics":
        draws = forest.prediction_draws(ens, ens.require_data().X)
        d = (analytics.regression_diagnostics(ens, draws=draws) if ens.task == "regression"
             else analytics.classification_diagnostics(ens, draws=draws))
        return viz.render_diagnostics(d, ens.task, analytics.inclusion_importance(ens))
    if kind == "acceptance":
        rate = np.array([it.accepted_count / ens.m for it in ens.iterations])
        return viz.render_acceptance(rate, ens.burn_in)
    if kind == "depthnodes":
        depth, nodes = analytics.depth_node_series(ens, include_burn_in=True)
        return viz.render_depth_nodes(depth, nodes, ens.burn_in)
    if kind == "splitdensity":
        return viz.render_split_densities(analytics.split_value_densities(ens))
    raise ValueError(f"unknown plot kind {kind!r}")


PLOT_NEEDS_DATA = {"mds", "diagnostics", "splitdensity"}


def cmd_plot(args):
    kinds = list(PLOT_KINDS) if args.kind == "all" else _csv_list(args.kind)
    bad = [k for k in kinds if k not in PLOT_KINDS]
    if bad or not kinds:
        raise StageError("plot", f"unknown plot kind {bad or args.kind}; choose from {', '.join(PLOT_KINDS)} or all")
    if args.kind == "all" and not args.data:
        kinds = [k for k in kinds if k not in PLOT_NEEDS_DATA]
    ens = _load_ensemble(args, need_data=bool(PLOT_NEEDS_DATA & set(kinds)))
    out = Path(args.out)
    for k in kinds:
        with _Stage(f"plot {k}"):
            res = _plot_one(k, ens, args)
            plot, suffix = res if isinstance(res, tuple) else (res, "")
            svg, _ = plot.save(out, f"{args.tag}-{suffix}" if suffix else args.tag)
        print(f"wrote {svg}")
    return 0


def cmd_study(args):
    cfg = StudyConfig(parallel=args.parallel)
    if args.seed is not None:
        cfg = replace(cfg, seeds=tuple(args.seed + i for i in range(len(cfg.seeds))), grid_seed=args.seed)
    if args.iters is not None or args.burnin is not None:
        cfg = replace(cfg, total_iters=args.iters or cfg.total_iters, burn_in=args.burnin or cfg.burn_in)
    if args.tree_counts:
        cfg = replace(cfg, tree_counts=tuple(int(x) for x in _csv_list(args.tree_counts)))
    if args.n_seeds:
        cfg = replace(cfg, seeds=tuple(cfg.grid_seed + i for i in range(args.n_seeds)),
                      min_pass=min(cfg.min_pass, args.n_seeds))
    with _Stage("study"):
        summary = run_study(args.out, cfg)
    for k in ("signal_ranking", "agnostic_ranking", "tree_count_effect"):
        print(f"{k}: {'PASS' if summary['checks'][k]['pass'] else 'FAIL'}")
    print(f"total time: {summary['total_seconds']:.1f}s")
    return 0


# --------------------------------------------------------------------------
# Parser


def _add_sampler_flags(p):
    p.add_argument("--trees", type=int, help="number of trees m")
    p.add_argument("--iters", type=int, help="total MCMC iterations")
    p.add_argument("--burnin", type=int, help="burn-in iterations")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--config", help="JSON file of sampler settings (flags take precedence)")


def _add_dump_flags(p):
    p.add_argument("--dump", required=True, help="tree dump written by fit")
    p.add_argument("--data", help="training CSV, needed for routing-based output")
    p.add_argument("--response", help="response column (default: y, else the last column)")
    p.add_argument("--factors", help="comma-separated categorical columns")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bartviz", description="Fit BART and visualize its posterior trees.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write Friedman benchmark data as CSV")
    p.add_argument("--n", type=_positive_int, default=250)
    p.add_argument("--p", type=_positive_int, default=10)
    p.add_argument("--noise-sd", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path or directory (writes friedman.csv)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit BART and write trees.jsonl and fit_report.json")
    p.add_argument("--data", required=True)
    p.add_argument("--response")
    p.add_argument("--factors")
    p.add_argument("--task", choices=sorted(TASKS))
    p.add_argument("--out", required=True)
    _add_sampler_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("analyze", help="write tables computed from a dump")
    _add_dump_flags(p)
    p.add_argument("--which", default="vimp,vint,treetypes", help=f"comma-separated subset of {','.join(ANALYSES)}")
    p.add_argument("--seed", type=int, default=0, help="seed for permutation importance")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("plot", help="render SVG figures from a dump")
    _add_dump_flags(p)
    p.add_argument("kind", help=f"comma-separated subset of {','.join(PLOT_KINDS)}, or all")
    p.add_argument("--sort", choices=("freq", "depth", "none"), default="none")
    p.add_argument("--no-stumps", action="store_true")
    p.add_argument("--highlight", help="comma-separated variables to emphasize")
    p.add_argument("--mode", choices=("splitVariable", "meanResponse", "muValue", "highlight"))
    p.add_argument("--iteration", default="target", help="'target' or an iteration index")
    p.add_argument("--tree", type=int, default=1, help="tree index for --kind tree")
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--labels", action="store_true", help="label MDS points with row numbers")
    p.add_argument("--tag", default="plot", help="file name tag: <kind>_<tag>.svg")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("study", help="tree-count comparison on Friedman data")
    p.add_argument("--out", required=True)
    p.add_argument("--parallel", action="store_true", help="run independent fits in worker processes")
    p.add_argument("--seed", type=int, help="first seed of the sweep")
    p.add_argument("--iters", type=int)
    p.add_argument("--burnin", type=int)
    p.add_argument("--tree-counts", help="comma-separated, e.g. 20,100,200")
    p.add_argument("--n-seeds", type=int)
    p.set_defaults(func=cmd_study)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as e:
        print(f"error in {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
