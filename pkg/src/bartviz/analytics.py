"""Posterior summaries over a BART ensemble.

Importance and interaction are the per-iteration inclusion proportions of
split variables and of parent-child split-variable pairs; their posterior
summaries carry the uncertainty shown in the heatmaps. Iterations in which
nothing is counted (all stumps, or no parent-child pairs) are dropped from
the averages instead of being treated as 0/0.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np
from scipy import stats

from . import forest
from .core import PosteriorEnsemble, StructureError, canonical_key, leaf_assignment


class EmptyPosteriorError(ValueError):
    """No retained iteration contains anything to count."""


class WrongTaskError(ValueError):
    pass


# --------------------------------------------------------------------------
# Summaries


@dataclass(frozen=True, eq=False)
class Summary:
    mean: np.ndarray
    median: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    sd: np.ndarray
    cv: np.ndarray  # +inf where the mean is 0

    @classmethod
    def of(cls, Z: np.ndarray) -> "Summary":
        mean = Z.mean(axis=0)
        sd = Z.std(axis=0, ddof=1) if Z.shape[0] > 1 else np.zeros(Z.shape[1])
        with np.errstate(divide="ignore", invalid="ignore"):
            cv = np.where(mean > 0, sd / np.where(mean > 0, mean, 1.0), np.inf)
        q25, med, q75 = np.quantile(Z, [0.25, 0.5, 0.75], axis=0)
        return cls(mean, med, q25, q75, sd, cv)

    def row(self, i):
        return {k: float(getattr(self, k)[i]) for k in ("mean", "median", "q25", "q75", "sd", "cv")}


@dataclass(frozen=True, eq=False)
class ImportanceResult:
    names: list[str]
    per_iter: np.ndarray  # K' x p, one row per retained iteration with at least one split
    iterations: np.ndarray  # ensemble iteration index of each row
    n_excluded: int
    summary: Summary = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "summary", Summary.of(self.per_iter))

    @property
    def vimp(self):
        return self.summary.mean

    def table(self):
        return [{"variable": nm, **self.summary.row(i)} for i, nm in enumerate(self.names)]


@dataclass(frozen=True, eq=False)
class InteractionResult:
    names: list[str]
    pairs: list[tuple[int, int]]  # unordered, r <= q; diagonal included
    per_iter: np.ndarray  # K'' x len(pairs)
    iterations: np.ndarray
    n_excluded: int
    summary: Summary = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "summary", Summary.of(self.per_iter) if self.per_iter.shape[0]
                           else Summary(*(np.zeros(len(self.pairs)) for _ in range(5)),
                                        np.full(len(self.pairs), np.inf)))

    @property
    def n_retained(self):
        return self.per_iter.shape[0]

    def matrix(self, stat="mean") -> np.ndarray:
        vals = getattr(self.summary, stat)
        p = len(self.names)
        M = np.zeros((p, p))
        for (r, q), v in zip(self.pairs, vals):
            M[r, q] = M[q, r] = v
        return M

    def vint(self, r, q) -> float:
        return float(self.matrix()[r, q])

    def table(self):
        return [{"var1": self.names[r], "var2": self.names[q], **self.summary.row(i)}
                for i, (r, q) in enumerate(self.pairs)]


def _pair_index(p):
    pairs = list(combinations_with_replacement(range(p), 2))
    return pairs, {pq: i for i, pq in enumerate(pairs)}


def split_counts(ensemble: PosteriorEnsemble):
    """Per retained iteration: split-variable counts (K x p) and parent-child
    pair counts (K x n_pairs)."""
    cached = ensemble._cache.get("split_counts")
    if cached is not None:
        return cached
    p = ensemble.p
    pairs, index = _pair_index(p)
    C = np.zeros((ensemble.K, p))
    P = np.zeros((ensemble.K, len(pairs)))
    memo: dict = {}
    for k, it in enumerate(ensemble.retained):
        for tree in it.trees:
            key = (tree.var, tree.left)
            got = memo.get(key)
            if got is None:
                vars_, prs = [], []
                for t, v in enumerate(tree.var):
                    if v < 0:
                        continue
                    vars_.append(v)
                    for c in (tree.left[t], tree.right[t]):
                        u = tree.var[c]
                        if u >= 0:
                            prs.append(index[(min(u, v), max(u, v))])
                got = memo[key] = (vars_, prs)
            for v in got[0]:
                C[k, v] += 1
            for i in got[1]:
                P[k, i] += 1
    ensemble._cache["split_counts"] = (C, P, pairs)
    return C, P, pairs


def inclusion_importance(ensemble: PosteriorEnsemble) -> ImportanceResult:
    C, _, _ = split_counts(ensemble)
    tot = C.sum(axis=1)
    keep = tot > 0
    if not keep.any():
        raise EmptyPosteriorError("every retained iteration consists of stumps only")
    Z = C[keep] / tot[keep, None]
    return ImportanceResult(ensemble.names, Z, np.flatnonzero(keep) + ensemble.burn_in,
                            int((~keep).sum()))


def inclusion_interaction(ensemble: PosteriorEnsemble) -> InteractionResult:
    C, P, pairs = split_counts(ensemble)
    if not C.any():
        raise EmptyPosteriorError("every retained iteration consists of stumps only")
    tot = P.sum(axis=1)
    keep = tot > 0
    Z = P[keep] / tot[keep, None]
    return InteractionResult(ensemble.names, pairs, Z, np.flatnonzero(keep) + ensemble.burn_in,
                             int((~keep).sum()))


def _resolve_factor_map(names, factor_map):
    groups = {}
    for fac, cols in factor_map.items():
        idx = []
        for c in cols:
            if isinstance(c, str):
                if c not in names:
                    raise KeyError(f"factor {fac!r}: unknown column {c!r}")
                c = names.index(c)
            elif not 0 <= c < len(names):
                raise KeyError(f"factor {fac!r}: column index {c} out of range")
            idx.append(int(c))
        groups[fac] = idx
    owner = {}
    for fac, idx in groups.items():
        for c in idx:
            if c in owner:
                raise KeyError(f"column {names[c]!r} belongs to two factors")
            owner[c] = fac
    # new variable order: each factor at the position of its first level
    new_names, target = [], {}
    for i, nm in enumerate(names):
        label = owner.get(i, nm)
        if label not in new_names:
            new_names.append(label)
        target[i] = new_names.index(label)
    return new_names, target


def aggregate_factors(result, factor_map):
    """Sum dummy-level proportions into their factor, per iteration.

    ``factor_map`` maps a factor name to its columns (names or indices).
    For interactions, (factor, v) collects every (level, v) pair and
    level-level pairs of one factor fold into the factor's diagonal.
    """
    new_names, target = _resolve_factor_map(result.names, factor_map)
    if isinstance(result, ImportanceResult):
        Z = np.zeros((result.per_iter.shape[0], len(new_names)))
        for i in range(len(result.names)):
            Z[:, target[i]] += result.per_iter[:, i]
        return ImportanceResult(new_names, Z, result.iterations, result.n_excluded)
    pairs, index = _pair_index(len(new_names))
    Z = np.zeros((result.per_iter.shape[0], len(pairs)))
    for i, (r, q) in enumerate(result.pairs):
        a, b = sorted((target[r], target[q]))
        Z[:, index[(a, b)]] += result.per_iter[:, i]
    return InteractionResult(new_names, pairs, Z, result.iterations, result.n_excluded)


# --------------------------------------------------------------------------
# Tree structure


def tree_type_frequencies(ensemble: PosteriorEnsemble, scope="all", *, iteration=None, tree=None):
    """Counts of canonical tree types, most frequent first, ties by key.

    ``scope`` is ``"all"`` (every retained tree), ``"iteration"`` (the m trees
    of ``iteration``) or ``"tree"`` (tree ``tree`` over retained iterations).
    """
    if scope == "all":
        trees = (t for it in ensemble.retained for t in it.trees)
    elif scope == "iteration":
        if iteration is None:
            raise ValueError("scope='iteration' needs an iteration index")
        trees = ensemble.iterations[iteration].trees
    elif scope == "tree":
        if tree is None or not 1 <= tree <= ensemble.m:
            raise ValueError(f"scope='tree' needs a tree index in 1..{ensemble.m}")
        trees = (it.trees[tree - 1] for it in ensemble.retained)
    else:
        raise ValueError(f"unknown scope {scope!r}")
    counts = Counter(canonical_key(t) for t in trees)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def depth_node_series(ensemble: PosteriorEnsemble, include_burn_in=False):
    its = ensemble.iterations if include_burn_in else ensemble.retained
    depth = np.array([np.mean([max(t.depths) for t in it.trees]) for it in its])
    nodes = np.array([np.mean([t.n_nodes for t in it.trees]) for it in its])
    return depth, nodes


# --------------------------------------------------------------------------
# Split-value densities


def silverman_bandwidth(x) -> float:
    """0.9 * min(sd, IQR/1.34) * n^(-1/5), falling back to sd, |x_0|, then 1."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        lo = abs(x[0]) if x.size and x[0] != 0 else 1.0
        return 0.9 * lo
    sd = x.std(ddof=1)
    iqr = np.subtract(*np.quantile(x, [0.75, 0.25]))
    if sd <= 1e-12 * max(1.0, np.abs(x).max()):  # constant up to round-off
        sd = 0.0
    lo = min(sd, iqr / 1.34)
    if not lo > 0:
        lo = sd or abs(x[0]) or 1.0
    return 0.9 * lo * x.size ** -0.2


def gaussian_kde(x, grid, bw=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = silverman_bandwidth(x) if bw is None else bw
    out = np.zeros_like(grid)
    for chunk in np.array_split(x, max(1, x.size // 4096 + 1)):
        out += stats.norm.pdf((grid[:, None] - chunk[None, :]) / h).sum(axis=1)
    return out / (x.size * h)


@dataclass(frozen=True, eq=False)
class SplitDensity:
    variable: str
    grid: np.ndarray
    data_density: np.ndarray
    split_density: np.ndarray  # empty when the variable is never split on
    n_splits: int
    data_range: tuple[float, float]

    @property
    def never_split(self):
        return self.n_splits == 0


def split_values(ensemble: PosteriorEnsemble) -> list[list[float]]:
    out = [[] for _ in range(ensemble.p)]
    for it in ensemble.retained:
        for tree in it.trees:
            for v, c in zip(tree.var, tree.split):
                if v >= 0:
                    out[v].append(c)
    return out


def split_value_densities(ensemble: PosteriorEnsemble, data=None, grid_points=512):
    """Gaussian KDEs (Silverman bandwidth) of post burn-in split values and of
    each predictor on a shared grid. The grid covers the observed range plus
    three bandwidths either side so each density integrates to one."""
    data = data if data is not None else ensemble.require_data()
    splits = split_values(ensemble)
    out = []
    for v, name in enumerate(ensemble.names):
        x = data.X[:, v]
        s = np.asarray(splits[v])
        h_data = silverman_bandwidth(x)
        h_split = silverman_bandwidth(s) if s.size else 0.0
        cut = 3 * max(h_data, h_split)
        grid = np.linspace(x.min() - cut, x.max() + cut, grid_points)
        dd = gaussian_kde(x, grid, h_data)
        sd = gaussian_kde(s, grid, h_split) if s.size else np.zeros(0)
        out.append(SplitDensity(name, grid, dd, sd, int(s.size), (float(x.min()), float(x.max()))))
    return out


# --------------------------------------------------------------------------
# Proximities


class ProximitySeries:
    """Per retained iteration, the n x n fraction of the m trees that place two
    rows in the same terminal node. Matrices are computed on access."""

    def __init__(self, ensemble: PosteriorEnsemble, data=None, iterations=None):
        self.ensemble = ensemble
        self.data = data if data is not None else ensemble.require_data()
        if iterations is None:
            iterations = range(ensemble.burn_in, ensemble.total_iters)
        self.iterations = list(iterations)

    def __len__(self):
        return len(self.iterations)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def matrix_at(self, k) -> np.ndarray:
        X = self.data.X
        n = X.shape[0]
        trees = self.ensemble.iterations[k].trees
        cols = []
        for tree in trees:
            la = leaf_assignment(tree, X)
            _, inv = np.unique(la, return_inverse=True)
            H = np.zeros((n, inv.max() + 1))
            H[np.arange(n), inv] = 1.0
            cols.append(H)
        H = np.hstack(cols)
        return (H @ H.T) / len(trees)

    def __getitem__(self, i) -> np.ndarray:
        return self.matrix_at(self.iterations[i])


def proximity_series(ensemble, data=None, iterations=None) -> ProximitySeries:
    return ProximitySeries(ensemble, data, iterations)


# --------------------------------------------------------------------------
# Fit diagnostics


def target_iteration(ensemble: PosteriorEnsemble) -> int:
    """Retained iteration with the smallest residual standard deviation
    (sigma for regression, latent residual sd for classification); first on ties."""
    its = ensemble.retained
    if ensemble.task == "regression":
        vals = [it.sigma for it in its]
    else:
        vals = [np.inf if it.resid_sd is None else it.resid_sd for it in its]
    return ensemble.burn_in + int(np.argmin(vals))


def _mixture_quantile(locs, scales, prob, iters=80):
    """Per column quantile of an equal-weight normal mixture (bisection)."""
    lo = (locs - 8 * scales[:, None]).min(axis=0)
    hi = (locs + 8 * scales[:, None]).max(axis=0)
    for _ in range(iters):
        mid = (lo + hi) / 2
        cdf = stats.norm.cdf((mid[None, :] - locs) / scales[:, None]).mean(axis=0)
        below = cdf < prob
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return (lo + hi) / 2


def ppoints(n):
    a = 3 / 8 if n <= 10 else 0.5
    return (np.arange(1, n + 1) - a) / (n + 1 - 2 * a)


def regression_diagnostics(ensemble: PosteriorEnsemble, data=None, draws=None) -> dict:
    """Panel data: fitted means with 95% credible and predictive intervals,
    residuals, normal QQ points, sigma trace and a residual histogram.

    ``draws`` (K x n fitted values) may be passed to skip re-prediction.
    """
    if ensemble.task != "regression":
        raise WrongTaskError("regression diagnostics need a regression fit")
    data = data if data is not None else ensemble.require_data()
    F = forest.prediction_draws(ensemble, data.X) if draws is None else draws
    y = data.y
    fit = F.mean(axis=0)
    lo, hi = np.quantile(F, [0.025, 0.975], axis=0)
    sig = np.array([it.sigma for it in ensemble.retained])
    plo = _mixture_quantile(F, sig, 0.025)
    phi = _mixture_quantile(F, sig, 0.975)
    resid = y - fit
    sd = resid.std(ddof=1)
    std_resid = resid / sd if sd > 0 else np.zeros_like(resid)
    theo = stats.norm.ppf(ppoints(y.size))
    counts, edges = np.histogram(resid, bins="sturges")
    return {
        "y": y,
        "fitted": fit,
        "fitted_lower": lo,
        "fitted_upper": hi,
        "predictive_lower": plo,
        "predictive_upper": phi,
        "residuals": resid,
        "qq_theoretical": theo,
        "qq_sample": np.sort(std_resid),
        "sigma_trace": ensemble.sigma_trace,
        "burn_in": ensemble.burn_in,
        "hist_counts": counts,
        "hist_edges": edges,
        "predictive_coverage": float(np.mean((y >= plo) & (y <= phi))),
        "coverage": float(np.mean((y >= lo) & (y <= hi))),
        "correlation": float(np.corrcoef(y, fit)[0, 1]) if np.ptp(fit) > 0 else float("nan"),
        "rmse": float(np.sqrt(np.mean(resid**2))),
    }


def _roc(y, score):
    from sklearn.metrics import roc_curve

    fpr, tpr, _ = roc_curve(y, score)
    return fpr, tpr


def _pr(y, score):
    from sklearn.metrics import precision_recall_curve

    prec, rec, _ = precision_recall_curve(y, score)
    return rec[::-1], prec[::-1]


def auc(y, score) -> float:
    from sklearn.metrics import roc_auc_score

    return float(roc_auc_score(y, score))


def classification_diagnostics(ensemble: PosteriorEnsemble, data=None, draws=None, grid_points=101):
    """ROC and PR curves per iteration on a fixed grid with pointwise median
    and 95% bands, AUC draws, confusion matrix at 0.5 and a probability
    histogram."""
    if ensemble.task != "classification":
        raise WrongTaskError("classification diagnostics need a classification fit")
    data = data if data is not None else ensemble.require_data()
    F = forest.prediction_draws(ensemble, data.X) if draws is None else draws
    y = data.y.astype(int)
    grid = np.linspace(0, 1, grid_points)
    rocs, prs, aucs = [], [], []
    for probs in F:
        fpr, tpr = _roc(y, probs)
        rocs.append(np.interp(grid, fpr, tpr))
        rec, prec = _pr(y, probs)
        prs.append(np.interp(grid, rec, prec))
        aucs.append(auc(y, probs))
    rocs, prs = np.array(rocs), np.array(prs)
    pmean = F.mean(axis=0)
    pred = (pmean >= 0.5).astype(int)
    conf = np.array([[np.sum((y == a) & (pred == b)) for b in (0, 1)] for a in (0, 1)])
    counts, edges = np.histogram(pmean, bins=10, range=(0, 1))
    return {
        "grid": grid,
        "roc_median": np.median(rocs, axis=0),
        "roc_lower": np.quantile(rocs, 0.025, axis=0),
        "roc_upper": np.quantile(rocs, 0.975, axis=0),
        "pr_median": np.median(prs, axis=0),
        "pr_lower": np.quantile(prs, 0.025, axis=0),
        "pr_upper": np.quantile(prs, 0.975, axis=0),
        "auc_draws": np.array(aucs),
        "auc": auc(y, pmean),
        "confusion": conf,  # rows: actual 0/1, columns: predicted 0/1
        "prob_mean": pmean,
        "y": y,
        "hist_counts": counts,
        "hist_edges": edges,
        "accuracy": float(np.mean(pred == y)),
    }


# --------------------------------------------------------------------------
# Export


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def write_table(rows: list[dict], path):
    """CSV when ``path`` ends in .csv, otherwise JSON."""
    path = str(path)
    if path.endswith(".csv"):
        with open(path, "w", newline="") as fh:
            if not rows:
                return
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    else:
        with open(path, "w") as fh:
            json.dump([{k: _plain(v) for k, v in r.items()} for r in rows], fh, indent=1, sort_keys=True)
            fh.write("\n")


def write_json(obj: dict, path):
    with open(path, "w") as fh:
        json.dump({k: _plain(v) for k, v in obj.items()}, fh, indent=1, sort_keys=True)
        fh.write("\n")


def require_routing(data):
    if data is None:
        raise StructureError("this analysis routes observations and needs the training CSV")
    return data
