"""Model-agnostic comparators: prediction, permutation importance, partial
dependence and Friedman's H, plus the Friedman benchmark generator.

Partial dependence works on the posterior-mean latent function (the sum of
trees on the response scale; the probit scale for classification), which is
linear in the trees and therefore computed exactly from its box form.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import forest
from .analytics import auc
from .core import ColumnMeta, Dataset, PosteriorEnsemble


def predict(ensemble: PosteriorEnsemble, X):
    """Posterior-mean predictions and the K x n per-iteration predictions.

    Classification returns probabilities, averaged after the probit link.
    """
    X = X.X if isinstance(X, Dataset) else X
    draws = forest.prediction_draws(ensemble, X)
    return draws.mean(axis=0), draws


def _score_fn(ensemble: PosteriorEnsemble, y):
    if ensemble.task == "regression":
        f = forest.box_function(ensemble)
        return lambda X: float(np.sqrt(np.mean((y - f(X)) ** 2)))
    return lambda X: 1.0 - auc(y, forest.prediction_draws(ensemble, X).mean(axis=0))


def permutation_importance(ensemble: PosteriorEnsemble, data: Dataset, repeats=5, rng=None) -> np.ndarray:
    """Mean increase in RMSE (regression) or in 1 - AUC (classification) when
    one column is permuted. Each (variable, repeat) gets its own RNG stream."""
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    rng = np.random.default_rng(rng)
    streams = rng.spawn(data.p * repeats)
    score = _score_fn(ensemble, data.y)
    base = score(data.X)
    out = np.zeros(data.p)
    for v in range(data.p):
        deltas = []
        for r in range(repeats):
            Xp = data.X.copy()
            Xp[:, v] = streams[v * repeats + r].permutation(Xp[:, v])
            deltas.append(score(Xp) - base)
        out[v] = np.mean(deltas)
    return out


@dataclass(frozen=True, eq=False)
class PDSurface:
    variables: tuple[int, ...]
    grids: tuple[np.ndarray, ...]
    values: np.ndarray  # mean-centered; shape (G,) or (G1, G2)
    raw: np.ndarray  # before centering
    constant_grid: bool = False


def pd_grid(x, grid_size=20) -> np.ndarray:
    probs = np.arange(1, grid_size + 1) / (grid_size + 1)
    return np.unique(np.quantile(x, probs))


def _inside(lo, hi, g):
    """B x G indicator of g in (lo, hi]."""
    return ((g[None, :] > lo[:, None]) & (g[None, :] <= hi[:, None])).astype(float)


def _raw_pd(bf: forest.BoxFunction, X, variables, grids, frac_all):
    touch = bf.touching(variables)
    idx = np.flatnonzero(touch)
    const = bf.intercept + float(bf.w[~touch] @ frac_all[~touch])
    wf = bf.w[idx] * bf.fractions(X, idx, variables)
    A = [_inside(bf.lo[idx, v], bf.hi[idx, v], g) for v, g in zip(variables, grids)]
    if len(variables) == 1:
        return const + A[0].T @ wf
    return const + (A[0] * wf[:, None]).T @ A[1]


def _frac_all(ensemble, bf, X):
    key = ("frac_all", id(X))
    cached = ensemble._cache.get(key)
    if cached is None or cached[0] is not X:
        fr = bf.fractions(X, np.arange(bf.n_boxes), ())
        ensemble._cache[key] = cached = (X, fr)
    return cached[1]


def partial_dependence(ensemble: PosteriorEnsemble, data: Dataset, variables, grid_size=20) -> PDSurface:
    variables = tuple(int(v) for v in np.atleast_1d(variables))
    if len(variables) not in (1, 2) or len(set(variables)) != len(variables):
        raise ValueError(f"need one or two distinct variables, got {variables}")
    X = data.X
    grids = tuple(pd_grid(X[:, v], grid_size) for v in variables)
    bf = forest.box_function(ensemble)
    raw = _raw_pd(bf, X, variables, grids, _frac_all(ensemble, bf, X))
    return PDSurface(variables, grids, raw - raw.mean(), raw, any(g.size == 1 for g in grids))


def _nearest(grid, x):
    i = np.clip(np.searchsorted(grid, x), 1, max(grid.size - 1, 1))
    if grid.size == 1:
        return np.zeros(x.size, dtype=int)
    left = grid[i - 1]
    right = grid[i]
    return np.where(x - left <= right - x, i - 1, i)


@dataclass(frozen=True)
class HStatResult:
    pair: tuple[int, int]
    h_normalized: float  # nan when the joint PD is flat
    h_unnormalized: float
    undefined: bool = False


def _h_from_pds(X, j, k, gj, gk, fj, fk, fjk, n):
    a = _nearest(gj, X[:, j])
    b = _nearest(gk, X[:, k])
    vj, vk, vjk = fj[a], fk[b], fjk[a, b]
    vj, vk, vjk = vj - vj.mean(), vk - vk.mean(), vjk - vjk.mean()
    num = float(np.sum((vjk - vj - vk) ** 2))
    den = float(np.sum(vjk**2))
    undefined = den < 1e-12
    h2 = num / den if not undefined else float("nan")
    h_norm = float(np.sqrt(min(max(h2, 0.0), 1.0))) if not undefined else float("nan")
    return HStatResult((j, k), h_norm, float(np.sqrt(num / n)), undefined)


def h_statistic(ensemble: PosteriorEnsemble, data: Dataset, j, k, grid_size=20) -> HStatResult:
    """Friedman's H for (j, k): normalized (square root of the ratio, clamped to
    [0, 1]) and unnormalized (root mean squared interaction part).

    Partial dependence is evaluated on quantile grids; each data row takes the
    values at its nearest grid points, and every function is centered over
    the rows before the sums.
    """
    if j == k:
        raise ValueError("h_statistic needs two distinct variables")
    X = data.X
    bf = forest.box_function(ensemble)
    fa = _frac_all(ensemble, bf, X)
    gj, gk = pd_grid(X[:, j], grid_size), pd_grid(X[:, k], grid_size)
    fj = _raw_pd(bf, X, (j,), (gj,), fa)
    fk = _raw_pd(bf, X, (k,), (gk,), fa)
    fjk = _raw_pd(bf, X, (j, k), (gj, gk), fa)
    return _h_from_pds(X, j, k, gj, gk, fj, fk, fjk, X.shape[0])


def h_statistic_matrix(ensemble: PosteriorEnsemble, data: Dataset, grid_size=20):
    """All pairs; returns (p x p unnormalized, p x p normalized) with zero diagonal."""
    X = data.X
    p = X.shape[1]
    bf = forest.box_function(ensemble)
    fa = _frac_all(ensemble, bf, X)
    grids = [pd_grid(X[:, v], grid_size) for v in range(p)]
    one = [_raw_pd(bf, X, (v,), (grids[v],), fa) for v in range(p)]
    H_un, H_norm = np.zeros((p, p)), np.zeros((p, p))
    for j, k in combinations(range(p), 2):
        fjk = _raw_pd(bf, X, (j, k), (grids[j], grids[k]), fa)
        res = _h_from_pds(X, j, k, grids[j], grids[k], one[j], one[k], fjk, X.shape[0])
        H_un[j, k] = H_un[k, j] = res.h_unnormalized
        H_norm[j, k] = H_norm[k, j] = res.h_normalized
    return H_un, H_norm


def friedman_function(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return (10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2
            + 10 * X[:, 3] + 5 * X[:, 4])


def friedman_data(n=250, p=10, noise_sd=1.0, rng=None) -> Dataset:
    """y = 10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5 + N(0, noise_sd^2),
    x_j ~ U(0, 1); columns beyond the fifth are pure noise."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if p < 5:
        raise ValueError(f"Friedman data needs p >= 5, got {p}")
    rng = np.random.default_rng(rng)
    X = rng.uniform(size=(n, p))
    y = friedman_function(X) + noise_sd * rng.standard_normal(n)
    return Dataset(X, y, tuple(ColumnMeta(f"x{i + 1}") for i in range(p)))
