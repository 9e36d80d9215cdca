"""Vectorized evaluation of a posterior sample of tree ensembles.

Two representations are built lazily and cached on the ensemble:

* a flat node table of every retained tree, traversed by a numba kernel to
  give per-iteration predictions;
* a box decomposition of the posterior-mean function: every leaf of every
  retained tree is an axis-aligned box ``prod_v (lo_v, hi_v]`` carrying
  ``scale * mu / K``. Identical boxes are merged, which collapses the many
  iterations in which a tree structure was kept. Partial dependence is exact
  and cheap on this form because a box's indicator factorizes over variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import special

from .core import PosteriorEnsemble, StructureError


@njit(cache=True)
def _traverse(var, split, right, mu, starts, tree_iter, n_iter, X):
    n = X.shape[0]
    out = np.zeros((n_iter, n))
    for t in range(starts.shape[0] - 1):
        s = starts[t]
        k = tree_iter[t]
        for i in range(n):
            node = s
            while var[node] >= 0:
                if X[i, var[node]] <= split[node]:
                    node += 1
                else:
                    node = s + right[node]
            out[k, i] += mu[node]
    return out


@njit(cache=True)
def _box_eval(lo, hi, cvars, nc, w, X):
    n = X.shape[0]
    out = np.zeros(n)
    for b in range(w.shape[0]):
        for i in range(n):
            inside = True
            for c in range(nc[b]):
                v = cvars[b, c]
                x = X[i, v]
                if x <= lo[b, v] or x > hi[b, v]:
                    inside = False
                    break
            if inside:
                out[i] += w[b]
    return out


@njit(cache=True)
def _box_frac(lo, hi, cvars, nc, boxes, excluded, X):
    """Fraction of rows inside each selected box, ignoring excluded variables."""
    n = X.shape[0]
    out = np.zeros(boxes.shape[0])
    for j in range(boxes.shape[0]):
        b = boxes[j]
        hits = 0
        for i in range(n):
            inside = True
            for c in range(nc[b]):
                v = cvars[b, c]
                if excluded[v]:
                    continue
                x = X[i, v]
                if x <= lo[b, v] or x > hi[b, v]:
                    inside = False
                    break
            if inside:
                hits += 1
        out[j] = hits / n
    return out


@dataclass(frozen=True, eq=False)
class FlatForest:
    var: np.ndarray
    split: np.ndarray
    right: np.ndarray  # relative to the tree's start
    mu: np.ndarray
    starts: np.ndarray
    tree_iter: np.ndarray
    n_iter: int


def flat_forest(ens: PosteriorEnsemble) -> FlatForest:
    ff = ens._cache.get("flat")
    if ff is not None:
        return ff
    var, split, right, mu, starts, tree_iter = [], [], [], [], [0], []
    for k, it in enumerate(ens.retained):
        for tree in it.trees:
            var.extend(tree.var)
            split.extend(0.0 if c is None else c for c in tree.split)
            right.extend(tree.right)
            mu.extend(0.0 if x is None else x for x in tree.mu)
            starts.append(len(var))
            tree_iter.append(k)
    ff = FlatForest(np.array(var, dtype=np.int64), np.array(split), np.array(right, dtype=np.int64),
                    np.array(mu), np.array(starts, dtype=np.int64), np.array(tree_iter, dtype=np.int64),
                    ens.K)
    ens._cache["flat"] = ff
    return ff


def _check_X(ens, X):
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != ens.p:
        raise StructureError(f"X must have {ens.p} columns matching the training schema, got shape {X.shape}")
    return X


def latent_draws(ens: PosteriorEnsemble, X) -> np.ndarray:
    """K x n values of ``offset + scale * sum_j mu`` for retained iterations."""
    X = _check_X(ens, X)
    ff = flat_forest(ens)
    sums = _traverse(ff.var, ff.split, ff.right, ff.mu, ff.starts, ff.tree_iter, ff.n_iter, X)
    return ens.y_offset + ens.y_scale * sums


def prediction_draws(ens: PosteriorEnsemble, X) -> np.ndarray:
    eta = latent_draws(ens, X)
    return eta if ens.task == "regression" else special.ndtr(eta)


def _leaf_boxes(tree):
    """Per leaf: tuple of (var, lo, hi) constraints from the root path."""
    out = []

    def walk(t, bounds):
        v = tree.var[t]
        if v < 0:
            out.append((t, tuple(sorted((u, lo, hi) for u, (lo, hi) in bounds.items()))))
            return
        c = tree.split[t]
        lo, hi = bounds.get(v, (-np.inf, np.inf))
        walk(tree.left[t], {**bounds, v: (lo, min(hi, c))})
        walk(tree.right[t], {**bounds, v: (max(lo, c), hi)})

    walk(0, {})
    return out


@dataclass(frozen=True, eq=False)
class BoxFunction:
    """Posterior-mean latent function ``intercept + sum_b w_b 1[x in box_b]``."""

    lo: np.ndarray
    hi: np.ndarray
    cvars: np.ndarray
    nc: np.ndarray
    w: np.ndarray
    intercept: float

    @property
    def n_boxes(self):
        return self.w.shape[0]

    def __call__(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        return self.intercept + _box_eval(self.lo, self.hi, self.cvars, self.nc, self.w, X)

    def touching(self, variables) -> np.ndarray:
        mask = np.zeros(self.n_boxes, dtype=bool)
        for v in variables:
            mask |= (self.cvars == v).any(axis=1)
        return mask

    def fractions(self, X, boxes, excluded) -> np.ndarray:
        ex = np.zeros(self.lo.shape[1], dtype=np.bool_)
        ex[list(excluded)] = True
        return _box_frac(self.lo, self.hi, self.cvars, self.nc, np.asarray(boxes, dtype=np.int64),
                         ex, np.ascontiguousarray(X, dtype=float))


def box_function(ens: PosteriorEnsemble) -> BoxFunction:
    bf = ens._cache.get("boxes")
    if bf is not None:
        return bf
    weight = ens.y_scale / ens.K
    struct_cache: dict = {}
    acc: dict = {}
    for it in ens.retained:
        for tree in it.trees:
            key = (tree.var, tree.split)
            leaves = struct_cache.get(key)
            if leaves is None:
                leaves = struct_cache[key] = _leaf_boxes(tree)
            for t, box in leaves:
                acc[box] = acc.get(box, 0.0) + tree.mu[t]
    intercept = ens.y_offset + weight * acc.pop((), 0.0)
    B, p = len(acc), ens.p
    maxc = max((len(b) for b in acc), default=1)
    lo = np.full((B, p), -np.inf)
    hi = np.full((B, p), np.inf)
    cvars = np.full((B, max(maxc, 1)), -1, dtype=np.int64)
    nc = np.zeros(B, dtype=np.int64)
    w = np.empty(B)
    for b, (box, total) in enumerate(acc.items()):
        for c, (v, l, h) in enumerate(box):
            lo[b, v], hi[b, v], cvars[b, c] = l, h, v
        nc[b] = len(box)
        w[b] = weight * total
    bf = BoxFunction(lo, hi, cvars, nc, w, intercept)
    ens._cache["boxes"] = bf
    return bf
