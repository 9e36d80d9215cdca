"""Desk-scale BART sampler (regression and probit classification).

Each MCMC iteration updates the m trees in index order against partial
residuals with a Metropolis-Hastings step on the tree structure (leaf values
integrated out), redraws the leaf values from their conditional normal
posterior, and finally redraws sigma^2 (regression) or the latent normals
(classification). Every tree draw is kept.

The prior on splitting rules is uniform over (available variable, cut point),
which is exactly the distribution the grow/change proposals draw rules from,
so those factors cancel and neither the prior nor the proposal ratio
carries them.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .core import (
    Dataset,
    IterationDraw,
    PosteriorEnsemble,
    StructureError,
    TreeDraw,
    leaf_assignment,
)

log = logging.getLogger(__name__)

DEFAULT_MOVE_PROBS = (0.25, 0.25, 0.40, 0.10)  # grow, prune, change, swap
_KINDS = ("grow", "prune", "change", "swap")


@dataclass(frozen=True)
class SamplerConfig:
    m: int = 200
    total_iters: int = 1000
    burn_in: int = 100
    alpha: float = 0.95
    beta: float = 2.0
    kappa: float = 2.0
    nu: float = 3.0
    q: float = 0.90
    move_probs: tuple[float, float, float, float] = DEFAULT_MOVE_PROBS
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "move_probs", tuple(float(x) for x in self.move_probs))
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if not 0 <= self.burn_in < self.total_iters:
            raise ValueError(f"need 0 <= burn_in < total_iters, got {self.burn_in}, {self.total_iters}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.kappa <= 0 or self.nu <= 0 or not 0 < self.q < 1:
            raise ValueError("kappa and nu must be positive and q in (0, 1)")
        if len(self.move_probs) != 4 or min(self.move_probs) < 0 or abs(sum(self.move_probs) - 1) > 1e-9:
            raise ValueError(f"move_probs must be 4 non-negative weights summing to 1, got {self.move_probs}")


@dataclass(frozen=True, eq=False)
class FitReport:
    ensemble: PosteriorEnsemble
    accept_rate: np.ndarray  # per iteration, burn-in included
    avg_depth: np.ndarray
    avg_nodes: np.ndarray
    sigma_trace: np.ndarray
    fitted: np.ndarray  # K x n on the response scale (probabilities for classification)
    runtime: float = field(default=0.0)

    def to_json(self):
        ens = self.ensemble
        return {
            "task": ens.task,
            "m": ens.m,
            "total_iters": ens.total_iters,
            "burn_in": ens.burn_in,
            "accept_rate": self.accept_rate.tolist(),
            "avg_depth": self.avg_depth.tolist(),
            "avg_nodes": self.avg_nodes.tolist(),
            "sigma_trace": self.sigma_trace.tolist(),
            "mean_accept_rate": float(self.accept_rate.mean()),
            "final_sigma": float(self.sigma_trace[-1]),
            "posterior_mean_sigma": float(self.sigma_trace[ens.burn_in:].mean()),
        }


# --------------------------------------------------------------------------
# Likelihood and prior


def log_marginal_likelihood(node_residuals, sigma, sigma_mu) -> float:
    """Sum over leaves of log integral N(r | mu 1, sigma^2 I) N(mu | 0, sigma_mu^2) dmu."""
    if not (sigma > 0 and sigma_mu > 0):
        raise ValueError(f"variances must be positive, got sigma={sigma}, sigma_mu={sigma_mu}")
    s2, t2 = sigma * sigma, sigma_mu * sigma_mu
    total = 0.0
    for r in node_residuals:
        r = np.asarray(r, dtype=float)
        n = r.size
        if n == 0:
            continue
        S, SS = r.sum(), r @ r
        denom = s2 + n * t2
        total += (-0.5 * n * math.log(2 * math.pi * s2) - SS / (2 * s2)
                  + 0.5 * math.log(s2 / denom) + t2 * S * S / (2 * s2 * denom))
    return total


def _leaf_loglik(cnt, S, s2, t2):
    """Leaf terms of the marginal likelihood that vary with the partition;
    the sum-of-squares and normalizing terms cancel in every MH ratio."""
    denom = s2 + cnt * t2
    return float(np.sum(0.5 * np.log(s2 / denom) + t2 * S * S / (2 * s2 * denom)))


def _p_split(depth, alpha, beta):
    return alpha * (1.0 + depth) ** (-beta)


def log_tree_prior(tree: TreeDraw, alpha: float, beta: float) -> float:
    total = 0.0
    for v, d in zip(tree.var, tree.depths):
        ps = _p_split(d, alpha, beta)
        total += math.log(ps) if v >= 0 else math.log1p(-ps)
    return total


# --------------------------------------------------------------------------
# Proposals


@dataclass(frozen=True)
class Proposal:
    tree: TreeDraw
    kind: str
    log_ratio: float  # log q(reverse) - log q(forward); -inf when no valid rule exists


def _swap_pairs(tree: TreeDraw) -> list[tuple[int, int]]:
    out = []
    for t, v in enumerate(tree.var):
        if v >= 0:
            for c in (tree.left[t], tree.right[t]):
                if tree.var[c] >= 0:
                    out.append((t, c))
    return out


def _prunable(tree: TreeDraw) -> list[int]:
    return [t for t, v in enumerate(tree.var)
            if v >= 0 and tree.var[t + 1] < 0 and tree.var[tree.right[t]] < 0]


def move_weights(tree: TreeDraw, probs=DEFAULT_MOVE_PROBS) -> np.ndarray:
    """Move-kind probabilities renormalized over the moves feasible for ``tree``."""
    w = np.array(probs, dtype=float)
    if tree.is_stump:
        w[1:] = 0.0
    elif not any(tree.var[c] >= 0 for t in tree.internals for c in (tree.left[t], tree.right[t])):
        w[3] = 0.0
    return w / w.sum()


def _choose_rule(X, rows, rng):
    """Uniform variable among those with >= 2 distinct values in ``rows``, then a
    uniform cut among its distinct values except the largest (both sides non-empty)."""
    if rows.size < 2:
        return None
    for v in rng.permutation(X.shape[1]):
        vals = np.unique(X[rows, v])
        if vals.size >= 2:
            return int(v), float(vals[rng.integers(vals.size - 1)])
    return None


def _rows_in(tree: TreeDraw, t: int, leaf_of: np.ndarray) -> np.ndarray:
    span = tree.subtree(t)
    return np.flatnonzero((leaf_of >= span.start) & (leaf_of < span.stop))


def grow_tree(tree: TreeDraw, t: int, v: int, c: float) -> TreeDraw:
    def sh(u):
        return u + 2 if u > t else u

    left = [sh(u) if u >= 0 else -1 for u in tree.left]
    right = [sh(u) if u >= 0 else -1 for u in tree.right]
    var, split, mu = list(tree.var), list(tree.split), list(tree.mu)
    left[t], right[t], var[t], split[t], mu[t] = t + 1, t + 2, v, c, None
    left[t + 1:t + 1] = [-1, -1]
    right[t + 1:t + 1] = [-1, -1]
    var[t + 1:t + 1] = [-1, -1]
    split[t + 1:t + 1] = [None, None]
    mu[t + 1:t + 1] = [0.0, 0.0]
    return TreeDraw(tuple(left), tuple(right), tuple(var), tuple(split), tuple(mu), tree.tree_index)


def prune_tree(tree: TreeDraw, t: int) -> TreeDraw:
    def sh(u):
        return u - 2 if u > t + 2 else u

    left = [sh(u) if u >= 0 else -1 for u in tree.left]
    right = [sh(u) if u >= 0 else -1 for u in tree.right]
    var, split, mu = list(tree.var), list(tree.split), list(tree.mu)
    for arr in (left, right, var, split, mu):
        del arr[t + 1:t + 3]
    left[t], right[t], var[t], split[t], mu[t] = -1, -1, -1, None, 0.0
    return TreeDraw(tuple(left), tuple(right), tuple(var), tuple(split), tuple(mu), tree.tree_index)


def _with_rules(tree: TreeDraw, rules: dict) -> TreeDraw:
    var, split = list(tree.var), list(tree.split)
    for t, (v, c) in rules.items():
        var[t], split[t] = v, c
    return TreeDraw(tree.left, tree.right, tuple(var), tuple(split), tree.mu, tree.tree_index)


def propose_move(tree: TreeDraw, data, rng, *, leaf_of=None, move_probs=DEFAULT_MOVE_PROBS,
                 kind: str | None = None) -> Proposal:
    """Propose a grow, prune, change or swap of ``tree``.

    A requested ``kind`` that is infeasible for this tree (prune on a stump,
    swap without a parent-child pair of internal nodes) is resampled among
    the feasible kinds.
    """
    X = data.X if isinstance(data, Dataset) else data
    if leaf_of is None:
        leaf_of = leaf_assignment(tree, X)
    w = move_weights(tree, move_probs)
    if kind is None or w[_KINDS.index(kind)] == 0:
        kind = _KINDS[int(rng.choice(4, p=w))]

    if kind == "grow":
        leaves = tree.leaves
        t = leaves[rng.integers(len(leaves))]
        rule = _choose_rule(X, np.flatnonzero(leaf_of == t), rng)
        if rule is None:
            return Proposal(tree, kind, -math.inf)
        cand = grow_tree(tree, t, *rule)
        w_new = move_weights(cand, move_probs)
        lr = math.log(w_new[1] / len(_prunable(cand))) - math.log(w[0] / len(leaves))
        return Proposal(cand, kind, lr)

    if kind == "prune":
        nog = _prunable(tree)
        t = nog[rng.integers(len(nog))]
        cand = prune_tree(tree, t)
        w_new = move_weights(cand, move_probs)
        lr = math.log(w_new[0] / len(cand.leaves)) - math.log(w[1] / len(nog))
        return Proposal(cand, kind, lr)

    if kind == "change":
        internals = tree.internals
        t = internals[rng.integers(len(internals))]
        rule = _choose_rule(X, _rows_in(tree, t, leaf_of), rng)
        if rule is None:
            return Proposal(tree, kind, -math.inf)
        return Proposal(_with_rules(tree, {t: rule}), kind, 0.0)

    pairs = _swap_pairs(tree)
    t, c = pairs[rng.integers(len(pairs))]
    rules = {t: (tree.var[c], tree.split[c]), c: (tree.var[t], tree.split[t])}
    return Proposal(_with_rules(tree, rules), kind, 0.0)


# --------------------------------------------------------------------------
# The chain


def _cached_prior(tree: TreeDraw, alpha, beta):
    lp = tree._cache.get("log_prior")
    if lp is None:
        lp = tree._cache["log_prior"] = log_tree_prior(tree, alpha, beta)
    return lp


def _snapshot(tree: TreeDraw, mu: np.ndarray, k: int, kind: str, accepted: bool) -> TreeDraw:
    mus = tuple(None if v >= 0 else float(x) for v, x in zip(tree.var, mu.tolist()))
    return TreeDraw(tree.left, tree.right, tree.var, tree.split, mus, tree.tree_index, k, kind, accepted)


def _check_splittable(X):
    if not any(np.unique(X[:, v]).size >= 2 for v in range(X.shape[1])):
        raise StructureError("no column has two distinct values; no valid split exists")


def fit(data: Dataset, cfg: SamplerConfig, task: str = "regression") -> FitReport:
    if task == "regression":
        return fit_regression(data, cfg)
    if task == "classification":
        return fit_classification(data, cfg)
    raise ValueError(f"unknown task {task!r}")


def fit_regression(data: Dataset, cfg: SamplerConfig) -> FitReport:
    y = data.y
    lo, hi = float(y.min()), float(y.max())
    if hi <= lo:
        raise ValueError("response is constant; cannot rescale")
    offset, scale = (hi + lo) / 2, hi - lo
    return _run(data, cfg, "regression", (y - offset) / scale, offset, scale)


def fit_classification(data: Dataset, cfg: SamplerConfig) -> FitReport:
    y = data.y
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("classification response must be coded 0/1")
    ybar = y.mean()
    if ybar in (0.0, 1.0):
        raise ValueError("classification response has a single class")
    return _run(data, cfg, "classification", y, float(special.ndtri(ybar)), 1.0)


def _run(data, cfg, task, target, offset, scale) -> FitReport:
    X = data.X
    n = X.shape[0]
    _check_splittable(X)
    rng = np.random.default_rng(cfg.seed)
    m, alpha, beta = cfg.m, cfg.alpha, cfg.beta
    regression = task == "regression"

    if regression:
        tau = 0.5 / (cfg.kappa * math.sqrt(m))
        sd_hat = float(np.std(target, ddof=1))
        # lambda such that P(sigma < sd_hat) = q under sigma^2 ~ nu*lambda / chi2_nu
        lam = sd_hat**2 * stats.chi2.ppf(1 - cfg.q, cfg.nu) / cfg.nu
        s2 = sd_hat**2
        z = target
    else:
        tau = 3.0 / (cfg.kappa * math.sqrt(m))
        s2 = 1.0
        is_one = target == 1.0
        z = stats.truncnorm.rvs(np.where(is_one, -offset, -np.inf), np.where(is_one, np.inf, -offset),
                                loc=offset, scale=1.0, random_state=rng)
    t2 = tau * tau

    trees = [TreeDraw.stump(0.0, tree_index=j + 1) for j in range(m)]
    leaf_of = [np.zeros(n, dtype=np.intp) for _ in range(m)]
    tree_fit = np.zeros((m, n))
    fit_sum = np.zeros(n)

    total = cfg.total_iters
    accept_rate = np.empty(total)
    avg_depth = np.empty(total)
    avg_nodes = np.empty(total)
    sigma_trace = np.empty(total)
    fitted = np.empty((total - cfg.burn_in, n))
    iterations = []
    start = time.perf_counter()

    for k in range(total):
        latent = z - offset if not regression else z
        draws = []
        for j in range(m):
            tree = trees[j]
            resid = latent - (fit_sum - tree_fit[j])
            prop = propose_move(tree, X, rng, leaf_of=leaf_of[j], move_probs=cfg.move_probs)
            accepted = False
            cur_leaf = leaf_of[j]
            if prop.log_ratio > -math.inf:
                cand = prop.tree
                cand_leaf = leaf_assignment(cand, X)
                k_old, k_new = tree.n_nodes, cand.n_nodes
                ll_old = _leaf_loglik(np.bincount(cur_leaf, minlength=k_old),
                                      np.bincount(cur_leaf, weights=resid, minlength=k_old), s2, t2)
                ll_new = _leaf_loglik(np.bincount(cand_leaf, minlength=k_new),
                                      np.bincount(cand_leaf, weights=resid, minlength=k_new), s2, t2)
                log_a = (ll_new - ll_old + _cached_prior(cand, alpha, beta)
                         - _cached_prior(tree, alpha, beta) + prop.log_ratio)
                if math.log(rng.random()) < log_a:
                    accepted = True
                    tree, cur_leaf = cand, cand_leaf
                    trees[j], leaf_of[j] = cand, cand_leaf
            else:
                rng.random()  # keep the stream aligned with the accept/reject branch
            # leaf values from their conditional posterior
            kn = tree.n_nodes
            cnt = np.bincount(cur_leaf, minlength=kn)
            S = np.bincount(cur_leaf, weights=resid, minlength=kn)
            post_var = 1.0 / (cnt / s2 + 1.0 / t2)
            mu = post_var * S / s2 + np.sqrt(post_var) * rng.standard_normal(kn)
            new_fit = mu[cur_leaf]
            fit_sum += new_fit - tree_fit[j]
            tree_fit[j] = new_fit
            draws.append(_snapshot(tree, mu, k, prop.kind, accepted))
        fit_sum = tree_fit.sum(axis=0)

        if regression:
            sse = float(np.sum((z - fit_sum) ** 2))
            s2 = (cfg.nu * lam + sse) / 2 / rng.gamma((cfg.nu + n) / 2)
            sigma, resid_sd = math.sqrt(s2) * scale, None
        else:
            mean = offset + fit_sum
            a = np.where(is_one, -mean, -np.inf)
            b = np.where(is_one, np.inf, -mean)
            z = stats.truncnorm.rvs(a, b, loc=mean, scale=1.0, random_state=rng)
            sigma, resid_sd = 1.0, float(np.std(z - mean, ddof=1))

        it = IterationDraw(tuple(draws), sigma, resid_sd)
        iterations.append(it)
        accept_rate[k] = it.accepted_count / m
        avg_depth[k] = np.mean([max(t.depths) for t in draws])
        avg_nodes[k] = np.mean([t.n_nodes for t in draws])
        sigma_trace[k] = sigma
        if k >= cfg.burn_in:
            eta = offset + scale * fit_sum
            fitted[k - cfg.burn_in] = eta if regression else special.ndtr(eta)
        if (k + 1) % 200 == 0:
            log.debug("iteration %d/%d, accept %.2f, sigma %.4g", k + 1, total, accept_rate[k], sigma)

    ens = PosteriorEnsemble(tuple(iterations), cfg.burn_in, m, task, data.columns,
                            offset, scale, data=data)
    return FitReport(ens, accept_rate, avg_depth, avg_nodes, sigma_trace, fitted,
                     time.perf_counter() - start)
