"""Data model for BART posteriors: datasets, tree draws, routing and the tree dump.

Trees are stored as flat preorder node arrays (tuples) so a draw is cheap to
share between MCMC iterations and serializes linearly. For an internal node
``t`` the left child is always ``t + 1``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

MOVE_KINDS = ("grow", "prune", "change", "swap")
TASKS = ("regression", "classification")
DUMP_FORMAT = "bart-tree-dump"
DUMP_VERSION = 1


class StructureError(ValueError):
    """A tree or dataset violates its structural invariants."""


class DumpFormatError(ValueError):
    """The tree dump is malformed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# --------------------------------------------------------------------------
# Dataset


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    kind: str = "numeric"  # "numeric" or "dummy"
    parent_factor: str | None = None
    level_label: str | None = None

    def to_json(self):
        return {
            "name": self.name,
            "kind": self.kind,
            "parent_factor": self.parent_factor,
            "level_label": self.level_label,
        }

    @classmethod
    def from_json(cls, d):
        return cls(d["name"], d.get("kind", "numeric"), d.get("parent_factor"), d.get("level_label"))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Predictor matrix with per-column metadata and a response vector.

    Factor columns are expanded to one 0/1 dummy column per level before
    they reach this type; ``factor_map`` recovers the grouping.
    """

    X: np.ndarray
    y: np.ndarray
    columns: tuple[ColumnMeta, ...]
    response_name: str = "y"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        cols = tuple(c if isinstance(c, ColumnMeta) else ColumnMeta(str(c)) for c in self.columns)
        if X.ndim != 2:
            raise StructureError(f"X must be 2-D, got shape {X.shape}")
        n, p = X.shape
        if n < 2 or p < 1:
            raise StructureError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if y.shape != (n,):
            raise StructureError(f"y has shape {y.shape}, expected ({n},)")
        if len(cols) != p:
            raise StructureError(f"{len(cols)} column names for {p} columns")
        names = [c.name for c in cols]
        if len(set(names)) != p:
            raise StructureError("column names must be unique")
        for fac, idx in _factor_groups(cols).items():
            block = X[:, idx]
            if not np.isin(block, (0.0, 1.0)).all():
                raise StructureError(f"dummy columns of factor {fac!r} must be 0/1")
            if (block.sum(axis=1) > 1).any():
                raise StructureError(f"dummy columns of factor {fac!r} are not mutually exclusive")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "columns", cols)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def names(self):
        return [c.name for c in self.columns]

    @property
    def factor_map(self) -> dict[str, list[int]]:
        """Factor name -> indices of its dummy columns."""
        return _factor_groups(self.columns)

    @classmethod
    def from_frame(cls, columns: dict, y, factors: Iterable[str] = (), response_name="y"):
        """Build from a name -> values mapping, expanding the named factors."""
        factors = set(factors)
        unknown = factors - set(columns)
        if unknown:
            raise StructureError(f"unknown factor columns: {sorted(unknown)}")
        blocks, metas = [], []
        for name, values in columns.items():
            if name in factors:
                values = [str(v) for v in values]
                for level in sorted(set(values)):
                    blocks.append(np.array([v == level for v in values], dtype=float))
                    metas.append(ColumnMeta(f"{name}={level}", "dummy", name, level))
            else:
                try:
                    blocks.append(np.asarray(values, dtype=float))
                except ValueError as exc:
                    raise StructureError(f"column {name!r} is not numeric; declare it as a factor") from exc
                metas.append(ColumnMeta(name))
        return cls(np.column_stack(blocks), np.asarray(y, dtype=float), tuple(metas), response_name)

    @classmethod
    def from_csv(cls, path, factors: Iterable[str] = (), response: str | None = None):
        """Read a CSV with a header row. The response defaults to column ``y``
        when present, else the last column."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise StructureError(f"{path}: empty CSV")
        header, body = rows[0], rows[1:]
        if response is None:
            response = "y" if "y" in header else header[-1]
        if response not in header:
            raise StructureError(f"{path}: response column {response!r} not found")
        for i, r in enumerate(body, start=2):
            if len(r) != len(header):
                raise StructureError(f"{path}: line {i} has {len(r)} fields, expected {len(header)}")
        cols = {h: [r[i] for r in body] for i, h in enumerate(header)}
        yraw = cols.pop(response)
        try:
            y = np.array(yraw, dtype=float)
        except ValueError as exc:
            raise StructureError(f"{path}: response column {response!r} is not numeric") from exc
        return cls.from_frame(cols, y, factors, response_name=response)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.names + [self.response_name])
            for row, yi in zip(self.X.tolist(), self.y.tolist()):
                w.writerow([repr(v) for v in row] + [repr(yi)])


def _factor_groups(columns: Sequence[ColumnMeta]) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = {}
    for i, c in enumerate(columns):
        if c.kind == "dummy":
            groups.setdefault(c.parent_factor or c.name, []).append(i)
    return groups


# --------------------------------------------------------------------------
# Trees


@dataclass(frozen=True)
class TreeNode:
    id: int
    parent: int | None
    left: int | None
    right: int | None
    split_var: int | None
    split_value: float | None
    mu: float | None
    depth: int

    @property
    def is_leaf(self):
        return self.left is None


@dataclass(frozen=True)
class TreeDraw:
    """One sampled tree, nodes in preorder with ``nodes[0]`` the root.

    ``var[t] == -1`` marks a terminal node; ``split`` is ``None`` there and
    ``mu`` is ``None`` on internal nodes.
    """

    left: tuple[int, ...]
    right: tuple[int, ...]
    var: tuple[int, ...]
    split: tuple[float | None, ...]
    mu: tuple[float | None, ...]
    tree_index: int = 1
    iteration: int = 0
    move: str = "grow"
    accepted: bool = False
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def stump(cls, mu=0.0, **kw):
        return cls((-1,), (-1,), (-1,), (None,), (float(mu),), **kw)

    @classmethod
    def from_nested(cls, spec, **kw):
        """Build from a nested spec: a float is a leaf ``mu``; an internal node
        is ``(var, split, left_spec, right_spec)``."""
        left, right, var, split, mu = [], [], [], [], []

        def visit(s):
            t = len(var)
            left.append(-1), right.append(-1)
            if isinstance(s, tuple):
                v, c, ls, rs = s
                var.append(int(v)), split.append(float(c)), mu.append(None)
                left[t] = visit(ls)
                right[t] = visit(rs)
            else:
                var.append(-1), split.append(None), mu.append(float(s))
            return t

        visit(spec)
        tree = cls(tuple(left), tuple(right), tuple(var), tuple(split), tuple(mu), **kw)
        tree.check()
        return tree

    def check(self):
        """Validate the preorder binary-tree invariants."""
        k = len(self.var)
        if not (len(self.left) == len(self.right) == len(self.split) == len(self.mu) == k) or k == 0:
            raise StructureError("node arrays have inconsistent lengths")
        seen = [False] * k
        stack = [0]
        while stack:
            t = stack.pop()
            if not 0 <= t < k or seen[t]:
                raise StructureError(f"node {t} is out of range or reached twice")
            seen[t] = True
            internal = self.var[t] >= 0
            if internal:
                if self.left[t] < 0 or self.right[t] < 0 or self.split[t] is None or self.mu[t] is not None:
                    raise StructureError(f"internal node {t} is incomplete")
                if self.left[t] != t + 1:
                    raise StructureError(f"node {t} breaks preorder layout")
                stack += [self.right[t], self.left[t]]
            elif self.left[t] != -1 or self.right[t] != -1 or self.split[t] is not None or self.mu[t] is None:
                raise StructureError(f"terminal node {t} is malformed")
        if not all(seen):
            raise StructureError("node arrays contain unreachable nodes")

    # --- structure helpers

    @property
    def n_nodes(self):
        return len(self.var)

    @property
    def is_stump(self):
        return self.var[0] < 0

    @property
    def parent(self) -> tuple[int, ...]:
        c = self._cache
        if "parent" not in c:
            par = [-1] * len(self.var)
            for t, v in enumerate(self.var):
                if v >= 0:
                    par[self.left[t]] = t
                    par[self.right[t]] = t
            c["parent"] = tuple(par)
        return c["parent"]

    @property
    def depths(self) -> tuple[int, ...]:
        c = self._cache
        if "depths" not in c:
            d = [0] * len(self.var)
            for t, v in enumerate(self.var):  # preorder: parents first
                if v >= 0:
                    d[self.left[t]] = d[self.right[t]] = d[t] + 1
            c["depths"] = tuple(d)
        return c["depths"]

    @property
    def leaves(self) -> list[int]:
        return [t for t, v in enumerate(self.var) if v < 0]

    @property
    def internals(self) -> list[int]:
        return [t for t, v in enumerate(self.var) if v >= 0]

    @property
    def nodes(self) -> list[TreeNode]:
        par, dep = self.parent, self.depths
        out = []
        for t, v in enumerate(self.var):
            internal = v >= 0
            out.append(
                TreeNode(
                    t,
                    par[t] if par[t] >= 0 else None,
                    self.left[t] if internal else None,
                    self.right[t] if internal else None,
                    v if internal else None,
                    self.split[t],
                    self.mu[t],
                    dep[t],
                )
            )
        return out

    def subtree(self, t) -> range:
        """Preorder span of the subtree rooted at ``t``."""
        end, pending = t, 1
        while pending:
            pending -= 1
            if self.var[end] >= 0:
                pending += 2
            end += 1
        return range(t, end)

    def with_mu(self, mu: Sequence[float | None]) -> "TreeDraw":
        return replace(self, mu=tuple(mu), _cache={})

    def nested(self, t=0):
        """Inverse of :meth:`from_nested`."""
        if self.var[t] < 0:
            return self.mu[t]
        return (self.var[t], self.split[t], self.nested(self.left[t]), self.nested(self.right[t]))


def depth_of(tree: TreeDraw) -> int:
    return max(tree.depths)


def node_count(tree: TreeDraw) -> int:
    return tree.n_nodes


def canonical_key(tree: TreeDraw) -> str:
    """Topology plus split variables, e.g. ``V3(T,V0(T,T))``; ``S`` for a stump."""
    if tree.is_stump:
        return "S"

    def enc(t):
        if tree.var[t] < 0:
            return "T"
        return f"V{tree.var[t]}({enc(tree.left[t])},{enc(tree.right[t])})"

    return enc(0)


def route_observations(tree: TreeDraw, data) -> list[np.ndarray]:
    """Row indices reaching every node. Rows with ``x[var] <= split`` go left."""
    X = data.X if isinstance(data, Dataset) else np.asarray(data, dtype=float)
    n, p = X.shape
    rows: list[np.ndarray] = [None] * tree.n_nodes  # type: ignore[list-item]
    rows[0] = np.arange(n)
    for t, v in enumerate(tree.var):
        if v < 0:
            continue
        if v >= p:
            raise StructureError(f"node {t} splits on column {v}, data has {p} columns")
        r = rows[t]
        go_left = X[r, v] <= tree.split[t]
        rows[tree.left[t]] = r[go_left]
        rows[tree.right[t]] = r[~go_left]
    if isinstance(data, Dataset):
        tree._cache[("counts", id(data))] = tuple(len(r) for r in rows)
    return rows


def node_counts(tree: TreeDraw, data: Dataset) -> tuple[int, ...]:
    key = ("counts", id(data))
    if key not in tree._cache:
        route_observations(tree, data)
    return tree._cache[key]


def leaf_assignment(tree: TreeDraw, X: np.ndarray) -> np.ndarray:
    """Terminal node id for every row of ``X``."""
    out = np.empty(X.shape[0], dtype=np.intp)
    for t, r in enumerate(route_observations(tree, X)):
        if tree.var[t] < 0:
            out[r] = t
    return out


# --------------------------------------------------------------------------
# Posterior containers


@dataclass(frozen=True)
class IterationDraw:
    trees: tuple[TreeDraw, ...]
    sigma: float = 1.0
    resid_sd: float | None = None

    @property
    def accepted_count(self):
        return sum(t.accepted for t in self.trees)


@dataclass(frozen=True)
class PosteriorEnsemble:
    """Every MCMC iteration (burn-in included) plus what is needed to map the
    sum of trees back to the response scale: ``offset + scale * sum(mu)``."""

    iterations: tuple[IterationDraw, ...]
    burn_in: int
    m: int
    task: str
    columns: tuple[ColumnMeta, ...]
    y_offset: float = 0.0
    y_scale: float = 1.0
    data: Dataset | None = field(default=None, compare=False, repr=False)
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.task not in TASKS:
            raise StructureError(f"unknown task {self.task!r}")
        if not 0 <= self.burn_in < len(self.iterations):
            raise StructureError(
                f"burn-in {self.burn_in} leaves no retained draws out of {len(self.iterations)}"
            )
        for k, it in enumerate(self.iterations):
            if len(it.trees) != self.m:
                raise StructureError(f"iteration {k} has {len(it.trees)} trees, expected {self.m}")

    @property
    def total_iters(self):
        return len(self.iterations)

    @property
    def K(self):
        return len(self.iterations) - self.burn_in

    @property
    def retained(self) -> tuple[IterationDraw, ...]:
        return self.iterations[self.burn_in:]

    @property
    def sigma_trace(self) -> np.ndarray:
        return np.array([it.sigma for it in self.iterations])

    @property
    def p(self):
        return len(self.columns)

    @property
    def names(self):
        return [c.name for c in self.columns]

    def with_data(self, data: Dataset) -> "PosteriorEnsemble":
        if data.names != self.names:
            raise StructureError("dataset columns do not match the ensemble's training schema")
        return replace(self, data=data, _cache={})

    def require_data(self) -> Dataset:
        if self.data is None:
            raise StructureError("this analysis needs the training data; attach it with with_data()")
        return self.data


# --------------------------------------------------------------------------
# Tree dump: one JSON header line, then one line per tree draw.


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def write_dump(ensemble: PosteriorEnsemble, path) -> None:
    header = {
        "format": DUMP_FORMAT,
        "version": DUMP_VERSION,
        "task": ensemble.task,
        "m": ensemble.m,
        "total_iters": ensemble.total_iters,
        "burn_in": ensemble.burn_in,
        "y_offset": ensemble.y_offset,
        "y_scale": ensemble.y_scale,
        "columns": [c.to_json() for c in ensemble.columns],
    }
    with open(path, "w") as fh:
        fh.write(_dumps(header) + "\n")
        for k, it in enumerate(ensemble.iterations):
            for j, tree in enumerate(it.trees):
                par = tree.parent
                nodes = [
                    {
                        "id": t,
                        "parent": par[t] if par[t] >= 0 else None,
                        "var": tree.var[t] if tree.var[t] >= 0 else None,
                        "split": tree.split[t],
                        "mu": tree.mu[t],
                    }
                    for t in range(tree.n_nodes)
                ]
                rec = {"iter": k, "tree": tree.tree_index, "nodes": nodes,
                       "accepted": tree.accepted, "move": tree.move}
                if j == 0:
                    rec["sigma"] = it.sigma
                    if it.resid_sd is not None:
                        rec["resid_sd"] = it.resid_sd
                fh.write(_dumps(rec) + "\n")


def _tree_from_records(nodes, lineno, **kw) -> TreeDraw:
    k = len(nodes)
    if k == 0:
        raise DumpFormatError("tree has no nodes", lineno)
    if [nd.get("id") for nd in nodes] != list(range(k)):
        raise DumpFormatError("node ids must be 0..k-1 in preorder", lineno)
    left, right = [-1] * k, [-1] * k
    for nd in nodes:
        par = nd.get("parent")
        if par is None:
            if nd["id"] != 0:
                raise DumpFormatError(f"node {nd['id']} has no parent", lineno)
            continue
        if not (isinstance(par, int) and 0 <= par < k):
            raise DumpFormatError(f"node {nd['id']} has invalid parent {par!r}", lineno)
        if left[par] == -1:
            left[par] = nd["id"]
        elif right[par] == -1:
            right[par] = nd["id"]
        else:
            raise DumpFormatError(f"node {par} has more than two children", lineno)
    var = tuple(-1 if nd.get("var") is None else int(nd["var"]) for nd in nodes)
    split = tuple(None if nd.get("split") is None else float(nd["split"]) for nd in nodes)
    mu = tuple(None if nd.get("mu") is None else float(nd["mu"]) for nd in nodes)
    tree = TreeDraw(tuple(left), tuple(right), var, split, mu, **kw)
    try:
        tree.check()
    except StructureError as exc:
        raise DumpFormatError(str(exc), lineno) from exc
    return tree


def iter_dump(path) -> Iterator[tuple[int, dict]]:
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DumpFormatError(f"invalid JSON ({exc.msg})", lineno) from exc


def read_dump(path, data: Dataset | None = None) -> PosteriorEnsemble:
    records = iter_dump(path)
    try:
        lineno, header = next(records)
    except StopIteration:
        raise DumpFormatError("empty dump file", 1) from None
    if header.get("format") != DUMP_FORMAT:
        raise DumpFormatError(f"not a {DUMP_FORMAT} file", lineno)
    try:
        m, total, task = int(header["m"]), int(header["total_iters"]), header["task"]
        burn_in = int(header["burn_in"])
        columns = tuple(ColumnMeta.from_json(c) for c in header["columns"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DumpFormatError(f"bad header ({exc})", lineno) from exc

    iterations: list[IterationDraw] = []
    trees: list[TreeDraw] = []
    sigma, resid_sd = 1.0, None

    def close_iteration(lineno):
        if len(trees) != m:
            raise DumpFormatError(
                f"iteration {len(iterations)} has {len(trees)} trees, header says m={m}", lineno)
        iterations.append(IterationDraw(tuple(trees), sigma, resid_sd))
        trees.clear()

    last = lineno
    for lineno, rec in records:
        last = lineno
        try:
            k, j, nodes = int(rec["iter"]), int(rec["tree"]), rec["nodes"]
            move, accepted = rec["move"], bool(rec["accepted"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DumpFormatError(f"malformed tree record ({exc})", lineno) from exc
        if k == len(iterations) + 1 and len(trees) == m:
            close_iteration(lineno)
        if k != len(iterations):
            raise DumpFormatError(f"unexpected iteration {k}", lineno)
        if j != len(trees) + 1:
            raise DumpFormatError(f"unexpected tree index {j} in iteration {k}", lineno)
        if move not in MOVE_KINDS:
            raise DumpFormatError(f"unknown move {move!r}", lineno)
        if not trees:
            if "sigma" not in rec:
                raise DumpFormatError("first tree of an iteration must carry sigma", lineno)
            sigma = float(rec["sigma"])
            resid_sd = None if rec.get("resid_sd") is None else float(rec["resid_sd"])
        trees.append(_tree_from_records(nodes, lineno, tree_index=j, iteration=k,
                                        move=move, accepted=accepted))
    if trees:
        close_iteration(last)
    if len(iterations) != total:
        raise DumpFormatError(f"found {len(iterations)} iterations, header says {total} (truncated?)", last)
    try:
        ens = PosteriorEnsemble(tuple(iterations), burn_in, m, task, columns,
                                float(header.get("y_offset", 0.0)), float(header.get("y_scale", 1.0)))
    except StructureError as exc:
        raise DumpFormatError(str(exc), 1) from exc
    return ens.with_data(data) if data is not None else ens
