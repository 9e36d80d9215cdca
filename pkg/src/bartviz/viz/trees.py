"""Icicle drawings of trees and the tree-type frequency barplot."""

from __future__ import annotations

import math
import re
from collections import Counter

import numpy as np
from matplotlib.collections import PatchCollection
from matplotlib.patches import Patch, Rectangle

from ..core import TreeDraw, canonical_key, route_observations
from . import palettes as pal
from .spec import PlotSpec, drawer, fmt, render

MODES = ("splitVariable", "meanResponse", "muValue", "highlight")
SORTS = {"none": "none", "freq": "freq", "byTypeFrequency": "freq", "depth": "depth", "byDepth": "depth"}


def parse_key(key: str):
    """Inverse of :func:`~bartviz.core.canonical_key` as a nested structure:
    ``None`` for a leaf, ``(var, left, right)`` for a split."""
    if key == "S":
        return None
    pos = 0

    def node():
        nonlocal pos
        if key.startswith("T", pos):
            pos += 1
            return None
        m = re.compile(r"V(\d+)\(").match(key, pos)
        if not m:
            raise ValueError(f"malformed tree key {key!r} at {pos}")
        pos = m.end()
        left = node()
        if key[pos:pos + 1] != ",":
            raise ValueError(f"malformed tree key {key!r} at {pos}")
        pos += 1
        right = node()
        if key[pos:pos + 1] != ")":
            raise ValueError(f"malformed tree key {key!r} at {pos}")
        pos += 1
        return int(m.group(1)), left, right

    out = node()
    if pos != len(key):
        raise ValueError(f"trailing characters in tree key {key!r}")
    return out


def _tree_payload(tree: TreeDraw, label, data=None) -> dict:
    d = {"label": label, "key": canonical_key(tree), "var": list(tree.var), "left": list(tree.left),
         "right": list(tree.right), "split": list(tree.split), "mu": list(tree.mu),
         "depth": max(tree.depths)}
    if data is not None:
        rows = route_observations(tree, data)
        d["count"] = [int(r.size) for r in rows]
        d["mean_y"] = [float(data.y[r].mean()) if r.size else None for r in rows]
    return d


def icicle_layout(tree: dict, equal=False):
    """``(node, x0, width, depth)`` per node on a unit-width strip.

    Children split their parent's width in proportion to routed observation
    counts (equal halves when ``equal`` or when counts are absent), so empty
    nodes get zero width.
    """
    counts = None if equal else tree.get("count")
    out = []
    stack = [(0, 0.0, 1.0, 0)]
    while stack:
        t, x0, w, depth = stack.pop()
        out.append((t, x0, w, depth))
        if tree["var"][t] < 0:
            continue
        lt, rt = tree["left"][t], tree["right"][t]
        if counts is None:
            wl = w / 2
        else:
            wl = w * counts[lt] / counts[t] if counts[t] > 0 else 0.0
        wr = w - wl if (counts is None or counts[t] > 0) else 0.0
        stack.append((rt, x0 + wl, wr, depth + 1))
        stack.append((lt, x0, wl, depth + 1))
    return sorted(out)


def node_colors(tree: dict, mode: str, style: dict) -> list[str]:
    highlight = set(style.get("highlight") or [])
    names = style["names"]
    out = []
    for t, v in enumerate(tree["var"]):
        if v >= 0:
            if mode == "highlight" and names[v] not in highlight:
                out.append(pal.FADED_GREY)
            else:
                out.append(pal.categorical(v))
        elif mode == "meanResponse":
            m = tree["mean_y"][t]
            out.append(pal.diverging(m if m is not None else math.nan, style["center"], style["half_width"]))
        elif mode == "muValue":
            out.append(pal.diverging(tree["mu"][t] * style["mu_scale"], 0.0, style["half_width"]))
        else:
            out.append(pal.LEAF_GREY)
    return out


def icicle_spec(trees, data=None, mode="splitVariable", sort="none", remove_stumps=False, highlight=(),
                names=None, labels=None, mu_scale=1.0, title=None, ncols=None) -> PlotSpec:
    """Grid of icicle plots, one per tree.

    ``data`` (a :class:`~bartviz.core.Dataset`) sizes nodes by routed counts
    and is required for ``meanResponse``. ``mu_scale`` converts stored leaf
    values to the response scale in ``muValue`` mode.
    """
    if mode not in MODES:
        raise ValueError(f"unknown icicle mode {mode!r}; expected one of {MODES}")
    if sort not in SORTS:
        raise ValueError(f"unknown sort {sort!r}; expected one of {sorted(SORTS)}")
    sort = SORTS[sort]
    trees = list(trees)
    if not trees:
        raise ValueError("no trees to draw")
    if mode == "meanResponse" and data is None:
        raise ValueError("meanResponse colouring needs the training data")
    if names is None:
        if data is None:
            raise ValueError("need variable names or data")
        names = list(data.names)
    labels = list(labels) if labels is not None else [f"tree {i + 1}" for i in range(len(trees))]
    items = [(i, t) for i, t in enumerate(trees) if not (remove_stumps and t.is_stump)]
    if not items:
        raise ValueError("every tree is a stump and stumps were removed")
    if sort == "freq":
        freq = Counter(canonical_key(t) for _, t in items)
        items.sort(key=lambda it: (-freq[canonical_key(it[1])], canonical_key(it[1]), it[0]))
    elif sort == "depth":
        items.sort(key=lambda it: (-max(it[1].depths), -it[1].n_nodes, it[0]))
    payload = [_tree_payload(t, labels[i], data) | {"index": i} for i, t in items]
    style = {"mode": mode, "sort": sort, "remove_stumps": bool(remove_stumps),
             "highlight": list(highlight), "names": list(names), "title": title, "ncols": ncols}
    if mode == "meanResponse":
        y = np.asarray(data.y, dtype=float)
        style["center"] = float((y.min() + y.max()) / 2)
        style["half_width"] = float((y.max() - y.min()) / 2)
    if mode == "muValue":
        mus = [abs(m) for d in payload for v, m in zip(d["var"], d["mu"]) if v < 0]
        style["mu_scale"] = float(mu_scale)
        style["half_width"] = float(max(mus) * abs(mu_scale)) if mus else 0.0
    n = len(payload)
    nc = ncols or max(1, math.ceil(math.sqrt(n)))
    nr = math.ceil(n / nc)
    w = min(12.0, 1.0 + 0.9 * nc)
    return PlotSpec("icicleGrid", {"trees": payload, "names": list(names), "mode": mode}, style,
                    width=w, height=min(14.0, 1.2 + w * nr / nc))


def _draw_glyph(rects, colors, tree, x0, y0, size, depth_levels, node_fill, equal=False):
    h = size / depth_levels
    for t, nx, nw, d in icicle_layout(tree, equal):
        if nw <= 0:
            continue
        rects.append(Rectangle((x0 + nx * size, y0 + size - (d + 1) * h), nw * size, h))
        colors.append(node_fill[t])


@drawer("icicleGrid")
def _draw_icicle(fig, spec):
    trees = spec.data["trees"]
    style = dict(spec.style)
    style["names"] = spec.data["names"]
    mode = spec.data["mode"]
    n = len(trees)
    nc = style.get("ncols") or max(1, math.ceil(math.sqrt(n)))
    nr = math.ceil(n / nc)
    levels = max(d["depth"] for d in trees) + 1
    ax = fig.add_axes((0.02, 0.14, 0.96, 0.78 if style.get("title") else 0.84))
    rects, colors = [], []
    gap = 0.12
    for k, d in enumerate(trees):
        r, c = divmod(k, nc)
        x0, y0 = c * (1 + gap), (nr - 1 - r) * (1 + gap + (0.12 if n <= 100 else 0))
        _draw_glyph(rects, colors, d, x0, y0, 1.0, levels, node_colors(d, mode, style))
        if n <= 100:
            ax.text(x0 + 0.5, y0 + 1.02, d["label"], ha="center", va="bottom", fontsize=6)
    ax.add_collection(PatchCollection(rects, facecolors=colors, edgecolors="#d9d9d9", linewidths=0.3))
    row_h = 1 + gap + (0.12 if n <= 100 else 0)
    ax.set_xlim(-gap / 2, nc * (1 + gap) - gap / 2)
    ax.set_ylim(-gap / 2, nr * row_h)
    ax.set_aspect("equal")
    ax.axis("off")
    if style.get("title"):
        fig.suptitle(style["title"])
    _icicle_legend(fig, trees, mode, style)


def _icicle_legend(fig, trees, mode, style):
    used = sorted({v for d in trees for v in d["var"] if v >= 0})
    handles = []
    for v in used:
        nm = style["names"][v]
        if mode == "highlight" and nm not in set(style.get("highlight") or []):
            continue
        handles.append(Patch(facecolor=pal.categorical(v), label=nm))
    if mode == "highlight" and any(style["names"][v] not in set(style.get("highlight") or []) for v in used):
        handles.append(Patch(facecolor=pal.FADED_GREY, label="other"))
    if mode in ("splitVariable", "highlight"):
        handles.append(Patch(facecolor=pal.LEAF_GREY, label="terminal"))
    else:
        hw = style["half_width"]
        c = style.get("center", 0.0)
        lab = "mean response" if mode == "meanResponse" else "mu"
        for v in (c - hw, c, c + hw):
            handles.append(Patch(facecolor=pal.diverging(v, c, hw), label=f"{lab} {fmt(v)}"))
    fig.legend(handles=handles, loc="lower center", ncol=min(6, len(handles)), fontsize=6, frameon=False)


def render_icicle(trees, data=None, mode="splitVariable", **kw):
    """Icicle plots of ``trees``; see :func:`icicle_spec` for options."""
    return render(icicle_spec(trees, data, mode, **kw))


# --------------------------------------------------------------------------
# Tree-type barplot


def tree_barplot_spec(frequencies, names, top_n=10, title="Most frequent tree types") -> PlotSpec:
    if top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n}")
    freq = sorted(frequencies, key=lambda kv: (-kv[1], kv[0]))
    if not freq:
        raise ValueError("no tree types to plot")
    freq = freq[:top_n]
    return PlotSpec("treeBarplot", {"keys": [k for k, _ in freq], "counts": [int(c) for _, c in freq],
                                    "names": list(names)}, {"title": title, "top_n": top_n},
                    width=max(4.0, 1.0 + 0.7 * len(freq)), height=4.0)


def _key_tree(key: str) -> dict:
    """Flat preorder arrays for a parsed key, in the icicle payload layout."""
    var, left, right = [], [], []

    def add(node):
        t = len(var)
        var.append(-1 if node is None else node[0])
        left.append(-1)
        right.append(-1)
        if node is not None:
            left[t] = add(node[1])
            right[t] = add(node[2])
        return t

    add(parse_key(key))
    depth = 0
    stack = [(0, 0)]
    while stack:
        t, d = stack.pop()
        depth = max(depth, d)
        if var[t] >= 0:
            stack += [(left[t], d + 1), (right[t], d + 1)]
    return {"var": var, "left": left, "right": right, "depth": depth}


@drawer("treeBarplot")
def _draw_barplot(fig, spec):
    keys, counts = spec.data["keys"], spec.data["counts"]
    n = len(keys)
    ax = fig.add_axes((0.12, 0.3, 0.85, 0.6))
    ax.bar(np.arange(n), counts, color="#6e6e6e", width=0.7)
    ax.set_xlim(-0.5, n - 0.5)
    ax.set_xticks([])
    ax.set_ylabel("count")
    if spec.style.get("title"):
        ax.set_title(spec.style["title"])
    gx = fig.add_axes((0.12, 0.05, 0.85, 0.22))
    trees = [_key_tree(k) for k in keys]
    levels = max(t["depth"] for t in trees) + 1
    rects, colors = [], []
    for i, t in enumerate(trees):
        fill = [pal.categorical(v) if v >= 0 else pal.LEAF_GREY for v in t["var"]]
        _draw_glyph(rects, colors, t, i - 0.35, 0, 0.7, levels, fill, equal=True)
    gx.add_collection(PatchCollection(rects, facecolors=colors, edgecolors="white", linewidths=0.3))
    gx.set_xlim(-0.5, n - 0.5)
    gx.set_ylim(-0.05, 0.75)
    gx.axis("off")
    used = sorted({v for t in trees for v in t["var"] if v >= 0})
    handles = [Patch(facecolor=pal.categorical(v), label=spec.data["names"][v]) for v in used]
    handles.append(Patch(facecolor=pal.LEAF_GREY, label="terminal"))
    fig.legend(handles=handles, loc="upper right", fontsize=6, frameon=False)


def render_tree_barplot(frequencies, names, top_n=10, title="Most frequent tree types"):
    """Bars of the ``top_n`` most frequent tree types with equal-size icicle
    glyphs of each type underneath."""
    return render(tree_barplot_spec(frequencies, names, top_n, title))
