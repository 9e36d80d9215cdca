"""Importance dot plots, VIVI heatmaps (plain and VSUP) and the study grid."""

from __future__ import annotations

import math

import numpy as np
from matplotlib.patches import Rectangle, Wedge

from . import palettes as pal
from .spec import PlotSpec, drawer, fmt, render


def _order_desc(x):
    return np.argsort(-np.asarray(x, dtype=float), kind="stable")


# --------------------------------------------------------------------------
# Dot plot


def importance_dot_spec(result, title="Variable importance") -> PlotSpec:
    s = result.summary
    if len(result.names) < 1:
        raise ValueError("need at least one variable")
    return PlotSpec("importanceDot", {
        "names": list(result.names), "median": s.median, "q25": s.q25, "q75": s.q75,
        "mean": s.mean, "order": _order_desc(s.median),
    }, {"title": title}, width=4.5, height=max(2.0, 0.8 + 0.22 * len(result.names)))


def _draw_dots(ax, d, title=None):
    order = d["order"]
    n = len(order)
    y = np.arange(n)[::-1]
    med = np.array(d["median"])[order]
    lo, hi = np.array(d["q25"])[order], np.array(d["q75"])[order]
    ax.hlines(y, lo, hi, color="#9e9e9e", linewidth=3.5, zorder=1)
    ax.scatter(med, y, s=16, color="#222222", zorder=2)
    ax.set_yticks(y, [d["names"][i] for i in order])
    top = float(np.max(hi))
    ax.set_xlim(min(0.0, float(np.min(lo))), top * 1.08 if top > 0 else 1.0)
    ax.set_ylim(-0.7, n - 0.3)
    ax.set_xlabel("inclusion proportion")
    if title:
        ax.set_title(title)


@drawer("importanceDot")
def _draw_importance_dot(fig, spec):
    ax = fig.add_subplot()
    _draw_dots(ax, spec.data, spec.style.get("title"))
    fig.tight_layout()


def render_importance_dotplot(result, title="Variable importance"):
    """Median inclusion proportion per variable with a grey 25%-75% bar,
    sorted so the largest median is on top."""
    return render(importance_dot_spec(result, title))


# --------------------------------------------------------------------------
# Heatmaps


def heatmap_payload(names, vimp, vint, vimp_cv=None, vint_cv=None) -> dict:
    """Combined matrix payload with seriated order.

    The diagonal holds importance and the off-diagonal interaction; variables
    are ordered by descending row sum of that matrix (ties keep input order).
    """
    p = len(names)
    vimp = np.asarray(vimp, dtype=float)
    vint = np.asarray(vint, dtype=float)
    if vimp.shape != (p,) or vint.shape != (p, p):
        raise ValueError(f"dimension mismatch: {p} names, importance {vimp.shape}, interaction {vint.shape}")
    if (vimp_cv is None) != (vint_cv is None):
        raise ValueError("give both uncertainty arrays or neither")
    M = vint.copy()
    np.fill_diagonal(M, vimp)
    out = {"names": list(names), "vimp": vimp, "vint": vint, "order": _order_desc(M.sum(axis=1))}
    if vimp_cv is not None:
        vimp_cv = np.asarray(vimp_cv, dtype=float)
        vint_cv = np.asarray(vint_cv, dtype=float)
        if vimp_cv.shape != (p,) or vint_cv.shape != (p, p):
            raise ValueError("uncertainty arrays do not match the value arrays")
        out["vimp_cv"], out["vint_cv"] = vimp_cv, vint_cv
    return out


def _palette_from(style):
    v = style.get("vsup")
    if not v:
        return pal.DEFAULT_VSUP
    return pal.VsupPalette(v["levels"], v["branching"], tuple(v["base"]))


def heatmap_cells(data: dict, uncertainty: bool, palette: pal.VsupPalette = pal.DEFAULT_VSUP) -> dict:
    """Colours of the seriated matrix.

    Returns the ordered names and p x p arrays of values, colours and (with
    uncertainty) VSUP ring and cell indices, plus the value ranges and caps
    used separately for the diagonal and off-diagonal.
    """
    order = list(data["order"])
    p = len(order)
    vimp = np.asarray(data["vimp"], dtype=float)
    vint = np.asarray(data["vint"], dtype=float)
    iu = np.triu_indices(p, 1)
    rng_d, rng_o = pal.value_range(vimp), pal.value_range(vint[iu])
    out = {"names": [data["names"][i] for i in order], "diag_range": rng_d, "off_range": rng_o}
    values = np.empty((p, p))
    colors = [[""] * p for _ in range(p)]
    rings = -np.ones((p, p), dtype=int)
    cells = -np.ones((p, p), dtype=int)
    if uncertainty:
        cv_d = np.asarray(data["vimp_cv"], dtype=float)
        cv_o = np.asarray(data["vint_cv"], dtype=float)
        cap_d, cap_o = pal.uncertainty_cap(cv_d), pal.uncertainty_cap(cv_o[iu])
        out["diag_cap"], out["off_cap"] = cap_d, cap_o
    for a, i in enumerate(order):
        for b, j in enumerate(order):
            diag = i == j
            v = vimp[i] if diag else vint[i, j]
            values[a, b] = v
            rng = rng_d if diag else rng_o
            if uncertainty:
                u = cv_d[i] if diag else cv_o[i, j]
                rings[a, b], cells[a, b], colors[a][b] = pal.vsup_bin(
                    v, u, rng, cap_d if diag else cap_o, palette)
            else:
                colors[a][b] = pal.interpolate(pal.SEQUENTIAL_8, (v - rng[0]) / (rng[1] - rng[0]))
    out.update(values=values, colors=colors, rings=rings, cells=cells)
    return out


def _draw_matrix(ax, cells, title=None, labels=True):
    names = cells["names"]
    p = len(names)
    for a in range(p):
        for b in range(p):
            ax.add_patch(Rectangle((b, p - 1 - a), 1, 1, facecolor=cells["colors"][a][b],
                                   edgecolor="white", linewidth=0.6))
    ax.set_xlim(0, p)
    ax.set_ylim(0, p)
    ax.set_aspect("equal")
    if labels:
        ax.set_xticks(np.arange(p) + 0.5, names, rotation=90)
        ax.set_yticks(np.arange(p) + 0.5, names[::-1])
    else:
        ax.set_xticks([])
        ax.set_yticks([])
    ax.tick_params(length=0)
    for s in ax.spines.values():
        s.set_visible(False)
    if title:
        ax.set_title(title)


def _ramp_legend(ax, rng, label):
    n = 64
    for k in range(n):
        ax.add_patch(Rectangle((k / n, 0), 1 / n, 1, facecolor=pal.interpolate(pal.SEQUENTIAL_8, k / (n - 1)),
                               edgecolor="none"))
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_yticks([])
    ax.set_xticks([0, 1], [fmt(rng[0]), fmt(rng[1])])
    ax.set_title(label, fontsize=8)


def arc_legend(ax, palette: pal.VsupPalette, rng, cap, label):
    """Arc-shaped VSUP key: value runs along the arc, uncertainty runs from
    the outer edge (certain) to the apex (at or above the cap)."""
    L = palette.levels
    t0, t1 = 215.0, 325.0
    for ring in range(L):
        n = palette.n_cells(ring)
        for j in range(n):
            a0 = t0 + (t1 - t0) * j / n
            a1 = t0 + (t1 - t0) * (j + 1) / n
            ax.add_patch(Wedge((0, 0), ring + 1, a0, a1, width=1, facecolor=palette.color(ring, j),
                               edgecolor="white", linewidth=0.4))
    left = (L * math.cos(math.radians(t0)), L * math.sin(math.radians(t0)))
    right = (L * math.cos(math.radians(t1)), L * math.sin(math.radians(t1)))
    ax.text(left[0], left[1] - 0.35, fmt(rng[0]), ha="center", va="top", fontsize=7)
    ax.text(right[0], right[1] - 0.35, fmt(rng[1]), ha="center", va="top", fontsize=7)
    ax.text(0, -L - 0.9, label, ha="center", va="top", fontsize=8)
    # uncertainty scale along the right edge
    for r in range(L + 1):
        u = cap * (1 - r / L)
        x, y = r * math.cos(math.radians(t1)), r * math.sin(math.radians(t1))
        ax.text(x + 0.25, y, fmt(u), ha="left", va="center", fontsize=6)
    ax.text(L * 0.55, 0.2, "CV", fontsize=7, ha="left")
    ax.set_xlim(-L * 1.0, L * 1.35)
    ax.set_ylim(-L - 1.8, 0.8)
    ax.set_aspect("equal")
    ax.axis("off")


def vivi_heatmap_spec(names, vimp, vint, vimp_cv=None, vint_cv=None, palette=None,
                      title=None) -> PlotSpec:
    data = heatmap_payload(names, vimp, vint, vimp_cv, vint_cv)
    uncertain = vimp_cv is not None
    style = {"title": title}
    if uncertain:
        palette = palette or pal.DEFAULT_VSUP
        style["vsup"] = {"levels": palette.levels, "branching": palette.branching, "base": list(palette.base)}
    p = len(names)
    return PlotSpec("vsupHeatmap" if uncertain else "viviHeatmap", data, style,
                    width=3.2 + 0.3 * p, height=1.6 + 0.3 * p)


def _draw_heatmap_figure(fig, spec, uncertain):
    palette = _palette_from(spec.style)
    cells = heatmap_cells(spec.data, uncertain, palette)
    gs = fig.add_gridspec(2, 2, width_ratios=(3.0, 1.2), height_ratios=(1, 1), wspace=0.05)
    ax = fig.add_subplot(gs[:, 0])
    _draw_matrix(ax, cells, spec.style.get("title"))
    if uncertain:
        arc_legend(fig.add_subplot(gs[0, 1]), palette, cells["diag_range"], cells["diag_cap"], "Vimp")
        arc_legend(fig.add_subplot(gs[1, 1]), palette, cells["off_range"], cells["off_cap"], "Vint")
    else:
        sub = gs[0, 1].subgridspec(3, 1)
        _ramp_legend(fig.add_subplot(sub[1]), cells["diag_range"], "Vimp")
        sub = gs[1, 1].subgridspec(3, 1)
        _ramp_legend(fig.add_subplot(sub[1]), cells["off_range"], "Vint")
    fig.subplots_adjust(left=0.12, right=0.97, bottom=0.15, top=0.9)


@drawer("viviHeatmap")
def _draw_vivi(fig, spec):
    _draw_heatmap_figure(fig, spec, False)


@drawer("vsupHeatmap")
def _draw_vsup(fig, spec):
    _draw_heatmap_figure(fig, spec, True)


def render_vivi_heatmap(importance, interaction, uncertainty=False, palette=None, title=None):
    """Heatmap with importance on the diagonal and interaction off it.

    With ``uncertainty`` the cells use the VSUP on (posterior mean, CV), with
    separate value ranges and caps for the diagonal and the off-diagonal.
    """
    if list(importance.names) != list(interaction.names):
        raise ValueError("importance and interaction cover different variables")
    kw = {}
    if uncertainty:
        kw = {"vimp_cv": importance.summary.cv, "vint_cv": interaction.matrix("cv")}
    return render(vivi_heatmap_spec(importance.names, importance.vimp, interaction.matrix(), palette=palette,
                                    title=title, **kw))


# --------------------------------------------------------------------------
# Three-method comparison grid


def study_grid_spec(panels: list[list[dict]], tree_counts, row_labels) -> PlotSpec:
    """``panels[row][col]`` is a :func:`heatmap_payload` dict; rows are methods
    and columns tree counts. A row whose payloads carry CVs is drawn with the
    VSUP."""
    return PlotSpec("studyGrid", {"panels": panels, "tree_counts": list(tree_counts),
                                  "row_labels": list(row_labels)}, {}, width=11.0, height=11.0)


@drawer("studyGrid")
def _draw_study(fig, spec):
    panels = spec.data["panels"]
    counts = spec.data["tree_counts"]
    rows = spec.data["row_labels"]
    nr, nc = len(panels), len(counts)
    gs = fig.add_gridspec(nr, nc, hspace=0.35, wspace=0.35)
    letters = "abcdefghijklmnopqrstuvwxyz"
    for r in range(nr):
        for c in range(nc):
            d = panels[r][c]
            cells = heatmap_cells(d, "vimp_cv" in d)
            ax = fig.add_subplot(gs[r, c])
            _draw_matrix(ax, cells, f"({letters[r * nc + c]}) {rows[r]}, {counts[c]} trees")
    fig.subplots_adjust(left=0.06, right=0.98, bottom=0.06, top=0.96)
