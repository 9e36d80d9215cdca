"""MDS ellipse plot, fit diagnostics and MCMC trace panels."""

from __future__ import annotations

import math

import numpy as np
from matplotlib.patches import Ellipse as EllipsePatch
from matplotlib.patches import Patch
from statsmodels.nonparametric.smoothers_lowess import lowess

from . import palettes as pal
from .importance import _draw_dots
from .spec import PlotSpec, drawer, fmt, render

LOESS_SPAN = 0.75


def ols_line(x, y) -> tuple[float, float]:
    """Least-squares ``(intercept, slope)``; a flat line at mean(y) if x is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean())) / sxx if sxx > 0 else 0.0
    return float(y.mean() - slope * x.mean()), slope


def loess(x, y, span=LOESS_SPAN) -> np.ndarray:
    """Local-linear tricube smoother (no robustness passes) evaluated at ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        return y.copy()
    return lowess(y, x, frac=span, it=0, delta=0.0, return_sorted=False)


# --------------------------------------------------------------------------
# MDS


def mds_spec(embedding, show_index=False, title="Proximity MDS") -> PlotSpec:
    labels = embedding.labels
    kind = "none"
    if labels is not None:
        labels = np.asarray(labels)
        uniq = np.unique(labels)
        kind = "categorical" if (labels.dtype.kind in "OUSb" or uniq.size <= 8) else "continuous"
    return PlotSpec("mdsEllipse", {
        "centroids": embedding.centroids,
        "ellipses": [{"center": list(e.center), "semi_axes": list(e.semi_axes), "angle": e.angle}
                     for e in embedding.ellipses],
        "labels": None if labels is None else labels.tolist(),
        "label_kind": kind,
        "target": embedding.target,
    }, {"show_index": bool(show_index), "title": title}, width=5.5, height=5.0)


def _label_colors(labels, kind):
    if labels is None:
        return [], {}
    if kind == "categorical":
        levels = sorted(set(labels), key=str)
        lut = {lv: pal.categorical(i) for i, lv in enumerate(levels)}
        return [lut[v] for v in labels], lut
    v = np.asarray(labels, dtype=float)
    lo, hi = float(np.nanmin(v)), float(np.nanmax(v))
    return [pal.interpolate(pal.SEQUENTIAL_8[2:], (x - lo) / (hi - lo) if hi > lo else 0.5) for x in v], {}


@drawer("mdsEllipse")
def _draw_mds(fig, spec):
    d = spec.data
    C = np.asarray(d["centroids"], dtype=float)
    n = C.shape[0]
    colors, lut = _label_colors(d["labels"], d.get("label_kind"))
    if not colors:
        colors = ["#4d4d4d"] * n
    ax = fig.add_subplot()
    for i, e in enumerate(d["ellipses"]):
        a, b = e["semi_axes"]
        if a > 0 or b > 0:
            ax.add_patch(EllipsePatch(e["center"], 2 * a, 2 * b, angle=math.degrees(e["angle"]),
                                      facecolor=colors[i], alpha=0.15, edgecolor=colors[i], linewidth=0.4))
    ax.scatter(C[:, 0], C[:, 1], s=10, c=colors, zorder=3)
    if spec.style.get("show_index"):
        for i in range(n):
            ax.text(C[i, 0], C[i, 1], str(i + 1), fontsize=5, ha="left", va="bottom")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("dimension 1")
    ax.set_ylabel("dimension 2")
    if spec.style.get("title"):
        ax.set_title(spec.style["title"])
    if lut:
        ax.legend(handles=[Patch(facecolor=c, label=str(k)) for k, c in lut.items()], fontsize=7,
                  frameon=False, loc="best")
    fig.tight_layout()


def render_mds(embedding, show_index=False, title="Proximity MDS"):
    """Centroids coloured by label with one 95% ellipse per observation."""
    return render(mds_spec(embedding, show_index, title))


# --------------------------------------------------------------------------
# Fit diagnostics


REG_KEYS = ("y", "fitted", "fitted_lower", "fitted_upper", "residuals", "qq_theoretical", "qq_sample",
            "sigma_trace", "burn_in", "hist_counts", "hist_edges")
CLASS_KEYS = ("grid", "roc_median", "roc_lower", "roc_upper", "pr_median", "pr_lower", "pr_upper",
              "auc", "confusion", "hist_counts", "hist_edges", "accuracy")


def diagnostics_spec(panel_data: dict, task: str, importance=None) -> PlotSpec:
    """``panel_data`` is the dict from the analytics diagnostics function for
    ``task``; ``importance`` (an ImportanceResult) fills the last panel."""
    if task not in ("regression", "classification"):
        raise ValueError(f"unknown task {task!r}")
    keys = REG_KEYS if task == "regression" else CLASS_KEYS
    missing = [k for k in keys if k not in panel_data]
    if missing:
        raise ValueError(f"panel data does not match task {task!r}; missing {missing}")
    data = {"task": task, **{k: panel_data[k] for k in keys}}
    if importance is not None:
        s = importance.summary
        data["importance"] = {"names": list(importance.names), "median": s.median, "q25": s.q25,
                              "q75": s.q75, "order": np.argsort(-s.median, kind="stable")}
    return PlotSpec("diagnosticsPanel", data, {}, width=10.0, height=6.5)


def _hist(ax, d, xlabel):
    edges = np.asarray(d["hist_edges"])
    ax.bar(edges[:-1], d["hist_counts"], width=np.diff(edges), align="edge", color="#9e9e9e",
           edgecolor="white", linewidth=0.4)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")


def _regression_panels(fig, d):
    axs = fig.subplots(2, 3)
    ax = axs[0, 0]
    qt, qs = np.asarray(d["qq_theoretical"]), np.asarray(d["qq_sample"])
    ax.scatter(qt, qs, s=5, color="#4d4d4d")
    lim = [min(qt.min(), qs.min()), max(qt.max(), qs.max())]
    ax.plot(lim, lim, color="#d55e00", linewidth=0.8)
    ax.set(title="Q-Q plot", xlabel="theoretical", ylabel="standardized residual")

    ax = axs[0, 1]
    sig = np.asarray(d["sigma_trace"])
    it = np.arange(1, sig.size + 1)
    b = d["burn_in"]
    ax.plot(it[:b], sig[:b], color="#e69f00", linewidth=0.6, label="burn-in")
    ax.plot(it[b:], sig[b:], color="#0072b2", linewidth=0.6, label="post burn-in")
    ax.axvline(b + 0.5, color="black", linewidth=0.6, linestyle="--")
    ax.set(title="Sigma", xlabel="iteration", ylabel="sigma")
    ax.legend(fontsize=6, frameon=False)

    fit = np.asarray(d["fitted"])
    res = np.asarray(d["residuals"])
    lo, hi = np.asarray(d["fitted_lower"]), np.asarray(d["fitted_upper"])
    ax = axs[0, 2]
    ax.hlines(res, lo, hi, color="#bdbdbd", linewidth=0.6)
    ax.scatter(fit, res, s=5, color="#4d4d4d", zorder=3)
    ax.axhline(0, color="#d55e00", linewidth=0.8)
    ax.set(title="Fitted vs residuals", xlabel="fitted", ylabel="residual")

    _hist(axs[1, 0], d, "residual")
    axs[1, 0].set_title("Histogram")

    ax = axs[1, 1]
    y = np.asarray(d["y"])
    ax.vlines(y, lo, hi, color="#bdbdbd", linewidth=0.6)
    ax.scatter(y, fit, s=5, color="#4d4d4d", zorder=3)
    lim = [min(y.min(), lo.min()), max(y.max(), hi.max())]
    ax.plot(lim, lim, color="#d55e00", linewidth=0.8)
    ax.set(title="Actual vs fitted", xlabel="actual", ylabel="fitted")
    return axs[1, 2]


def _band(ax, grid, med, lo, hi, color):
    ax.fill_between(grid, lo, hi, color=color, alpha=0.25, linewidth=0)
    ax.plot(grid, med, color=color, linewidth=1.0)


def _classification_panels(fig, d):
    axs = fig.subplots(2, 3)
    g = d["grid"]
    ax = axs[0, 0]
    _band(ax, g, d["roc_median"], d["roc_lower"], d["roc_upper"], "#0072b2")
    ax.plot([0, 1], [0, 1], color="#9e9e9e", linewidth=0.6, linestyle="--")
    ax.set(title=f"ROC (AUC {fmt(d['auc'], 3)})", xlabel="false positive rate", ylabel="true positive rate")
    ax = axs[0, 1]
    _band(ax, g, d["pr_median"], d["pr_lower"], d["pr_upper"], "#009e73")
    ax.set(title="Precision-recall", xlabel="recall", ylabel="precision")
    ax = axs[0, 2]
    conf = np.asarray(d["confusion"])
    ax.imshow(conf, cmap="Greys", vmin=0, vmax=max(1, conf.max()) * 1.6)
    for i in range(2):
        for j in range(2):
            ax.text(j, i, str(int(conf[i, j])), ha="center", va="center")
    ax.set_xticks([0, 1], ["0", "1"])
    ax.set_yticks([0, 1], ["0", "1"])
    ax.set(title=f"Confusion (accuracy {fmt(d['accuracy'], 3)})", xlabel="predicted", ylabel="actual")
    _hist(axs[1, 0], d, "posterior mean probability")
    axs[1, 0].set_title("Histogram")
    axs[1, 1].axis("off")
    return axs[1, 2]


@drawer("diagnosticsPanel")
def _draw_diagnostics(fig, spec):
    d = spec.data
    last = _regression_panels(fig, d) if d["task"] == "regression" else _classification_panels(fig, d)
    if "importance" in d:
        _draw_dots(last, d["importance"], "Variable importance")
    else:
        last.axis("off")
    fig.tight_layout()


def render_diagnostics(panel_data: dict, task: str, importance=None):
    """Six-panel fit summary for ``task`` ("regression" or "classification")."""
    return render(diagnostics_spec(panel_data, task, importance))


# --------------------------------------------------------------------------
# MCMC traces


def acceptance_spec(rate, burn_in, title="Acceptance rate") -> PlotSpec:
    rate = np.asarray(rate, dtype=float)
    it = np.arange(1, rate.size + 1)
    a, b = ols_line(it[burn_in:], rate[burn_in:]) if rate.size > burn_in else ols_line(it, rate)
    return PlotSpec("acceptanceRate", {"iterations": it, "rate": rate, "burn_in": int(burn_in),
                                       "ols": [a, b]}, {"title": title}, width=5.0, height=3.5)


def _scatter_burn(ax, it, y, b):
    ax.scatter(it[:b], y[:b], s=3, color="#e69f00", label="burn-in")
    ax.scatter(it[b:], y[b:], s=3, color="#0072b2", label="post burn-in")


@drawer("acceptanceRate")
def _draw_acceptance(fig, spec):
    d = spec.data
    it, rate, b = np.asarray(d["iterations"]), np.asarray(d["rate"]), d["burn_in"]
    ax = fig.add_subplot()
    _scatter_burn(ax, it, rate, b)
    a, s = d["ols"]
    x = np.array([it[min(b, it.size - 1)], it[-1]], dtype=float)
    ax.plot(x, a + s * x, color="black", linewidth=1.0)
    ax.set(xlabel="iteration", ylabel="% accepted", title=spec.style.get("title"))
    ax.legend(fontsize=6, frameon=False)
    fig.tight_layout()


def render_acceptance(rate, burn_in, title="Acceptance rate"):
    """Per-iteration acceptance proportion with a least-squares line over the
    post burn-in iterations."""
    return render(acceptance_spec(rate, burn_in, title))


def depth_nodes_spec(depth, nodes, burn_in=0) -> PlotSpec:
    depth = np.asarray(depth, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    it = np.arange(1, depth.size + 1, dtype=float)
    return PlotSpec("depthNodes", {"iterations": it, "depth": depth, "nodes": nodes, "burn_in": int(burn_in),
                                   "depth_loess": loess(it, depth), "nodes_loess": loess(it, nodes)},
                    {}, width=8.0, height=3.5)


@drawer("depthNodes")
def _draw_depth_nodes(fig, spec):
    d = spec.data
    it, b = np.asarray(d["iterations"]), d["burn_in"]
    axs = fig.subplots(1, 2)
    for ax, key, lab in ((axs[0], "depth", "average tree depth"), (axs[1], "nodes", "average number of nodes")):
        _scatter_burn(ax, it, np.asarray(d[key]), b)
        ax.plot(it, d[key + "_loess"], color="black", linewidth=1.0)
        ax.set(xlabel="iteration", ylabel=lab)
    axs[0].legend(fontsize=6, frameon=False)
    fig.tight_layout()


def render_depth_nodes(depth, nodes, burn_in=0):
    """Average depth and node count per iteration with LOESS curves."""
    return render(depth_nodes_spec(depth, nodes, burn_in))


def split_density_spec(densities, title="Split value densities") -> PlotSpec:
    dens = [{"variable": s.variable, "grid": s.grid, "data_density": s.data_density,
             "split_density": s.split_density, "n_splits": s.n_splits} for s in densities]
    if not dens:
        raise ValueError("no densities to plot")
    nc = min(4, len(dens))
    nr = math.ceil(len(dens) / nc)
    return PlotSpec("splitDensity", {"densities": dens}, {"title": title, "ncols": nc},
                    width=2.3 * nc + 0.5, height=1.8 * nr + 0.8)


@drawer("splitDensity")
def _draw_split_density(fig, spec):
    dens = spec.data["densities"]
    nc = spec.style["ncols"]
    nr = math.ceil(len(dens) / nc)
    axs = np.atleast_1d(fig.subplots(nr, nc, squeeze=False)).ravel()
    for ax, s in zip(axs, dens):
        g = s["grid"]
        ax.fill_between(g, s["data_density"], color="#56b4e9", alpha=0.45, linewidth=0)
        if s["n_splits"]:
            ax.fill_between(g, s["split_density"], color="#d55e00", alpha=0.45, linewidth=0)
        else:
            ax.text(0.5, 0.9, "never split", transform=ax.transAxes, ha="center", fontsize=6)
        ax.set_title(s["variable"], fontsize=8)
        ax.tick_params(labelsize=6)
    for ax in axs[len(dens):]:
        ax.axis("off")
    fig.legend(handles=[Patch(facecolor="#56b4e9", alpha=0.45, label="data"),
                        Patch(facecolor="#d55e00", alpha=0.45, label="split values")],
               loc="lower center", ncol=2, fontsize=7, frameon=False)
    if spec.style.get("title"):
        fig.suptitle(spec.style["title"])
    fig.tight_layout(rect=(0, 0.06, 1, 1))


def render_split_densities(densities, title="Split value densities"):
    """Per variable, the KDE of the data and of the post burn-in split values."""
    return render(split_density_spec(densities, title))
