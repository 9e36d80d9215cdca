"""Declarative plot descriptions and deterministic SVG output."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402

import numpy as np  # noqa: E402

# required payload keys per plot kind
PAYLOAD_KEYS = {
    "importanceDot": ("names", "median", "q25", "q75"),
    "viviHeatmap": ("names", "vimp", "vint", "order"),
    "vsupHeatmap": ("names", "vimp", "vint", "vimp_cv", "vint_cv", "order"),
    "icicleGrid": ("trees", "names", "mode"),
    "treeBarplot": ("keys", "counts", "names"),
    "mdsEllipse": ("centroids", "ellipses", "labels"),
    "diagnosticsPanel": ("task",),
    "acceptanceRate": ("iterations", "rate", "burn_in"),
    "depthNodes": ("iterations", "depth", "nodes"),
    "splitDensity": ("densities",),
    "studyGrid": ("panels", "tree_counts"),
}

RC = {
    "svg.hashsalt": "bartviz",
    "svg.fonttype": "none",
    "font.family": "DejaVu Sans",
    "font.size": 8.0,
    "axes.titlesize": 9.0,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "path.simplify": False,
}


def plain(obj):
    """Recursively turn numpy containers and scalars into JSON-ready Python."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass(frozen=True, eq=False)
class PlotSpec:
    """What to draw: a figure ``kind``, its data payload and style options.

    Payload values are kept at full precision; rounding happens only in the
    text drawn on the figure.
    """

    kind: str
    data: dict
    style: dict = field(default_factory=dict)
    width: float = 6.0  # inches
    height: float = 4.5

    def __post_init__(self):
        if self.kind not in PAYLOAD_KEYS:
            raise ValueError(f"unknown plot kind {self.kind!r}; expected one of {sorted(PAYLOAD_KEYS)}")
        missing = [k for k in PAYLOAD_KEYS[self.kind] if k not in self.data]
        if missing:
            raise ValueError(f"{self.kind} payload is missing {missing}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("plot dimensions must be positive")
        object.__setattr__(self, "data", plain(self.data))
        object.__setattr__(self, "style", plain(self.style))

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "width": self.width, "height": self.height,
                           "style": self.style, "data": self.data}, sort_keys=True, indent=1) + "\n"


@dataclass(frozen=True, eq=False)
class RenderedPlot:
    spec: PlotSpec
    svg: str

    def save(self, out_dir, tag: str) -> tuple[Path, Path]:
        """Write ``<kind>_<tag>.svg`` and its ``.json`` sidecar into ``out_dir``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = f"{self.spec.kind}_{tag}"
        svg_path, json_path = out_dir / f"{stem}.svg", out_dir / f"{stem}.json"
        svg_path.write_text(self.svg)
        json_path.write_text(self.spec.to_json())
        return svg_path, json_path


DRAWERS: dict = {}


def drawer(kind):
    """Register the function that draws ``kind`` onto a blank figure."""
    def deco(fn):
        DRAWERS[kind] = fn
        return fn
    return deco


def render(spec: PlotSpec) -> RenderedPlot:
    """Draw ``spec`` into a fresh figure and serialize it as SVG.

    The figure never touches pyplot state; style and id hashing are pinned so
    the same spec always gives the same bytes.
    """
    buf = io.StringIO()
    with matplotlib.rc_context(RC):
        fig = Figure(figsize=(spec.width, spec.height))
        DRAWERS[spec.kind](fig, spec)
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    return RenderedPlot(spec, buf.getvalue())


def fmt(x, digits=2) -> str:
    """Label text for a number; the only place values are rounded."""
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "inf" if x == math.inf else "NA"
    return f"{x:.{digits}f}"
