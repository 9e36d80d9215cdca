"""Colour ramps and the value-suppressing uncertainty palette (VSUP).

All colours are plain ``#rrggbb`` strings computed with fixed arithmetic, so a
given input always maps to the same string.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# 8-step sequential ramp (ColorBrewer BuPu), colourblind safe
SEQUENTIAL_8 = ("#f7fcfd", "#e0ecf4", "#bfd3e6", "#9ebcda",
                "#8c96c6", "#8c6bb1", "#88419d", "#6e016b")
# Diverging ramp (ColorBrewer PuOr, 11 classes), reversed so high = purple
DIVERGING_11 = ("#7f3b08", "#b35806", "#e08214", "#fdb863", "#fee0b6", "#f7f7f7",
                "#d8daeb", "#b2abd2", "#8073ac", "#542788", "#2d004b")
# Okabe-Ito followed by Paul Tol's muted set
CATEGORICAL = ("#e69f00", "#56b4e9", "#009e73", "#f0e442", "#0072b2", "#d55e00", "#cc79a7",
               "#332288", "#88ccee", "#44aa99", "#117733", "#999933", "#ddcc77", "#cc6677",
               "#882255", "#aa4499")
NEUTRAL_GREY = "#bdbdbd"
LEAF_GREY = "#7f7f7f"
FADED_GREY = "#e3e3e3"
MISSING = "#ffffff"


def hex_to_rgb(h: str) -> np.ndarray:
    h = h.lstrip("#")
    return np.array([int(h[i:i + 2], 16) for i in (0, 2, 4)], dtype=float)


def rgb_to_hex(rgb) -> str:
    r, g, b = (int(min(255, max(0, math.floor(c + 0.5)))) for c in rgb)
    return f"#{r:02x}{g:02x}{b:02x}"


def interpolate(ramp, t: float) -> str:
    """Piecewise-linear RGB interpolation along ``ramp`` at ``t`` in [0, 1]."""
    if not math.isfinite(t):
        return MISSING
    t = min(1.0, max(0.0, t))
    x = t * (len(ramp) - 1)
    i = min(int(math.floor(x)), len(ramp) - 2)
    f = x - i
    return rgb_to_hex((1 - f) * hex_to_rgb(ramp[i]) + f * hex_to_rgb(ramp[i + 1]))


def categorical(i: int) -> str:
    return CATEGORICAL[i % len(CATEGORICAL)]


def diverging(value: float, center: float, half_width: float) -> str:
    """Diverging colour for ``value``; ``center`` maps to the neutral midpoint
    and ``center +/- half_width`` to the two ends."""
    if not math.isfinite(value):
        return MISSING
    if half_width <= 0:
        return DIVERGING_11[len(DIVERGING_11) // 2]
    return interpolate(DIVERGING_11, 0.5 + 0.5 * (value - center) / half_width)


@dataclass(frozen=True)
class VsupPalette:
    """Quantization tree of a VSUP.

    Ring ``l`` (0 is the most uncertain apex) has ``branching**l`` cells. The
    outermost ring uses the base ramp directly; each inner cell averages the
    base colours it spans and is blended toward grey in proportion to its
    distance from the outer ring.
    """

    levels: int = 4
    branching: int = 2
    base: tuple = SEQUENTIAL_8
    grey: str = NEUTRAL_GREY
    max_blend: float = 0.75
    colors: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.levels < 1 or self.branching < 2:
            raise ValueError("need levels >= 1 and branching >= 2")
        n_outer = self.branching ** (self.levels - 1)
        if len(self.base) != n_outer:
            raise ValueError(f"base ramp must have {n_outer} colours, got {len(self.base)}")
        base = np.array([hex_to_rgb(c) for c in self.base])
        grey = hex_to_rgb(self.grey)
        rings = []
        for ring in range(self.levels):
            span = self.branching ** (self.levels - 1 - ring)
            blend = self.max_blend * (self.levels - 1 - ring) / max(self.levels - 1, 1)
            cells = []
            for j in range(self.branching ** ring):
                avg = base[j * span:(j + 1) * span].mean(axis=0)
                cells.append(rgb_to_hex((1 - blend) * avg + blend * grey))
            rings.append(tuple(cells))
        object.__setattr__(self, "colors", tuple(rings))

    @property
    def breaks(self) -> tuple[float, ...]:
        """Upper edges of the normalized-uncertainty intervals, outer ring first."""
        return tuple((k + 1) / self.levels for k in range(self.levels))

    def n_cells(self, ring: int) -> int:
        return self.branching ** ring

    def color(self, ring: int, cell: int) -> str:
        return self.colors[ring][cell]


DEFAULT_VSUP = VsupPalette()


def vsup_bin(value, uncertainty, value_range, uncertainty_cap, palette: VsupPalette = DEFAULT_VSUP):
    """Map (value, uncertainty) to ``(ring, cell, colour)``.

    Uncertainty is divided by the cap and clamped to [0, 1]; zero lands on the
    outermost ring and anything at or above the cap on the apex. The value is
    normalized over ``value_range`` and binned uniformly among the ring's
    cells. A non-finite value (or NaN uncertainty) gives ``(-1, -1, MISSING)``.
    """
    lo, hi = value_range
    if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
        raise ValueError(f"value range must be finite and nondegenerate, got {value_range}")
    if not uncertainty_cap > 0:
        raise ValueError(f"uncertainty cap must be positive, got {uncertainty_cap}")
    value = float(value)
    uncertainty = float(uncertainty)
    if not math.isfinite(value) or math.isnan(uncertainty):
        return -1, -1, MISSING
    L = palette.levels
    u = min(1.0, max(0.0, uncertainty / uncertainty_cap))
    ring = min(max(L - math.ceil(u * L), 0), L - 1)
    t = min(1.0, max(0.0, (value - lo) / (hi - lo)))
    n = palette.n_cells(ring)
    cell = min(int(math.floor(t * n)), n - 1)
    return ring, cell, palette.color(ring, cell)


def uncertainty_cap(cv, q=0.95) -> float:
    """95th percentile of the finite CVs; 1.0 when none is finite and positive."""
    cv = np.asarray(cv, dtype=float)
    finite = cv[np.isfinite(cv)]
    cap = float(np.quantile(finite, q)) if finite.size else 0.0
    return cap if cap > 0 else 1.0


def value_range(values) -> tuple[float, float]:
    """``(min(0, lo), hi)`` over the finite values; ``hi`` is raised to
    ``lo + 1`` when the range would be degenerate."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    lo = min(0.0, float(v.min())) if v.size else 0.0
    hi = float(v.max()) if v.size else 0.0
    return (lo, hi) if hi > lo else (lo, lo + 1.0)
