"""Static SVG figures with JSON data sidecars."""

from .importance import (heatmap_cells, heatmap_payload, importance_dot_spec, render_importance_dotplot,
                         render_vivi_heatmap, study_grid_spec, vivi_heatmap_spec)
from .palettes import DEFAULT_VSUP, MISSING, VsupPalette, uncertainty_cap, value_range, vsup_bin
from .panels import (acceptance_spec, depth_nodes_spec, diagnostics_spec, loess, mds_spec, ols_line,
                     render_acceptance, render_depth_nodes, render_diagnostics, render_mds,
                     render_split_densities, split_density_spec)
from .spec import PlotSpec, RenderedPlot, render
from .trees import icicle_layout, icicle_spec, parse_key, render_icicle, render_tree_barplot, tree_barplot_spec

__all__ = [
    "DEFAULT_VSUP", "MISSING", "PlotSpec", "RenderedPlot", "VsupPalette", "acceptance_spec",
    "depth_nodes_spec", "diagnostics_spec", "heatmap_cells", "heatmap_payload", "icicle_layout",
    "icicle_spec", "importance_dot_spec", "loess", "mds_spec", "ols_line", "parse_key", "render",
    "render_acceptance", "render_depth_nodes", "render_diagnostics", "render_icicle",
    "render_importance_dotplot", "render_mds", "render_split_densities", "render_tree_barplot",
    "render_vivi_heatmap", "split_density_spec", "study_grid_spec", "tree_barplot_spec",
    "uncertainty_cap", "value_range", "vivi_heatmap_spec", "vsup_bin",
]
