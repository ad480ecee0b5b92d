"""Matplotlib rendering of reports: effect-porosity maps and comparison charts.

Figures are written to files next to the CSV/JSON reports; nothing is ever
shown interactively. The delimited outputs remain the canonical results.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluate import ComparisonCell
from .influence import EffectPorosityMap, InfluenceRegion, region_label

REGION_COLORS = {"suppressing": "#2e7d32", "encouraging": "#c62828"}


def save_map_figure(
    emap: EffectPorosityMap,
    regions: list[InfluenceRegion],
    path,
    dpi: int = 120,
) -> Path:
    """Scatter one effect-porosity map with its regions shaded."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    clean = ~emap.outlier_flag
    ax.scatter(emap.effect_norm[clean], emap.porosity_norm[clean],
               s=14, alpha=0.7, color="#1f77b4", label="parts")
    if emap.outlier_flag.any():
        ax.scatter(emap.effect_norm[~clean], emap.porosity_norm[~clean],
                   s=18, facecolors="none", edgecolors="#7f7f7f", label="outliers")
    for region in regions:
        ax.axvspan(region.lo, region.hi, color=REGION_COLORS[region.kind], alpha=0.15)
        ax.text((region.lo + region.hi) / 2.0, 1.02,
                f"{region.kind[:4]} {region_label(emap.aggregator, region)}",
                ha="center", va="bottom", fontsize=6,
                color=REGION_COLORS[region.kind], transform=ax.get_xaxis_transform())
    lo, hi = emap.effect_range
    ax.set_xlabel(f"{emap.effect_name} {emap.aggregator} (normalized; raw [{lo:.4g}, {hi:.4g}])")
    p_lo, p_hi = emap.porosity_range
    ax.set_ylabel(f"{emap.target} (normalized; raw [{p_lo:.4g}, {p_hi:.4g}] um)")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.05, 1.1)
    if emap.outlier_flag.any():
        ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return path


def save_comparison_figure(cells: list[ComparisonCell], path, category: str = "all",
                           dpi: int = 120) -> Path:
    """Grouped-bar chart of mean error per algorithm and model kind, one
    panel per porosity target, for a single quality category."""
    chosen = [c for c in cells if c.category == category and c.error is not None]
    targets = sorted({c.target for c in chosen})
    kinds = sorted({c.model_kind for c in chosen})
    algorithms = sorted({c.algorithm for c in chosen})
    n_panels = max(len(targets), 1)
    fig, axes = plt.subplots(1, n_panels, figsize=(3.6 * n_panels, 3.6), squeeze=False)
    width = 0.8 / max(len(kinds), 1)
    for panel, target in enumerate(targets):
        ax = axes[0][panel]
        for k_index, kind in enumerate(kinds):
            errors = []
            for algorithm in algorithms:
                match = [c.error for c in chosen
                         if c.target == target and c.model_kind == kind
                         and c.algorithm == algorithm]
                errors.append(match[0] if match else 0.0)
            xs = [a + k_index * width for a in range(len(algorithms))]
            ax.bar(xs, errors, width=width, label=kind)
        ax.set_xticks([a + width * (len(kinds) - 1) / 2 for a in range(len(algorithms))])
        ax.set_xticklabels(algorithms, rotation=45, ha="right", fontsize=8)
        ax.set_title(f"{target} ({category})", fontsize=10)
        if panel == 0:
            ax.set_ylabel("mean CV error")
            ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return path
