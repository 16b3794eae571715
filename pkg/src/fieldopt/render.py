"""Vector-graphic views of designs: field layouts, spread tables, traces.

All functions write SVG files whose bytes depend only on their inputs.
Matplotlib salts its internal ids from ``svg.hashsalt`` and stamps a
creation date unless told otherwise, so both knobs are pinned here.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Patch, Rectangle

from .domain import FamilySpreadTable, WithinPlacement
from .engine import ConvergenceTrace
from .model import FieldLayout

matplotlib.rcParams["svg.hashsalt"] = "fieldopt"

NO_FAMILY_COLOR = "#d9d9d9"
CHECK_HATCH = "///"


def _save(figure: plt.Figure, path: Path | str) -> None:
    figure.savefig(path, format="svg", metadata={"Date": None})
    plt.close(figure)


def _family_colors(families: list[str]) -> dict[str, str]:
    palette = plt.get_cmap("tab20").colors
    return {
        family: matplotlib.colors.to_hex(palette[k % len(palette)])
        for k, family in enumerate(families)
    }


def render_layout(placement: WithinPlacement, layout: FieldLayout,
                  path: Path | str, title: str = "") -> None:
    """Draw the plot grid, families as fills and checks hatched.

    Row one is at the top.  Plots missing from an incomplete last row are
    simply not drawn.
    """
    families: list[str] = []
    for genotype in placement.genotypes:
        if genotype.family is not None and genotype.family not in families:
            families.append(genotype.family)
    colors = _family_colors(families)
    row, col = layout.grid_positions()
    figure, axes = plt.subplots(
        figsize=(max(3.0, layout.cols * 0.45), max(3.0, layout.rows * 0.45))
    )
    for p in range(layout.n_plots):
        genotype = placement.genotypes[placement.plots[p]]
        fill = NO_FAMILY_COLOR if genotype.family is None else colors[genotype.family]
        is_check = genotype.role == "check"
        axes.add_patch(Rectangle(
            (col[p], layout.rows - 1 - row[p]),
            1.0,
            1.0,
            facecolor=fill,
            edgecolor="black",
            linewidth=1.4 if is_check else 0.4,
            hatch=CHECK_HATCH if is_check else None,
        ))
    axes.set_xlim(0, layout.cols)
    axes.set_ylim(0, layout.rows)
    axes.set_aspect("equal")
    axes.set_xticks([])
    axes.set_yticks([])
    if title:
        axes.set_title(title)
    handles = [
        Patch(facecolor=colors[family], edgecolor="black", label=family)
        for family in families
    ]
    handles.append(Patch(
        facecolor="white", edgecolor="black", hatch=CHECK_HATCH, label="check"
    ))
    axes.legend(handles=handles, loc="upper left", bbox_to_anchor=(1.01, 1.0),
                frameon=False)
    figure.tight_layout()
    _save(figure, path)


def render_spread(table: FamilySpreadTable, path: Path | str,
                  title: str = "") -> None:
    """Heatmap of experimental entries per location and family."""
    counts = np.asarray(table.counts, dtype=float)
    figure, axes = plt.subplots(
        figsize=(max(3.0, len(table.families) * 1.1),
                 max(2.5, len(table.locations) * 0.6))
    )
    image = axes.imshow(counts, cmap="YlGn", aspect="auto")
    axes.set_xticks(range(len(table.families)), table.families)
    axes.set_yticks(range(len(table.locations)), table.locations)
    threshold = counts.max() * 0.6 if counts.size else 0.0
    for i in range(counts.shape[0]):
        for j in range(counts.shape[1]):
            axes.text(
                j, i, str(int(counts[i, j])),
                ha="center", va="center",
                color="white" if counts[i, j] > threshold else "black",
            )
    if title:
        axes.set_title(title)
    figure.colorbar(image, ax=axes, shrink=0.85)
    figure.tight_layout()
    _save(figure, path)


def render_convergence(trace: ConvergenceTrace, path: Path | str,
                       title: str = "") -> None:
    """Best objective against evaluation count, one line per restart."""
    figure, axes = plt.subplots(figsize=(6.0, 4.0))
    for restart in trace.restarts():
        records = [r for r in trace.records if r.restart == restart]
        axes.step(
            [r.nfe for r in records],
            [r.best_objective for r in records],
            where="post",
            label=f"restart {restart}",
        )
    axes.set_xlabel("nfe")
    axes.set_ylabel("best objective")
    if title:
        axes.set_title(title)
    if len(trace.restarts()) <= 12:
        axes.legend(frameon=False, fontsize="small")
    figure.tight_layout()
    _save(figure, path)
