"""Render the tables of a bundle.  Presentation only: every number comes from the CSV/JSON files."""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..errors import UsageError  # noqa: E402
from .io import read_csv  # noqa: E402

# no software/date stamp, so re-rendering gives identical bytes
_PNG_METADATA = {"Software": None}


def read_table(path: str | Path) -> tuple[list[str], list[list]]:
    path = Path(path)
    if path.suffix == ".json":
        payload = json.loads(path.read_text())
        return payload["columns"], payload["rows"]
    _, columns, rows = read_csv(path)
    return columns, rows


def _column(columns, rows, name) -> np.ndarray:
    if name not in columns:
        raise UsageError(f"table has no column {name!r}")
    k = columns.index(name)
    return np.array([r[k] for r in rows], dtype=float)


def _heatmap(ax, columns, rows, spec):
    x = _column(columns, rows, spec["x"])
    y = _column(columns, rows, spec["y"])
    z = _column(columns, rows, spec["z"])
    xs, xi = np.unique(x, return_inverse=True)
    ys, yi = np.unique(y, return_inverse=True)
    grid = np.full((len(ys), len(xs)), np.nan)
    grid[yi, xi] = z
    mesh = ax.pcolormesh(xs, ys, grid, shading="nearest", cmap="viridis")
    ax.figure.colorbar(mesh, ax=ax, label=spec["z"])


def _lines(ax, columns, rows, spec, subset=None):
    idx = range(len(rows)) if subset is None else subset
    sel = [rows[i] for i in idx]
    x = _column(columns, sel, spec["x"])
    y = _column(columns, sel, spec["y"])
    if "group" in spec:
        g = _column(columns, sel, spec["group"])
        for value in np.unique(g):
            m = g == value
            ax.plot(x[m], y[m], label=f"{spec['group']}={value:g}")
        ax.legend(fontsize="small")
    else:
        ax.plot(x, y)
    if spec.get("log_y"):
        ax.set_yscale("log")


def render_table(path: str | Path, spec: dict, out: str | Path) -> Path:
    columns, rows = read_table(path)
    if not rows:
        raise UsageError(f"{Path(path).name} is empty; nothing to plot")
    if spec["x"] == "time_J" and len(np.unique(_column(columns, rows, "time_J"))) < 2 and spec["type"] == "heatmap":
        raise UsageError(f"{Path(path).name}: time grid has fewer than two points")
    if "facet" in spec:
        f = _column(columns, rows, spec["facet"])
        values = np.unique(f)
        fig, axes = plt.subplots(1, len(values), figsize=(5 * len(values), 4), squeeze=False)
        for ax, v in zip(axes[0], values):
            _lines(ax, columns, rows, spec, np.flatnonzero(f == v))
            ax.set_title(f"{spec['facet']}={v:g}")
            ax.set_xlabel(spec.get("xlabel", spec["x"]))
            ax.set_ylabel(spec.get("ylabel", spec["y"]))
    else:
        fig, ax = plt.subplots(figsize=(6, 4))
        (_heatmap if spec["type"] == "heatmap" else _lines)(ax, columns, rows, spec)
        ax.set_xlabel(spec.get("xlabel", spec["x"]))
        ax.set_ylabel(spec.get("ylabel", spec["y"]))
        if "title" in spec:
            ax.set_title(spec["title"])
    fig.tight_layout()
    out = Path(out)
    fig.savefig(out, format="png", dpi=100, metadata=_PNG_METADATA)
    plt.close(fig)
    return out


def emit_plots(bundle: str | Path) -> list[Path]:
    """Render every plottable table listed in ``bundle/manifest.json``; returns the image paths."""
    bundle = Path(bundle)
    manifest_path = bundle / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"{manifest_path} not found; is {bundle} a bundle directory?")
    manifest = json.loads(manifest_path.read_text())
    images = []
    for entry in manifest["tables"]:
        if not entry.get("plot"):
            continue
        table = bundle / entry["file"]
        if not table.exists():
            raise FileNotFoundError(f"{table} listed in the manifest is missing")
        images.append(render_table(table, entry["plot"], table.with_suffix(".png")))
    return images

