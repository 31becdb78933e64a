"""PNG figures for sweep results and confusion matrices (headless Agg backend)."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
from matplotlib import pyplot as plt  # noqa: E402

from faultwave.datastore import atomic_write  # noqa: E402
from faultwave.evalharness import CLASS_NAMES, ConfusionMatrix, SweepResult  # noqa: E402

_STYLE = {
    "font.size": 9,
    "axes.grid": True,
    "grid.linestyle": "dashed",
    "grid.linewidth": 0.4,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.bbox": "tight",
}
_AXIS_LABELS = {"duration_s": "trace duration (s)", "distance_m": "antenna distance (cm)"}


def _save(fig, path, dpi: int = 150) -> None:
    buf = io.BytesIO()
    # fixed metadata keeps reruns byte-identical
    fig.savefig(buf, format="png", dpi=dpi, metadata={"Software": None})
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def plot_sweep(result: SweepResult, path) -> None:
    """One line per (carrier, modality) with per-seed accuracies as faint dots."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.8, 3.2))
        scale = 100.0 if result.axis == "distance_m" else 1.0
        series: dict = {}
        for row in result.rows:
            series.setdefault((row.carrier_hz, row.modality), []).append(row)
        for (carrier, modality), rows in series.items():
            rows = sorted(rows, key=lambda r: r.setting)
            xs = [r.setting * scale for r in rows]
            label = f"{carrier / 1e9:g} GHz {modality}" if len(series) > 1 else modality
            (line,) = ax.plot(xs, [r.accuracy for r in rows], marker="o", label=label)
            for x, r in zip(xs, rows):
                ax.plot([x] * len(r.seed_accuracies), r.seed_accuracies, ".", color=line.get_color(), alpha=0.3)
        ax.set_xlabel(_AXIS_LABELS.get(result.axis, result.axis))
        ax.set_ylabel("held-out accuracy")
        ax.set_ylim(0, 1.05)
        ax.legend(fontsize=7, frameon=False)
        _save(fig, path)


def plot_confusion(cm: ConfusionMatrix, path, title: str | None = None) -> None:
    norm = cm.row_normalized()
    names = CLASS_NAMES[: len(norm)]
    with plt.rc_context({**_STYLE, "axes.grid": False}):
        fig, ax = plt.subplots(figsize=(3.8, 3.4))
        im = ax.imshow(norm, vmin=0, vmax=1, cmap="Blues")
        for i in range(len(norm)):
            for j in range(len(norm)):
                color = "white" if norm[i, j] > 0.5 else "black"
                ax.text(j, i, str(int(cm.counts[i, j])), ha="center", va="center", color=color)
        ax.set_xticks(range(len(names)), names, rotation=30, ha="right")
        ax.set_yticks(range(len(names)), names)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        if title:
            ax.set_title(title)
        fig.colorbar(im, ax=ax, fraction=0.046)
        _save(fig, path)
