"""SVG figures for precision-recall curves and parameter sweeps."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

METRICS = ("nn", "tier1", "tier2", "e_measure", "dcg")
METRIC_LABELS = {"nn": "NN", "tier1": "1-tier", "tier2": "2-tier", "e_measure": "E-measure", "dcg": "DCG"}

# fixed ids and no timestamp, so identical data gives identical files
STYLE = {
    "svg.hashsalt": "shaperet",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_pr_curves(curves: dict, path) -> Path:
    """One line per entry of ``curves`` (label -> [(recall, precision), ...])."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.5), layout="constrained")
        for label, curve in curves.items():
            if not curve:
                continue
            r, p = zip(*curve)
            ax.plot(r, p, marker="o", markersize=3, linewidth=1.2, label=label)
        ax.set_xlim(0, 1.02)
        ax.set_ylim(0, 1.02)
        ax.set_xlabel("Recall")
        ax.set_ylabel("Precision")
        if len(curves) > 1:
            ax.legend(loc="lower left")
        return _save(fig, path)


def parse_parameters(text: str) -> dict:
    """``"sampler=random;n=200;D=50"`` -> dict with numeric values converted."""
    out = {}
    for part in text.split(";"):
        key, sep, val = part.partition("=")
        if not sep:
            continue
        try:
            out[key.strip()] = float(val) if "." in val else int(val)
        except ValueError:
            out[key.strip()] = val.strip()
    return out


def plot_sweep(rows, param: str, path, metrics=METRICS) -> Path:
    """Metric values against one swept parameter, one line per method.

    ``rows`` are stats records (dicts with ``method``, ``parameters`` and the
    metric columns).
    """
    by_method: dict = {}
    for r in rows:
        params = parse_parameters(r["parameters"])
        if param not in params:
            raise ValueError(f"parameter {param!r} missing from row {r['parameters']!r}")
        by_method.setdefault(r["method"], []).append((params[param], r))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(metrics), figsize=(2.4 * len(metrics), 2.6),
                                 layout="constrained", sharey=True)
        axes = [axes] if len(metrics) == 1 else list(axes)
        for ax, m in zip(axes, metrics):
            for method, pts in sorted(by_method.items()):
                pts = sorted(pts, key=lambda t: t[0])
                ax.plot([x for x, _ in pts], [r[m] for _, r in pts], marker="o", markersize=3, label=method)
            ax.set_title(METRIC_LABELS.get(m, m))
            ax.set_xlabel(param)
        axes[0].set_ylabel("score")
        if len(by_method) > 1:
            axes[-1].legend(loc="best", fontsize=7)
        return _save(fig, path)
