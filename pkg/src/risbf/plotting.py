"""Figures for sweeps, training curves and timing tables.

Each figure is written twice: a PNG rendered with matplotlib and a gnuplot
script that redraws it from the CSV next to it.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import AblationRun, SweepPoint, TimingRow  # noqa: E402
from .nn import TrainHistory  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.4,
    "lines.markersize": 4,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}

MARKERS = {"sdr": "s", "nn": "o", "random": "^", "closed-form": "D"}


def _figure(ncols: int = 1):
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, ncols, figsize=(3.4 * ncols, 2.6))
    return fig, axes


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(RC):
        fig.savefig(path)
    plt.close(fig)
    return path


def plot_sweep(points: Sequence[SweepPoint], path) -> Path:
    """Mean gain and mean rate versus the sweep axis, one line per method."""
    axis = points[0].axis
    xs = [p.value for p in points]
    names = [m.method for m in points[0].report.methods]
    fig, (ax_g, ax_r) = _figure(2)
    with plt.rc_context(RC):
        for name in names:
            gain = [p.report[name].mean_gain for p in points]
            rate = [p.report[name].mean_rate for p in points]
            ax_g.plot(xs, gain, marker=MARKERS.get(name, "x"), label=name)
            ax_r.plot(xs, rate, marker=MARKERS.get(name, "x"), label=name)
        ax_g.set_xlabel(axis)
        ax_g.set_ylabel("mean channel gain")
        ax_r.set_xlabel(axis)
        ax_r.set_ylabel("mean rate (bit/s/Hz)")
        ax_g.legend()
        fig.tight_layout()
    return _save(fig, path)


def plot_history(history: TrainHistory, path, title: str = "") -> Path:
    fig, ax = _figure()
    epochs = range(1, len(history) + 1)
    with plt.rc_context(RC):
        ax.plot(epochs, history.train_loss, label="train")
        ax.plot(epochs, history.val_loss, label="validation")
        if history.best_epoch >= 0:
            ax.axvline(history.best_epoch + 1, color="0.5", ls=":", lw=1)
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        if title:
            ax.set_title(title)
        ax.legend()
    return _save(fig, path)


def plot_ablation(runs: Sequence[AblationRun], path) -> Path:
    fig, ax = _figure()
    with plt.rc_context(RC):
        for run in runs:
            h = run.history
            line, = ax.plot(range(1, len(h) + 1), h.val_loss, label=f"{run.label} (val)")
            ax.plot(range(1, len(h) + 1), h.train_loss, ls="--", color=line.get_color(), lw=1)
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.legend()
    return _save(fig, path)


def plot_sample_study(rows, path) -> Path:
    fig, ax = _figure()
    with plt.rc_context(RC):
        ax.semilogx([r[0] for r in rows], [r[2] for r in rows], marker="o")
        ax.set_xlabel("training samples")
        ax.set_ylabel("percent of reference")
    return _save(fig, path)


def plot_timing(rows: Sequence[TimingRow], path) -> Path:
    fig, ax = _figure()
    configs = sorted({(r.M, r.N) for r in rows})
    methods = sorted({r.method for r in rows})
    width = 0.8 / max(len(methods), 1)
    with plt.rc_context(RC):
        for k, name in enumerate(methods):
            vals = [next((r.mean_ms for r in rows if (r.M, r.N) == c and r.method == name), float("nan"))
                    for c in configs]
            ax.bar([i + k * width for i in range(len(configs))], vals, width, label=name)
        ax.set_yscale("log")
        ax.set_xticks([i + width * (len(methods) - 1) / 2 for i in range(len(configs))])
        ax.set_xticklabels([f"M={m}, N={n}" for m, n in configs])
        ax.set_ylabel("mean time per instance (ms)")
        ax.legend()
    return _save(fig, path)


def _gnuplot_preamble(csv_name: str, png_name: str) -> list[str]:
    return [
        "# generated by risbf",
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set key autotitle columnhead",
        "set grid",
        "set terminal pngcairo size 800,600",
        f"set output '{png_name}'",
        f"data = '{csv_name}'",
    ]


def gnuplot_sweep(csv_name: str, methods: Sequence[str], axis: str, png_name: str) -> str:
    """Script plotting mean_gain (column 9) against the axis value (column 2) per method."""
    lines = _gnuplot_preamble(csv_name, png_name)
    lines += [f"set xlabel '{axis}'", "set ylabel 'mean channel gain'"]
    plots = [f"data using 2:(strcol(8) eq '{m}' ? $9 : 1/0) with linespoints title '{m}'"
             for m in methods]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def gnuplot_history(csv_name: str, png_name: str) -> str:
    lines = _gnuplot_preamble(csv_name, png_name)
    lines += ["set xlabel 'epoch'", "set ylabel 'loss'",
              "plot data using 1:2 with lines title 'train', \\\n     data using 1:3 with lines title 'validation'"]
    return "\n".join(lines) + "\n"


def gnuplot_timing(csv_name: str, png_name: str) -> str:
    lines = _gnuplot_preamble(csv_name, png_name)
    lines += ["set logscale y", "set ylabel 'mean time per instance (ms)'",
              "set style data histogram", "set style fill solid 0.7",
              "plot data using 5:xtic(sprintf('M=%s,N=%s %s', strcol(1), strcol(2), strcol(3))) title 'mean ms'"]
    return "\n".join(lines) + "\n"
