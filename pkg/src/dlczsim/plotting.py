"""Figure rendering for the command-line reports.

Every helper writes a PNG next to the delimited output and returns the
path.  The Agg backend keeps this usable on headless machines.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "sweep_figure",
    "fit_figure",
    "decay_figure",
    "spectrum_figure",
    "filter_figure",
    "timing_figure",
    "hbt_figure",
    "wavepacket_figure",
]


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def sweep_figure(rows, path):
    """Cross-correlation and retrieval curves against the herald rate."""
    p1 = np.array([row["p1"] for row in rows])
    g12 = np.array([row["g12"] for row in rows])
    qc = np.array([row["qc"] for row in rows])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    ax1.loglog(p1, g12, "o-", ms=3)
    ax1.set_xlabel("p1")
    ax1.set_ylabel("g12")
    ax2.semilogx(p1, qc, "o-", ms=3)
    ax2.set_xlabel("p1")
    ax2.set_ylabel("qc")
    ax2.set_ylim(bottom=0.0)
    return _finish(fig, path)


def fit_figure(data, curves, path):
    """Measured points with error bars over the fitted model curves.

    Args:
        data: Sequence of MeasuredPoint.
        curves: Mapping with keys "p1" and one entry per fitted
            observable name, each a dense model curve.
        path: Output PNG path.
    """
    names = [key for key in ("g12", "qc") if key in curves]
    fig, axes = plt.subplots(1, len(names), figsize=(4.5 * len(names), 3.6),
                             squeeze=False)
    for ax, name in zip(axes[0], names):
        xs, ys, es = [], [], []
        for point in data:
            value = getattr(point, name)
            if value is not None:
                xs.append(point.p1)
                ys.append(value)
                es.append(getattr(point, f"{name}_err") or 0.0)
        ax.errorbar(xs, ys, yerr=es, fmt="o", ms=3, capsize=2, label="data")
        ax.plot(curves["p1"], curves[name], "-", label="fit")
        ax.set_xscale("log")
        if name == "g12":
            ax.set_yscale("log")
        ax.set_xlabel("p1")
        ax.set_ylabel(name)
        ax.legend()
    return _finish(fig, path)


def decay_figure(t, qc, path):
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    ax.plot(np.asarray(t) * 1e6, qc, "-")
    ax.set_xlabel("delay (us)")
    ax.set_ylabel("qc")
    ax.set_ylim(bottom=0.0)
    return _finish(fig, path)


def spectrum_figure(delta, transmission, path):
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    ax.plot(np.asarray(delta) / 1e6, transmission, "-")
    ax.set_xlabel("detuning (MHz)")
    ax.set_ylabel("transmission")
    ax.set_ylim(0.0, 1.05)
    return _finish(fig, path)


def filter_figure(chain, path):
    names = [stage.name for stage in chain.stages]
    iso = [stage.isolation_db for stage in chain.stages]
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    ax.bar(range(len(names)), iso)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("isolation (dB)")
    ax.set_title(f"total {chain.total_isolation_db:g} dB, "
                 f"transmission {chain.total_transmission:g}")
    return _finish(fig, path)


def timing_figure(sequence, path):
    names = [name for name, _ in sequence.phases]
    durations = [duration * 1e3 for _, duration in sequence.phases]
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    ax.barh(range(len(names)), durations)
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names, fontsize=8)
    ax.set_xlabel("duration (ms)")
    ax.set_xscale("log")
    ax.invert_yaxis()
    return _finish(fig, path)


def hbt_figure(g12, w_ideal, w_model, path):
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    ax.loglog(g12, w_ideal, "--", label="4/g12")
    ax.loglog(g12, w_model, "o-", ms=3, label="model")
    ax.axhline(1.0, color="gray", lw=0.8)
    ax.set_xlabel("g12")
    ax.set_ylabel("w")
    ax.legend()
    return _finish(fig, path)


def wavepacket_figure(t, amplitude, path):
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    ax.plot(np.asarray(t) * 1e9, amplitude, "-")
    ax.set_xlabel("time (ns)")
    ax.set_ylabel("amplitude")
    ax.set_ylim(bottom=0.0)
    return _finish(fig, path)
