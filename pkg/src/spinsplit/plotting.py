"""Figures written next to the CSV/JSON outputs.

Everything renders through the Agg backend with PNG metadata stripped, so
identical data produce identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {
    "figure.figsize": (6.0, 4.2),
    "figure.dpi": 100,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.markersize": 5,
    "legend.frameon": False,
    "svg.hashsalt": "spinsplit",
}


def _save(fig, path: Path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_splitting(records: Sequence, path: str | Path, floor: float | None = None):
    """Spectral splitting against system size, one curve per epsilon."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        by_eps: dict[float, list] = {}
        for r in records:
            by_eps.setdefault(r.epsilon, []).append(r)
        for eps, recs in sorted(by_eps.items()):
            recs = sorted(recs, key=lambda r: r.n_spins)
            y = [r.splitting_spectral for r in recs]
            if not any(v > 0 for v in y):
                continue
            ax.semilogy([r.n_spins for r in recs], y, "o-", label=f"eps = {eps:g}")
        if floor:
            ax.axhline(floor, color="0.5", ls=":", label="measurement floor")
        ax.set_xlabel("number of spins")
        ax.set_ylabel("ground-cluster splitting")
        if ax.get_legend_handles_labels()[0]:
            ax.legend()
        _save(fig, Path(path))


def plot_fit(fit, path: str | Path):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        N = np.asarray(fit.sizes)
        ax.semilogy(N, fit.splittings, "ko", label="measured")
        grid = np.linspace(N.min(), N.max(), 200)
        for name, cand in fit.candidates.items():
            style = "-" if name == fit.model else "--"
            ax.semilogy(grid, cand.predict(grid), style,
                        label=f"{name} (c={cand.c:.3g}, rmse={cand.rmse:.2g})")
        ax.set_xlabel("number of spins")
        ax.set_ylabel("splitting")
        ax.legend(fontsize=8)
        _save(fig, Path(path))


def plot_trotter(rows: Sequence, path: str | Path):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        steps = [r.steps for r in rows]
        err = [r.abs_error for r in rows]
        if all(e > 0 for e in err):
            ax.loglog(steps, err, "o-", label="|trotter - exact|")
            ref = err[-1] * steps[-1] / np.asarray(steps, dtype=float)
            ax.loglog(steps, ref, "k:", label="1/steps")
        else:
            ax.plot(steps, err, "o-", label="|trotter - exact|")
            ax.set_xscale("log")
        ax.set_xlabel("time slices")
        ax.set_ylabel("absolute error")
        ax.legend()
        _save(fig, Path(path))


def plot_spectrum(eigenvalues: Sequence[float], path: str | Path, title: str = ""):
    """Level diagram of the low-lying spectrum."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(3.5, 4.2))
        for e in eigenvalues:
            ax.hlines(e, 0, 1, color="C0")
        ax.set_xticks([])
        ax.set_ylabel("energy")
        if title:
            ax.set_title(title)
        _save(fig, Path(path))
