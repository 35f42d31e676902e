"""Render per-run diagnostic figures (cardinality / objective / energy curves)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

__all__ = ["render_run_figures"]


def _series(run, attr):
    rows = run.result.trace
    return [r.k for r in rows], [getattr(r, attr) for r in rows]


def render_run_figures(report, out_dir):
    """Write cardinality, objective, and energy curves for every solver in the
    report to ``out_dir/figures``; returns the list of written paths."""
    fig_dir = Path(out_dir) / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    written = []

    panels = [
        ("card", "cardinality.png", "iterate cardinality", False),
        ("F", "objective.png", "objective F(x_k)", True),
        ("energy", "energy.png", "descent energy", True),
    ]
    for attr, fname, label, logy in panels:
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        for name, run in report.runs.items():
            ks, vals = _series(run, attr)
            ax.plot(ks, vals, lw=1.4, label=name)
        if logy and all(v > 0 for _, run in report.runs.items() for v in _series(run, attr)[1]):
            ax.set_yscale("log")
        ax.set_xlabel("iteration k")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = fig_dir / fname
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written
