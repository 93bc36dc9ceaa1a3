"""Machine-readable reports and matplotlib figures for CLI runs."""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .chmodel import CHInstance, CHSolution  # noqa: E402
from .numerics import PiecewisePoly  # noqa: E402

MAX_AGENT_ROWS = 12


def _density_of(a) -> PiecewisePoly | None:
    if isinstance(a, PiecewisePoly):
        return a.derivative()
    return None


def plot_instance(inst: CHInstance, path: Path, sol: CHSolution | None = None, title: str = "") -> Path:
    """Agent densities stacked vertically, with cut positions when given."""
    dens = [_density_of(a) for a in inst.agents]
    rows = [k for k, d in enumerate(dens) if d is not None][:MAX_AGENT_ROWS]
    L = float(inst.domain_length)
    fig, axes = plt.subplots(max(len(rows), 1), 1, figsize=(8, 0.8 + 0.7 * max(len(rows), 1)), sharex=True, squeeze=False)
    ts = np.linspace(0.0, L, 2000, endpoint=False)
    for ax, k in zip(axes[:, 0], rows):
        ax.fill_between(ts, [dens[k].eval_float(t) for t in ts], step="post", color="0.55", linewidth=0)
        ax.set_ylabel(f"{k}", rotation=0, labelpad=12, fontsize=8)
        ax.tick_params(labelsize=7)
        if sol is not None:
            for t in sol.cuts:
                ax.axvline(float(t), color="tab:red", linewidth=0.7)
    if not rows:
        axes[0, 0].text(0.5, 0.5, "circuit-valued agents", ha="center", va="center")
    axes[-1, 0].set_xlabel("position")
    if title:
        fig.suptitle(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_point(x: Sequence[Fraction], path: Path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5, 3))
    xs = [float(v) for v in x]
    ax.bar(range(len(xs)), xs, color=["tab:blue" if v >= 0 else "tab:orange" for v in xs])
    ax.axhline(0, color="black", linewidth=0.6)
    ax.set_xlabel("coordinate")
    ax.set_ylabel("value")
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_ranges(ranges: dict, path: Path, title: str = "") -> Path:
    """Certified node ranges as vertical intervals."""
    fig, ax = plt.subplots(figsize=(7, 3))
    nodes = sorted(ranges)
    for n in nodes:
        lo, hi = ranges[n]
        ax.plot([n, n], [float(lo), float(hi)], color="tab:green", linewidth=2)
    ax.set_ylim(-0.05, 1.05)
    ax.set_xlabel("node")
    ax.set_ylabel("range")
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def write_report(directory: str | Path, data: dict, figures: dict[str, callable] | None = None) -> Path:
    """Write report.json and every figure produced by ``figures`` callables."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = []
    for name, draw in (figures or {}).items():
        draw(d / name)
        names.append(name)
    payload = dict(data, figures=names)
    out = d / "report.json"
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return out
