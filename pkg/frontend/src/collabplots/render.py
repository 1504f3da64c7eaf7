"""Figure assembly: cluster-size curves and convergence races."""

from __future__ import annotations

import os
from collections import defaultdict
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .reader import load_convergence, load_sufficient_cluster  # noqa: E402

# default per-algorithm styling; unknown algorithms get the fallback cycle
DEFAULT_STYLES = {
    "oracle": dict(color="black", linestyle="--"),
    "afo-bin": dict(color="tab:blue", linestyle="-"),
    "afo-cont": dict(color="tab:orange", linestyle="-"),
    "afo-cont-exact": dict(color="tab:purple", linestyle=":"),
    "local": dict(color="tab:green", linestyle="-"),
    "fedavg": dict(color="tab:red", linestyle="-"),
}
FALLBACK_CYCLE = ["tab:brown", "tab:pink", "tab:gray", "tab:olive", "tab:cyan"]


@dataclass(frozen=True)
class PlotSpec:
    """What to draw: a figure kind, its input manifest, and the output path."""

    kind: str  # "sufficient_cluster" | "convergence"
    manifest: str
    out: str
    log_x: bool = True
    log_y: bool = True
    styles: dict = field(default_factory=lambda: dict(DEFAULT_STYLES))

    def __post_init__(self):
        if self.kind not in ("sufficient_cluster", "convergence"):
            raise ValueError(f"unknown figure kind {self.kind!r}")


def _style_for(spec: PlotSpec, algo: str, index: int) -> dict:
    return spec.styles.get(algo,
                           dict(color=FALLBACK_CYCLE[index % len(FALLBACK_CYCLE)]))


def build_sufficient_cluster_figure(spec: PlotSpec):
    """Cluster size vs target precision, one curve per heterogeneity level."""
    curves = load_sufficient_cluster(spec.manifest)
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    labels = []
    for curve in curves:
        label = f"v = {curve.v:g}"
        ax.step(curve.eps, curve.size, where="post", label=label)
        labels.append(label)
    if spec.log_x:
        ax.set_xscale("log")
    ax.set_xlabel(r"target precision $\varepsilon$")
    ax.set_ylabel("sufficient cluster size")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig, labels


def build_convergence_figure(spec: PlotSpec):
    """Mean test loss per algorithm with across-seed standard-deviation
    shading; the y axis is logarithmic."""
    runs = load_convergence(spec.manifest)
    by_algo = defaultdict(list)
    for run in runs:
        by_algo[run.algo].append(run)
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    labels = []
    for idx, algo in enumerate(sorted(by_algo)):
        group = by_algo[algo]
        iters = group[0].iters
        stacked = np.stack([r.mean_loss for r in group])
        mean = stacked.mean(axis=0)
        std = stacked.std(axis=0)
        style = _style_for(spec, algo, idx)
        ax.plot(iters, mean, label=algo, **style)
        color = style.get("color")
        # the log axis drops non-positive parts of the band on its own
        ax.fill_between(iters, mean - std, mean + std, alpha=0.2, color=color)
        labels.append(algo)
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel("iterations")
    ax.set_ylabel("test loss")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig, labels


def render(spec: PlotSpec) -> list[str]:
    """Render the figure to spec.out; returns the legend labels drawn.

    Nothing is written if loading or drawing fails, so a bad input never
    leaves a partial image behind.
    """
    if spec.kind == "sufficient_cluster":
        fig, labels = build_sufficient_cluster_figure(spec)
    else:
        fig, labels = build_convergence_figure(spec)
    try:
        out_dir = os.path.dirname(os.path.abspath(spec.out))
        os.makedirs(out_dir, exist_ok=True)
        fig.savefig(spec.out, dpi=150)
    finally:
        plt.close(fig)
    return labels
