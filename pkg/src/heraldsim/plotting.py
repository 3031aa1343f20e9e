"""SVG figures regenerated from CSV rows."""

from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_X = {
    "point": ("T_gamma", r"window $T$ ($1/\gamma$)"),
    "tscan": ("T_gamma", r"window $T$ ($1/\gamma$)"),
    "kscan": ("kappa", r"filter bandwidth $\kappa_{cav}$ ($\gamma$)"),
    "optcurve": ("T_gamma", r"window $T$ ($1/\gamma$)"),
    "coopscan": ("C", r"cooperativity $C = \Gamma/\gamma$"),
}


def _num(v):
    return np.nan if v is None else float(v)


def plot_rows(sub: str, rows: list[dict], path) -> None:
    if sub == "noisemap":
        _heatmaps(rows, path)
        return
    xkey, xlabel = _X[sub]
    series = defaultdict(list)
    for r in rows:
        if r["fidelity"] is None or r[xkey] is None:
            continue
        label = f"{r['scheme']}  dp={r['gamma_dp']:g}  sd={r['gamma_sd']:g}"
        series[label].append((float(r[xkey]), float(r["fidelity"])))
    fig, ax = plt.subplots(figsize=(6, 4))
    infid = sub in ("optcurve", "coopscan")
    for label, pts in series.items():
        pts.sort()
        x, f = np.array(pts).T
        ax.plot(x, 1 - f if infid else f, "o-", ms=3, label=label)
    ax.set_xscale("log")
    if infid:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("infidelity $1-F$" if infid else "fidelity $F$")
    if series:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _heatmaps(rows, path):
    kinds = sorted({r["scheme"] for r in rows})
    fig, axes = plt.subplots(1, max(len(kinds), 1), figsize=(4 * max(len(kinds), 1), 3.4), squeeze=False)
    for ax, kind in zip(axes[0], kinds):
        sub = [r for r in rows if r["scheme"] == kind]
        dps = sorted({r["gamma_dp"] for r in sub})
        sds = sorted({r["gamma_sd"] for r in sub})
        grid = np.full((len(dps), len(sds)), np.nan)
        for r in sub:
            grid[dps.index(r["gamma_dp"]), sds.index(r["gamma_sd"])] = 1 - _num(r["fidelity"])
        im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis")
        ax.set_xticks(range(len(sds)), [f"{v:g}" for v in sds])
        ax.set_yticks(range(len(dps)), [f"{v:g}" for v in dps])
        ax.set_xlabel(r"$\gamma_{sd}$ ($\gamma$)")
        ax.set_ylabel(r"$\gamma_{dp}$ ($\gamma$)")
        ax.set_title(kind)
        fig.colorbar(im, ax=ax, label="optimal $1-F$")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
