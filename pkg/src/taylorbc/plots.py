"""Figure rendering for sweep and comparison CSVs.

Reads the delimited output back rather than taking in-memory results, so a
figure can always be regenerated from an existing run directory. Uses the Agg
backend; files are written next to the CSVs they were drawn from.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)
import numpy as np

__all__ = ["gamma_sweep_figures", "fd_compare_figure"]

_DPI = 150
_ORDER_COLORS = {0: "tab:blue", 1: "tab:orange", 2: "tab:green"}


def _read_csv(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path} has no data rows")
    return {name: np.array([float(r[name]) for r in rows]) for name in reader.fieldnames}


def _seed_stats(key_cols: list[np.ndarray], metric: np.ndarray):
    """Mean and standard deviation of `metric` across seeds per unique key."""
    keys = np.stack(key_cols, axis=1)
    uniq = np.unique(keys, axis=0)
    means, stds = [], []
    for k in uniq:
        sel = np.all(keys == k, axis=1)
        means.append(metric[sel].mean())
        stds.append(metric[sel].std())
    return uniq, np.array(means), np.array(stds)


def _style(ax, xlabel: str, ylabel: str) -> None:
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(frameon=False)


def gamma_sweep_figures(csv_path: str | Path, out_dir: str | Path) -> list[str]:
    """Per-order curves of each metric against the gain exponent."""
    cols = _read_csv(Path(csv_path))
    out = Path(out_dir)
    names = []
    for metric, fname, label in (
        ("imitation_gap", "gamma_sweep_gap.png", "imitation gap"),
        ("mean_discrepancy", "gamma_sweep_discrepancy.png", "mean action discrepancy"),
    ):
        fig, ax = plt.subplots(figsize=(5.5, 4.0))
        for p in sorted(set(cols["p"].astype(int))):
            sel = cols["p"].astype(int) == p
            keys, mean, std = _seed_stats([cols["nu"][sel]], cols[metric][sel])
            nu = keys[:, 0]
            color = _ORDER_COLORS.get(p, "tab:gray")
            ax.plot(nu, mean, marker="o", color=color, label=f"order {p}")
            ax.fill_between(nu, mean - std, mean + std, color=color, alpha=0.15)
        ax.set_yscale("log")
        _style(ax, "gain exponent", label)
        fig.tight_layout()
        fig.savefig(out / fname, dpi=_DPI)
        plt.close(fig)
        names.append(fname)
    return names


def fd_compare_figure(csv_path: str | Path, out_dir: str | Path) -> list[str]:
    """Gap of the finite-difference surrogate against probe count, with the
    exact methods drawn as horizontal reference bands."""
    cols = _read_csv(Path(csv_path))
    out = Path(out_dir)
    fig, ax = plt.subplots(figsize=(5.5, 4.0))

    exact = cols["n_diff"] == 0
    for p, label, color in ((0, "plain cloning", "tab:blue"),
                            (1, "exact first derivative", "tab:orange")):
        sel = exact & (cols["p"].astype(int) == p)
        if sel.any():
            ax.axhline(cols["imitation_gap"][sel].mean(), color=color,
                       linestyle="--", label=label)

    fd = ~exact
    if fd.any():
        keys, mean, std = _seed_stats([cols["n_diff"][fd]], cols["imitation_gap"][fd])
        n = keys[:, 0]
        ax.errorbar(n, mean, yerr=std, marker="o", color="tab:green",
                    capsize=3, label="finite differences")
    ax.set_yscale("log")
    _style(ax, "probe directions", "imitation gap")
    fig.tight_layout()
    name = "fd_compare_gap.png"
    fig.savefig(out / name, dpi=_DPI)
    plt.close(fig)
    return [name]
