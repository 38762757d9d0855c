"""Figures for sweep tables and reuse profiles (rendered off-screen)."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .cache import hit_given_distance, hit_rates  # noqa: E402
from .model import HardwareConfig, ReuseProfile  # noqa: E402


def _save(fig, path):
    path = Path(path)
    # fixed metadata keeps the bytes stable between runs
    meta = {"Software": None} if path.suffix.lower() == ".png" else {"Creator": None, "CreationDate": None}
    fig.savefig(path, dpi=120, metadata=meta)
    plt.close(fig)
    return path


def plot_sweep(rows: Sequence, axis: str, path) -> Path:
    """Runtime and per-level hit rate against the swept value."""
    ok = [r for r in rows if r.ok]
    fig, (ax_t, ax_h) = plt.subplots(1, 2, figsize=(9, 3.6))
    xs = np.arange(len(ok))
    labels = [str(r.value) for r in ok]
    ax_t.plot(xs, [r.report.total_runtime_s for r in ok], "o-", color="tab:blue")
    ax_t.set_ylabel("predicted runtime [s]")
    ax_t.set_title(f"runtime vs {axis}")
    if ok:
        nlev = len(ok[0].report.hit_rates)
        for j in range(nlev):
            ax_h.plot(xs, [r.report.hit_rates[j] for r in ok], "o-", label=f"L{j + 1}")
        ax_h.legend(loc="best", fontsize=8)
    ax_h.set_ylabel("hit rate")
    ax_h.set_title("cache hit rates")
    for ax in (ax_t, ax_h):
        ax.set_xticks(xs, labels, rotation=30, fontsize=8)
        ax.set_xlabel(axis)
        ax.grid(alpha=0.3)
    failed = len(rows) - len(ok)
    if failed:
        fig.suptitle(f"{failed} value(s) skipped: invalid configuration", fontsize=9)
    fig.tight_layout()
    return _save(fig, path)


def plot_profile(profile: ReuseProfile, hw: HardwareConfig, path, title: str = "") -> Path:
    """Cumulative reuse profile with each level's hit curve, and the share of
    accesses served at every level of the hierarchy."""
    fig, (ax_c, ax_w) = plt.subplots(1, 2, figsize=(9, 3.6))
    finite = [(d, p) for d, p in profile.bins if d != math.inf]
    if finite:
        d = np.array([x for x, _ in finite], dtype=float)
        c = np.cumsum([p for _, p in finite])
        ax_c.step(d + 1, c, where="post", color="black", label="P(D <= d)")
        hi = max(d.max(), max(lv.blocks for lv in hw.cache_levels)) * 2
        grid = np.unique(np.geomspace(1, hi, 200).astype(int))
        for j, lv in enumerate(hw.cache_levels):
            ax_c.plot(grid + 1, [hit_given_distance(g, lv.associativity, lv.blocks) for g in grid],
                      "--", lw=1, label=f"L{j + 1} P(hit | d)")
        ax_c.set_xscale("log")
    ax_c.set_xlabel("reuse distance + 1 [lines]")
    ax_c.set_ylim(0, 1.05)
    ax_c.legend(fontsize=7, loc="lower right")
    ax_c.set_title(title or "reuse profile")

    rates = hit_rates(profile, hw) if profile.bins else (0.0,) * len(hw.cache_levels)
    served, remaining = [], 1.0
    for r in rates:
        served.append(remaining * r)
        remaining *= 1.0 - r
    served.append(remaining)
    names = [f"L{j + 1}" for j in range(len(rates))] + ["RAM"]
    ax_w.bar(names, served, color="tab:gray")
    for x, v in enumerate(served):
        ax_w.text(x, v, f"{v:.3f}", ha="center", va="bottom", fontsize=8)
    ax_w.set_ylim(0, 1.1)
    ax_w.set_ylabel("fraction of accesses served")
    ax_w.set_title("hit-rate waterfall")
    fig.tight_layout()
    return _save(fig, path)
