"""PNG figures for the demo tables, rendered with the non-interactive Agg backend."""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path: str | Path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)


def plot_g_k(rows: Sequence[tuple[float, int, float, float]], path: str | Path) -> None:
    """rows of (t, k, G_exact, G_reconstructed): exact curves with reconstructed markers."""
    by_k = defaultdict(list)
    for t, k, ge, gr in rows:
        by_k[k].append((t, ge, gr))
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for k, pts in sorted(by_k.items()):
        t, ge, gr = np.array(sorted(pts)).T
        (line,) = ax.plot(t, ge, label=f"k={k}")
        ax.plot(t, gr, "o", color=line.get_color(), mfc="none")
    ax.set_xlabel("t")
    ax.set_ylabel("G_k (lines exact, markers reconstructed)")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_sigma_sweep(sigma: Sequence[float], median: Sequence[float], q1, q3, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    sigma, median = np.asarray(sigma), np.asarray(median)
    ax.fill_between(sigma, q1, q3, alpha=0.3)
    ax.loglog(sigma, median, "o-")
    ax.set_xlabel("coefficient noise sigma")
    ax.set_ylabel("median max_k |G_k exact - G_k reconstructed|")
    _save(fig, path)


def plot_circuit(rows: Sequence[tuple[float, float, float, float, float, float]], path: str | Path) -> None:
    """rows of (gamma, r, F_exact, F_recon, P_exact, P_recon)."""
    by_r = defaultdict(list)
    for g, r, fe, fr, pe, pr in rows:
        by_r[r].append((g, fe, fr, pe, pr))
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 4))
    for r, pts in sorted(by_r.items()):
        g, fe, fr, pe, pr = np.array(sorted(pts)).T
        (line,) = a1.plot(g, fe, label=f"r={r:g}")
        a1.plot(g, fr, "o", color=line.get_color(), mfc="none")
        (line,) = a2.plot(g, pe, label=f"r={r:g}")
        a2.plot(g, pr, "o", color=line.get_color(), mfc="none")
    a1.set_xlabel("gamma")
    a1.set_ylabel("fidelity to ideal layer")
    a2.set_xlabel("gamma")
    a2.set_ylabel("purity")
    a1.legend(fontsize=8)
    _save(fig, path)


def plot_shadow_bench(rows: Sequence[tuple[int, int, float, float, float]], path: str | Path) -> None:
    """rows of (M, k, median, q1, q3)."""
    by_k = defaultdict(list)
    for m, k, med, q1, q3 in rows:
        by_k[k].append((m, med, q1, q3))
    fig, ax = plt.subplots(figsize=(5, 4))
    for k, pts in sorted(by_k.items()):
        m, med, q1, q3 = np.array(sorted(pts)).T
        ax.errorbar(m, med, yerr=[med - q1, q3 - med], fmt="o-", capsize=3, label=f"k={k}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("shots M")
    ax.set_ylabel("median window trace distance")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_cmi_scan(rows: Sequence[tuple[int, int, float]], path: str | Path) -> None:
    """rows of (buffer, position, cmi)."""
    by_b = defaultdict(list)
    for b, p, v in rows:
        by_b[b].append((p, v))
    fig, ax = plt.subplots(figsize=(5, 4))
    for b, pts in sorted(by_b.items()):
        p, v = np.array(sorted(pts)).T
        ax.semilogy(p, np.maximum(v, 1e-16), "o-", label=f"|B|={b}")
    ax.set_xlabel("position of A")
    ax.set_ylabel("I(A:C|B) [bits]")
    ax.legend(fontsize=8)
    _save(fig, path)
