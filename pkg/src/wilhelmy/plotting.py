"""Figure rendering for CLI reports (Agg backend, PNG files next to the data)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}

# no timestamps or version strings in the PNG
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path


def profile_figure(path, prof, level=None, title=None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 2.8))
        ax.plot(prof.r, prof.h, color="C0", label="h(r)")
        if level is not None:
            ax.axhline(level, color="0.5", ls="--", lw=0.8, label="F + λ/g")
        ax.set_xlabel("r")
        ax.set_ylabel("h")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        return _save(fig, path)


def trace_figure(path, trace) -> Path:
    F = trace.column("F")
    ell = trace.column("ell")
    t = np.array(trace.t)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(10, 2.8))
        axes[0].plot(F, ell, color="C0")
        axes[0].set_xlabel("F")
        axes[0].set_ylabel("ℓ")
        axes[0].set_title("contact height loop")
        axes[1].plot(F, trace.P_weak, color="C1", label="P*")
        axes[1].plot(F, trace.P_contact, color="C2", ls=":", label="P contact")
        axes[1].set_xlabel("F")
        axes[1].set_ylabel("pressure")
        axes[1].legend(frameon=False)
        axes[2].plot(t, trace.energy, color="C3", label="energy")
        ax2 = axes[2].twinx()
        ax2.plot(t, trace.diss_cum, color="C4", ls="--", label="dissipation")
        axes[2].set_xlabel("t")
        axes[2].set_ylabel("energy")
        ax2.set_ylabel("cumulative dissipation")
        fig.tight_layout()
        return _save(fig, path)


def sweep_figure(path, table) -> Path:
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(8, 2.8))
        for k, ell in table.ell.items():
            axes[0].plot(table.F, ell, lw=0.9, label=f"R = {k}")
        axes[0].set_xlabel("F")
        axes[0].set_ylabel("ℓ")
        axes[0].legend(frameon=False)
        Rs = np.array(table.R)
        devs = np.array([table.max_dev[table.key(R)] for R in table.R])
        axes[1].loglog(Rs, devs, "o-", color="C0")
        axes[1].set_xlabel("R")
        axes[1].set_ylabel(r"$\max_t\,|\ell_R - \ell_\infty|$")
        axes[1].set_title(f"slope {table.slope:.2f}")
        fig.tight_layout()
        return _save(fig, path)


def barrier_figure(path, r, psi, interior) -> Path:
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(8, 2.8))
        axes[0].semilogy(r, psi, color="C0")
        axes[0].set_xlabel("r")
        axes[0].set_ylabel("barrier")
        axes[1].plot(r, interior / psi, color="C1")
        axes[1].axhline(0.0, color="0.5", lw=0.8)
        axes[1].set_xlabel("r")
        axes[1].set_ylabel("(−H + gψ)/ψ")
        fig.tight_layout()
        return _save(fig, path)
