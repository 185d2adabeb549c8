"""PNG figures for CLI reports.

Figures are written with the non-interactive Agg backend; each function
takes plain arrays so it can also be pointed at previously exported CSVs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

DPI = 120


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(path, dpi=DPI, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_gamma_curve(N, gamma_harmonic, gamma_sobolev, path):
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    ax.semilogy(N, gamma_sobolev, "o-", ms=3, label="Sobolev")
    ax.semilogy(N, gamma_harmonic, "s-", ms=3, label="harmonic")
    ax.set_xlabel("modes N")
    ax.set_ylabel(r"residue gain $\gamma$")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_sigma_table(N, sigma_max, gamma, path):
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    ax.plot(N, sigma_max, "o-", label=r"$\sigma_{\max}$")
    ax.plot(N, gamma, "s--", label=r"$\gamma(\sigma_{\max})$")
    ax.set_xlabel("modes N")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_norms(t, state_norm, err_norm, path):
    fig, ax = plt.subplots(figsize=(6, 3.8))
    ax.semilogy(t, np.maximum(state_norm, 1e-300), label=r"$\|z(\cdot,t)\|$")
    ax.semilogy(t, np.maximum(err_norm, 1e-300), label=r"$|e^N(t)|$")
    ax.set_xlabel("t")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_control(t, u, path, held: bool = False):
    fig, ax = plt.subplots(figsize=(6, 3.2))
    if held:
        ax.step(t, u, where="post", color="k", lw=1)
    else:
        ax.plot(t, u, lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel("u(t)")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_snapshots(x, snapshots: dict, path):
    fig, ax = plt.subplots(figsize=(6, 3.8))
    for ts in sorted(k for k in snapshots if k != "x"):
        ax.plot(x, snapshots[ts], label=f"t = {ts:g}")
    ax.set_xlabel("x")
    ax.set_ylabel("z(x, t)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize="small")
    return _save(fig, path)
