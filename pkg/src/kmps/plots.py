"""Figure rendering for run reports; every plot lands next to its CSV."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata={})
    plt.close(fig)


def plot_convergence(energies, path):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(range(1, len(energies) + 1), energies, "o-", ms=4)
    ax.set_xlabel("sweep")
    ax.set_ylabel("energy")
    ax.grid(alpha=0.3)
    _save(fig, path)


def plot_entropy_profile(bonds, entropies, path):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(bonds, entropies, "s-", ms=4)
    ax.set_xlabel("cut after mode")
    ax.set_ylabel("entanglement entropy")
    ax.grid(alpha=0.3)
    _save(fig, path)


def plot_sweep(values, columns, xlabel, path):
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for label, ys in columns.items():
        ax.plot(values, ys, "o-", ms=4, label=label)
    ax.set_xlabel(xlabel)
    ax.grid(alpha=0.3)
    ax.legend()
    _save(fig, path)


def plot_extrapolation(ks, gaps, a, b, path, target=None):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x = 1.0 / np.asarray(ks, dtype=float)
    ax.plot(x, gaps, "o", label="data")
    xs = np.linspace(0, x.max() * 1.05, 50)
    ax.plot(xs, a + b * xs, "-", label=f"fit: {a:.4f} + {b:.3f}/k")
    ax.plot([0], [a], "x", ms=9, label=f"extrapolated {a:.4f}")
    if target is not None:
        ax.axhline(target, color="gray", lw=0.8, ls="--")
    ax.set_xlabel("1 / k_max")
    ax.set_ylabel("gap")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_quench(times, energies, cos_values, entropies, path):
    fig, axes = plt.subplots(3, 1, figsize=(5.5, 7), sharex=True)
    axes[0].plot(times, cos_values)
    axes[0].set_ylabel("<:cos:> / L")
    ent = np.asarray(entropies)
    for b in range(ent.shape[1]):
        axes[1].plot(times, ent[:, b], lw=0.9)
    axes[1].set_ylabel("S at cuts")
    axes[2].plot(times, energies)
    axes[2].set_ylabel("energy")
    axes[2].set_xlabel("time")
    for ax in axes:
        ax.grid(alpha=0.3)
    _save(fig, path)


def plot_wigner(grid, path):
    fig, ax = plt.subplots(figsize=(4.6, 4))
    vmax = np.abs(grid.values).max()
    im = ax.pcolormesh(grid.phi, grid.pi, grid.values.T, cmap="RdBu_r",
                       vmin=-vmax, vmax=vmax, shading="auto")
    ax.set_xlabel("phi")
    ax.set_ylabel("pi")
    fig.colorbar(im, ax=ax, label="W")
    _save(fig, path)


def plot_fcs(result, path):
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    axes[0].plot(result.s_grid, result.char_values.real, label="Re")
    axes[0].plot(result.s_grid, result.char_values.imag, label="Im")
    axes[0].set_xlabel("s")
    axes[0].set_ylabel("generating function")
    axes[0].legend(fontsize=8)
    axes[1].plot(result.x_grid, result.distribution)
    axes[1].set_xlabel("phi")
    axes[1].set_ylabel("P(phi)")
    for ax in axes:
        ax.grid(alpha=0.3)
    _save(fig, path)
