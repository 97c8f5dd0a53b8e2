"""Report figures rendered to PNG files with the Agg backend.

Figures are built on :class:`matplotlib.figure.Figure` directly, so no
global pyplot state is touched and the functions are safe in headless runs.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .report import CheckResult

_STYLE = {"linewidth": 1.2}
# PNG metadata without the library version keeps the files stable across upgrades
_META = {"Software": None}


def _new(nrows: int, ncols: int, size: tuple[float, float]):
    fig = Figure(figsize=size, layout="constrained")
    FigureCanvasAgg(fig)
    axes = fig.subplots(nrows, ncols, squeeze=False)
    for ax in axes.flat:
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
        ax.grid(True, alpha=0.3, linewidth=0.5)
    return fig, axes


def _save(fig: Figure, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, metadata=_META)
    return path


def _positive(y: np.ndarray) -> np.ndarray:
    # log axes drop non-positive samples
    y = np.asarray(y, dtype=float)
    return np.where(y > 0, y, np.nan)


def plot_flow_trace(trace, path: str | os.PathLike) -> Path:
    """Four panels: J_beta, E_beta (log), the range of phi_dot, and the margins."""
    t = trace.times
    fig, ax = _new(2, 2, (9.0, 6.5))
    ax[0, 0].plot(t, trace.column("J_beta"), **_STYLE)
    ax[0, 0].set(xlabel="t", ylabel="J_beta", title="functional")
    ax[0, 1].semilogy(t, _positive(trace.column("E_beta")), **_STYLE)
    ax[0, 1].set(xlabel="t", ylabel="E_beta", title="energy")
    ax[1, 0].plot(t, trace.column("min_dot"), label="min", **_STYLE)
    ax[1, 0].plot(t, trace.column("max_dot"), label="max", **_STYLE)
    ax[1, 0].set(xlabel="t", ylabel="phi_dot", title="range of phi_dot")
    ax[1, 0].legend(frameon=False)
    for name in ("pos_margin", "ellip_margin", "eig_margin"):
        ax[1, 1].plot(t, trace.column(name), label=name, **_STYLE)
    ax[1, 1].set(xlabel="t", ylabel="margin", title="monitors")
    ax[1, 1].legend(frameon=False)
    return _save(fig, path)


def plot_geodesic(result, path: str | os.PathLike) -> Path:
    """Segment speeds and the per-node sup of the geodesic residual."""
    from .geodesics import geodesic_residual

    K = result.path.K
    fig, ax = _new(1, 2, (9.0, 3.5))
    mid = (np.arange(K) + 0.5) / K
    ax[0, 0].plot(mid, result.speeds, marker="o", markersize=3, **_STYLE)
    ax[0, 0].set(xlabel="s", ylabel="speed", title="segment speeds")
    if K >= 2:
        r = geodesic_residual(result.path)
        sup = np.max(np.abs(r.reshape(r.shape[0], -1)), axis=1)
        ax[0, 1].semilogy(np.arange(1, K) / K, _positive(sup), marker="o", markersize=3, **_STYLE)
    ax[0, 1].set(xlabel="s", ylabel="sup |residual|", title="geodesic residual")
    return _save(fig, path)


def plot_refinement(ks, residuals, path: str | os.PathLike) -> Path:
    """Residual against node count on log axes with the fitted slope."""
    ks = np.asarray(ks, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    fig, ax = _new(1, 1, (4.5, 3.5))
    a = ax[0, 0]
    a.loglog(ks, _positive(residuals), marker="o", **_STYLE)
    if len(ks) >= 2 and np.all(residuals > 0):
        slope = -np.polyfit(np.log(ks), np.log(residuals), 1)[0]
        a.set_title(f"observed order {slope:.2f}")
    a.set(xlabel="K", ylabel="sup |residual|")
    return _save(fig, path)


def plot_checks(checks: list[CheckResult], path: str | os.PathLike) -> Path:
    """Horizontal bars of (lhs - rhs) / tolerance on a symmetric log axis, colored by outcome."""
    fig, ax = _new(1, 1, (7.0, 0.3 * max(len(checks), 1) + 1.5))
    a = ax[0, 0]
    if checks:
        val = []
        for c in checks:
            gap = float(c.lhs) - float(c.rhs)
            scale = float(c.tolerance) if c.tolerance and np.isfinite(c.tolerance) else 1.0
            val.append(gap / scale if np.isfinite(gap) else 0.0)
        y = np.arange(len(checks))
        colors = ["tab:green" if c.passed else "tab:red" for c in checks]
        a.barh(y, val, color=colors)
        a.set_yticks(y, [c.name for c in checks], fontsize=7)
        a.invert_yaxis()
        a.set_xscale("symlog", linthresh=1.0)
        a.axvline(1.0, color="k", linewidth=0.6, linestyle="--")
    a.set(xlabel="(lhs - rhs) / tolerance", title="checks")
    return _save(fig, path)
