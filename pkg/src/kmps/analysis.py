"""Cutoff extrapolation and critical-point location from gap data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ExtrapolationFit:
    """Linear fit ``value = a + b / k_max``; ``a`` is the infinite-cutoff estimate."""

    samples: list
    a: float
    b: float
    residuals: np.ndarray
    stderr_a: float
    stderr_b: float


def extrapolate_gap(samples) -> ExtrapolationFit:
    """Least-squares fit of gap data against the inverse momentum cutoff.

    ``samples`` is a list of (k_max, value) pairs with at least three
    distinct cutoffs; the occupation profile is assumed identical across
    samples (the caller varies only k_max).
    """
    samples = [(float(k), float(v)) for k, v in samples]
    ks = np.array([k for k, _ in samples])
    ys = np.array([v for _, v in samples])
    if len(samples) < 3:
        raise ValueError("need at least 3 samples to extrapolate")
    if len(set(ks.tolist())) != len(ks):
        raise ValueError("duplicate k_max values: degenerate design matrix")
    x = 1.0 / ks
    a_mat = np.column_stack([np.ones_like(x), x])
    coef, _, rank, _ = np.linalg.lstsq(a_mat, ys, rcond=None)
    if rank < 2:
        raise ValueError("degenerate design matrix")
    resid = ys - a_mat @ coef
    dof = max(len(ys) - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(a_mat.T @ a_mat)
    return ExtrapolationFit(samples=samples, a=float(coef[0]), b=float(coef[1]),
                            residuals=resid, stderr_a=float(np.sqrt(cov[0, 0])),
                            stderr_b=float(np.sqrt(cov[1, 1])))


def locate_critical_mass(gap_curve, fit_window=(0.1, 0.25)):
    """Root of a linear fit to the gap inside the window: ``(m_c, error)``.

    The error combines the fit covariance of both coefficients through the
    root formula.  A non-negative fitted slope means the gap does not
    close in the window; that is reported as an error for the caller to
    surface as a diagnostic.
    """
    lo, hi = fit_window
    pts = [(float(m), float(g)) for m, g in gap_curve if lo <= m <= hi]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points inside the window [{lo}, {hi}]")
    ms = np.array([m for m, _ in pts])
    gs = np.array([g for _, g in pts])
    a_mat = np.column_stack([np.ones_like(ms), ms])
    coef, _, rank, _ = np.linalg.lstsq(a_mat, gs, rcond=None)
    if rank < 2:
        raise ValueError("degenerate design matrix")
    c0, c1 = coef
    if c1 >= 0:
        raise ValueError("fitted gap slope is non-negative: no closing point "
                         "inside the window")
    resid = gs - a_mat @ coef
    dof = max(len(gs) - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(a_mat.T @ a_mat)
    m_c = -c0 / c1
    grad = np.array([-1.0 / c1, c0 / c1 ** 2])
    err = float(np.sqrt(grad @ cov @ grad))
    return float(m_c), err
