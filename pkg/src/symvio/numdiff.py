"""Central-difference differentiation oracles for charted maps."""

from __future__ import annotations

import numpy as np


def numeric_differential(f, x0, step: float = 1e-6, richardson: bool = False) -> np.ndarray:
    """Jacobian of f: R^k -> R^m at x0 by central differences.

    With richardson=True the step-halved estimate is extrapolated,
    cancelling the leading O(step^2) truncation term.
    """
    if richardson:
        coarse = numeric_differential(f, x0, step, richardson=False)
        fine = numeric_differential(f, x0, 0.5 * step, richardson=False)
        return (4.0 * fine - coarse) / 3.0

    x0 = np.asarray(x0, dtype=float).reshape(-1)
    f0 = np.asarray(f(x0), dtype=float).reshape(-1)
    jac = np.empty((f0.size, x0.size))
    for j in range(x0.size):
        dx = np.zeros_like(x0)
        dx[j] = step
        fp = np.asarray(f(x0 + dx), dtype=float).reshape(-1)
        fm = np.asarray(f(x0 - dx), dtype=float).reshape(-1)
        jac[:, j] = (fp - fm) / (2.0 * step)
    return jac


def mixed_partial(f, t_step: float, x0, x_step: float) -> np.ndarray:
    """Mixed second derivative d^2/dt dx_j of f(t, x) at (0, x0).

    Four-point central difference in both arguments; f returns an m-vector.
    Used to differentiate flows: the t slot is time, the x slots are
    perturbation coordinates.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    probe = np.asarray(f(t_step, x0), dtype=float).reshape(-1)
    jac = np.empty((probe.size, x0.size))
    for j in range(x0.size):
        dx = np.zeros_like(x0)
        dx[j] = x_step
        fpp = np.asarray(f(t_step, x0 + dx), dtype=float).reshape(-1)
        fpm = np.asarray(f(t_step, x0 - dx), dtype=float).reshape(-1)
        fmp = np.asarray(f(-t_step, x0 + dx), dtype=float).reshape(-1)
        fmm = np.asarray(f(-t_step, x0 - dx), dtype=float).reshape(-1)
        jac[:, j] = (fpp - fpm - fmp + fmm) / (4.0 * t_step * x_step)
    return jac
