"""Fixed-step RK4 driver shared by the mean-field, pair, and control solvers.

All dynamical equations in this package are integrated with the classical
fourth-order Runge-Kutta rule on a uniform grid.  A uniform grid is load
bearing: the memory-kernel machinery stores histories and accumulators that
assume equally spaced seed times.  States are "stacks": flat lists of numpy
arrays (scalars allowed), combined entrywise.
"""

from __future__ import annotations

import numpy as np


def _axpy(y, a, k):
    return [yi + a * ki for yi, ki in zip(y, k)]


def rk4_step(rhs, t, y, dt):
    """One RK4 step of dy/dt = rhs(t, y) for a list-of-arrays state."""
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, _axpy(y, 0.5 * dt, k1))
    k3 = rhs(t + 0.5 * dt, _axpy(y, 0.5 * dt, k2))
    k4 = rhs(t + dt, _axpy(y, dt, k3))
    return [
        yi + (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d)
        for yi, a, b, c, d in zip(y, k1, k2, k3, k4)
    ]


def rk4_integrate(rhs, y0, t_max, dt, observer=None, pre_step=None):
    """Integrate from t=0 to t_max (inclusive endpoint on the grid).

    observer(i, t, y) is called at every grid point including t=0;
    pre_step(i, t, y) -> y may mutate/extend the state right before each step
    (used to seed new history auxiliaries).
    """
    n_steps = int(round(t_max / dt))
    y = list(y0)
    t = 0.0
    if observer is not None:
        observer(0, t, y)
    for i in range(n_steps):
        if pre_step is not None:
            y = pre_step(i, t, y)
        y = rk4_step(rhs, t, y, dt)
        t = (i + 1) * dt
        if observer is not None:
            observer(i + 1, t, y)
    return y


def max_timestep(omega_max, fraction=0.02):
    """Largest dt honouring the stability precondition dt <= fraction*2*pi/w."""
    if omega_max <= 0:
        return np.inf
    return fraction * 2.0 * np.pi / omega_max


def convergence_order(rhs, y0, t_max, dt, norm=None):
    """Empirical RK4 order from a dt vs dt/2 halving experiment.

    Returns (order, err_coarse, err_fine) where errors are measured against a
    dt/4 reference and `order` = log2(err_coarse / err_fine).  For a smooth
    rhs this sits near 4.
    """
    if norm is None:
        norm = lambda a, b: max(
            float(np.max(np.abs(np.asarray(x) - np.asarray(y))))
            for x, y in zip(a, b)
        )
    sols = {}
    for fac in (1, 2, 4):
        sols[fac] = rk4_integrate(rhs, y0, t_max, dt / fac)
    err_coarse = norm(sols[1], sols[4])
    err_fine = norm(sols[2], sols[4])
    # the dt/4 reference biases both errors the same way; the ratio is ~2^p
    order = float(np.log2(err_coarse / err_fine)) if err_fine > 0 else np.inf
    return order, err_coarse, err_fine
