"""Mean-field dynamics: scaled cavity amplitude + one driven open site.

The factorized (N -> inf) limit closes on a single complex amplitude
a = <a_hat>/sqrt(N) and one site density matrix:

    da/dt     = (-i Omega - kappa) a - i g <sigma^x>
    drho/dt   = L_site[2 g Re a] rho

with L_site the local generator (spin + dephasing backend) driven through
the sigma^x term.  Runs are fixed-step RK4 so that the same grids work
for the memory-kernel machinery elsewhere.

All run entry points accept a batch of initial conditions or couplings by
stacking the site matrices along a leading axis; the sweep uses that to
integrate every g in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hilbert as hb
from . import model as mdl
from .integrate import rk4_integrate, max_timestep


class IntegrationDivergence(RuntimeError):
    """NaN/Inf appeared during a run; carries the last finite state."""

    def __init__(self, t, last_state):
        super().__init__(f"divergence detected at t = {t:.6g}")
        self.t = t
        self.last_state = last_state


@dataclass
class TimeSeries:
    """Uniform-grid per-step records of a run.

    data maps column names to arrays over the grid; meta carries
    provenance (parameters, solver settings) for output sidecars.
    """

    t: np.ndarray
    data: dict
    meta: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def columns(self):
        return list(self.data)


def _omega_max(params):
    wmax = max(params.Omega, params.omega_z, params.kappa)
    b = params.bath
    if hasattr(b, "modes"):
        for _, Om, ga in b.modes:
            wmax = max(wmax, abs(Om), 0.5 * ga)
    return wmax


def _check_dt(params, dt):
    cap = max_timestep(_omega_max(params))
    if dt > cap * (1 + 1e-12):
        raise ValueError(
            f"dt = {dt} too coarse for the fastest scale; need <= {cap:.4g}"
        )


def mf_run(params, init, t_max, dt=0.01, record_every=1, embedding_profile="compact"):
    """Integrate the mean-field equations; returns a TimeSeries.

    init may be a single InitialState or a list (batched run, one column
    set per member with suffixes _0, _1, ...).  Records Re/Im a, photon
    number |a|^2, the Bloch components, trace defect, and the minimum
    eigenvalue of the spin-sector state.
    """
    params = mdl.resolve_bath(params, embedding_profile)
    _check_dt(params, dt)
    inits = init if isinstance(init, (list, tuple)) else [init]
    B = len(inits)
    dims = mdl.site_dims(params)
    D = int(np.prod(dims, dtype=int))

    rho0 = np.empty((B, D, D), dtype=complex)
    a0 = np.empty(B, dtype=complex)
    for k, ini in enumerate(inits):
        site, _, photon = mdl.build_initial_state(params, ini)
        rho0[k] = site
        a0[k] = photon.a

    L0 = mdl.site_liouvillian(params, drive=0.0)
    X = hb.lift(hb.SX, dims, 0) if len(dims) > 1 else hb.SX
    g, Om, ka = params.g, params.Omega, params.kappa

    def rhs(t, y):
        a, rho = y
        sx = np.real(np.einsum("ij,bji->b", X, rho))
        da = (-1j * Om - ka) * a - 1j * g * sx
        drho = hb.apply_liouvillian(L0, rho)
        drive = (2.0 * g * a.real)[:, None, None]
        drho = drho - 1j * drive * (X @ rho - rho @ X)
        return [da, drho]

    n_rec = int(round(t_max / dt)) // record_every + 1
    cols = ["re_a", "im_a", "n", "sx", "sy", "sz", "trace_defect", "min_eig"]
    out = {c: np.empty((n_rec, B)) for c in cols}
    t_rec = np.empty(n_rec)
    spin_keep = [0]

    def observer(i, t, y):
        a, rho = y
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(rho))):
            raise IntegrationDivergence(t, y)
        if i % record_every:
            return
        j = i // record_every
        t_rec[j] = t
        out["re_a"][j] = a.real
        out["im_a"][j] = a.imag
        out["n"][j] = np.abs(a) ** 2
        rho_spin = (hb.partial_trace(rho, list(dims), keep=spin_keep)
                    if len(dims) > 1 else rho)
        out["sx"][j] = np.real(np.einsum("ij,bji->b", hb.SX, rho_spin))
        out["sy"][j] = np.real(np.einsum("ij,bji->b", hb.SY, rho_spin))
        out["sz"][j] = np.real(np.einsum("ij,bji->b", hb.SZ, rho_spin))
        out["trace_defect"][j] = np.abs(np.einsum("bii->b", rho) - 1.0)
        herm = 0.5 * (rho_spin + np.conj(np.swapaxes(rho_spin, -1, -2)))
        out["min_eig"][j] = np.linalg.eigvalsh(herm)[:, 0]

    rk4_integrate(rhs, [a0, rho0], t_max, dt, observer=observer)

    if B == 1:
        data = {c: out[c][:, 0] for c in cols}
    else:
        data = {f"{c}_{k}": out[c][:, k] for c in cols for k in range(B)}
    meta = {"kind": "mf", "t_max": t_max, "dt": dt, "batch": B,
            "g": g, "N": params.N, "theta": [ini.theta for ini in inits]}
    return TimeSeries(t=t_rec, data=data, meta=meta)


@dataclass
class SweepPoint:
    g: float
    abs_a: float
    re_a: float
    im_a: float
    sx: float
    sz: float
    converged: bool
    # Re a / Im a, finite only when the amplitude is appreciable
    quadrature_ratio: float = np.nan


def mf_steady_sweep(params, g_grid, init, t_max, dt=0.01, embedding_profile="compact"):
    """Steady state vs coupling, integrated for all g in one batched run.

    Steady values average the final quarter of each trajectory; an entry
    is flagged non-converged when |a| or <sigma^z> drifts by more than
    1e-4 (relative, against an O(1) scale) across that window.
    """
    params = mdl.resolve_bath(params, embedding_profile)
    _check_dt(params, dt)
    g_grid = np.asarray(g_grid, dtype=float)
    G = len(g_grid)
    dims = mdl.site_dims(params)

    site, _, photon = mdl.build_initial_state(params, init)
    rho0 = np.broadcast_to(site, (G,) + site.shape).copy()
    a0 = np.full(G, photon.a, dtype=complex)

    L0 = mdl.site_liouvillian(params, drive=0.0)
    X = hb.lift(hb.SX, dims, 0) if len(dims) > 1 else hb.SX
    Om, ka = params.Omega, params.kappa
    gs = g_grid[:, None, None]

    def rhs(t, y):
        a, rho = y
        sx = np.real(np.einsum("ij,bji->b", X, rho))
        da = (-1j * Om - ka) * a - 1j * g_grid * sx
        drho = hb.apply_liouvillian(L0, rho)
        drive = 2.0 * gs * a.real[:, None, None]
        return [da, drho - 1j * drive * (X @ rho - rho @ X)]

    t_start = 0.75 * t_max
    acc = {k: np.zeros(G) for k in ("a_abs", "re_a", "im_a", "sx", "sz")}
    lo = {"a_abs": np.full(G, np.inf), "sz": np.full(G, np.inf)}
    hi = {"a_abs": np.full(G, -np.inf), "sz": np.full(G, -np.inf)}
    count = 0
    spin_keep = [0]

    def observer(i, t, y):
        nonlocal count
        a, rho = y
        if not np.all(np.isfinite(a)):
            raise IntegrationDivergence(t, y)
        if t < t_start:
            return
        count += 1
        rho_spin = (hb.partial_trace(rho, list(dims), keep=spin_keep)
                    if len(dims) > 1 else rho)
        sx = np.real(np.einsum("ij,bji->b", hb.SX, rho_spin))
        sz = np.real(np.einsum("ij,bji->b", hb.SZ, rho_spin))
        aa = np.abs(a)
        acc["a_abs"] += aa
        acc["re_a"] += a.real
        acc["im_a"] += a.imag
        acc["sx"] += sx
        acc["sz"] += sz
        np.minimum(lo["a_abs"], aa, out=lo["a_abs"])
        np.maximum(hi["a_abs"], aa, out=hi["a_abs"])
        np.minimum(lo["sz"], sz, out=lo["sz"])
        np.maximum(hi["sz"], sz, out=hi["sz"])

    rk4_integrate(rhs, [a0, rho0], t_max, dt, observer=observer)

    points = []
    for k in range(G):
        mean = {key: acc[key][k] / count for key in acc}
        drift = max(hi["a_abs"][k] - lo["a_abs"][k], hi["sz"][k] - lo["sz"][k])
        converged = bool(drift < 1e-4)
        ratio = (mean["re_a"] / mean["im_a"]
                 if abs(mean["im_a"]) > 1e-12 else np.nan)
        points.append(SweepPoint(
            g=float(g_grid[k]), abs_a=mean["a_abs"], re_a=mean["re_a"],
            im_a=mean["im_a"], sx=mean["sx"], sz=mean["sz"],
            converged=converged, quadrature_ratio=ratio,
        ))
    return points
