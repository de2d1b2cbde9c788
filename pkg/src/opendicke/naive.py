"""Fully-factorized-projector control dynamics (no pair correlations).

Under the fully factorized closure the memory kernel of each spin depends
only on same-site spin correlators, and for the bath-free model those
kernels close in elementary trigonometric form:

    k_same_r(tau)  = cos(2*omega_z*tau)
    k_same_i(tau)  = sin(2*omega_z*tau) * <sigma^z>(seed time)

while the photon kernels are the damped cavity phasor of the pair-closure
module (state-modulated real part, fixed imaginary part).  The resulting
closed system couples five photon variables (q, p, dn, dx2, dxp) and one
spin density matrix (equivalently three Bloch components) per site.

Because every kernel is a finite sum of damped phasors ``exp(w*tau)`` with
``w`` built from ``-kappa``, ``+-i*Omega`` and ``+-2i*omega_z``, all memory
integrals over seed-time Bloch/fluctuation values are stored exactly in
integrated form: complex accumulator variables obeying local ODEs
co-integrated with the state.  No window truncation is involved.

The physics headline of this closure is negative: the unscaled steady
photon number is N-independent, so the scaled number decays as 1/N and no
superradiant transition survives.  ``naive_steady_state`` solves the
parity-sector fixed point algebraically for direct comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hilbert as hb
from .integrate import rk4_integrate
from .meanfield import IntegrationDivergence, TimeSeries, _check_dt
from .model import DickeParams, InitialState, spin_state

__all__ = [
    "NaiveState",
    "naive_run",
    "naive_steady_state",
    "damped_trig_integral",
]


@dataclass
class NaiveState:
    """State of the factorized-projector integrator.

    Holds the five photon variables, the site spin state (Bloch components
    are derived views), and the kernel accumulators that store the
    Bloch-value and fluctuation-value history in exactly integrated form:
    ``phi_z/phi_zbar`` and ``psi_z/psi_zbar`` are spin-operator memory
    integrals (photon kernel acting on propagated commutator /
    anticommutator seeds), and ``scalar_acc`` holds the six damped-phasor
    integrals of past Bloch values that feed the photon second moments.
    """

    q: float
    p: float
    dn: float
    dx2: float
    dxp: float
    rho_spin: np.ndarray
    phi_z: np.ndarray
    phi_zbar: np.ndarray
    psi_z: np.ndarray
    psi_zbar: np.ndarray
    scalar_acc: np.ndarray  # A(w+,1), A(w-,1), A(w+,sz*dx2), A(w-,sz*dx2), A(w+,sz*dxp), A(w-,sz*dxp)

    @property
    def bloch(self):
        r = self.rho_spin
        return (
            float(np.trace(hb.SX @ r).real),
            float(np.trace(hb.SY @ r).real),
            float(np.trace(hb.SZ @ r).real),
        )

    def to_stack(self):
        return [
            np.array([self.q, self.p, self.dn, self.dx2, self.dxp]),
            self.rho_spin.astype(complex),
            self.phi_z.astype(complex), self.phi_zbar.astype(complex),
            self.psi_z.astype(complex), self.psi_zbar.astype(complex),
            self.scalar_acc.astype(complex),
        ]

    @classmethod
    def from_stack(cls, y):
        scal = y[0]
        return cls(
            q=float(scal[0]), p=float(scal[1]), dn=float(scal[2]),
            dx2=float(scal[3]), dxp=float(scal[4]),
            rho_spin=y[1], phi_z=y[2], phi_zbar=y[3],
            psi_z=y[4], psi_zbar=y[5], scalar_acc=y[6],
        )

    @classmethod
    def initial(cls, params, init):
        zero2 = np.zeros((2, 2), dtype=complex)
        return cls(
            q=init.q0, p=init.p0, dn=0.0, dx2=1.0 / params.N, dxp=0.0,
            rho_spin=spin_state(init.theta),
            phi_z=zero2.copy(), phi_zbar=zero2.copy(),
            psi_z=zero2.copy(), psi_zbar=zero2.copy(),
            scalar_acc=np.zeros(6, dtype=complex),
        )


def _require_bath_free(params):
    if params.bath is not None:
        raise ValueError(
            "the factorized-projector control equations are bath-free; "
            "got a bath backend"
        )


def naive_run(params, init, t_max, dt=0.02, record_every=1,
              divergence_threshold=1e6):
    """Integrate the factorized-projector equations; returns a TimeSeries.

    Records q, p, dn, dx2, dxp, n_total, n_unscaled = N*n_total, sx, sy,
    sz, and trace/Hermiticity defects of the spin state.  Requires a
    bath-free parameter set and finite N.
    """
    _require_bath_free(params)
    if np.isinf(params.N):
        raise ValueError("the control equations require finite N")
    _check_dt(params, dt)
    n_spins, g = params.N, params.g
    omega, kappa, omega_z = params.Omega, params.kappa, params.omega_z
    z = complex(-kappa, omega)
    zb = z.conjugate()
    # phasor frequencies combining the cavity and free-spin kernels
    w_plus = complex(-kappa, omega + 2.0 * omega_z)
    w_minus = complex(-kappa, omega - 2.0 * omega_z)

    sx_m, sy_m, sz_m = hb.SX, hb.SY, hb.SZ

    def rhs(t, y):
        (scal, rho, phi_z, phi_zb, psi_z, psi_zb, acc) = y
        q, p, dn, dx2, dxp = (float(v) for v in scal)
        a_p1, a_m1, a_px2, a_mx2, a_pxp, a_mxp = acc
        drive = g * q
        mean_sx = float(np.trace(sx_m @ rho).real)
        mean_sz = float(np.trace(sz_m @ rho).real)

        # photon second-moment memory integrals from scalar accumulators
        i1 = (0.5 / n_spins) * (a_p1.real + a_m1.real)
        i3 = (0.5 / n_spins) * (a_p1.imag + a_m1.imag)
        i2 = 0.5 * (a_mx2.real - a_px2.real) - 0.5 * (a_pxp.imag - a_mxp.imag)
        i4 = 0.5 * (a_mxp.real - a_pxp.real) + 0.5 * (a_px2.imag - a_mx2.imag)

        d_q = omega * p - kappa * q
        d_p = -omega * q - kappa * p - 2.0 * g * mean_sx
        d_dn = -2.0 * kappa * dn + 2.0 * g * g * (i1 + i2)
        d_dx2 = 2.0 * omega * dxp - 2.0 * kappa * dx2 + 2.0 * kappa / n_spins
        d_dxp = (
            -2.0 * omega * dx2
            - 2.0 * kappa * dxp
            + 2.0 * omega / n_spins
            + 4.0 * omega * dn
            + 4.0 * g * g * (i3 - i4)
        )

        # spin master equation with photon-kernel memory
        h_eff = omega_z * sz_m + drive * sx_m
        local = -1j * (h_eff @ rho - rho @ h_eff)
        r_int = 0.5 * (phi_z + phi_zb)
        i_int = 0.5j * (psi_z - psi_zb)
        mem = (
            -(g * g / n_spins) * (sx_m @ r_int - r_int @ sx_m)
            - 1j * (g * g / n_spins) * (sx_m @ i_int - i_int @ sx_m)
        )
        d_rho = local + mem

        # operator accumulators (cavity phasor x propagated seeds)
        comm = sx_m @ rho - rho @ sx_m
        anti = sx_m @ rho + rho @ sx_m - 2.0 * mean_sx * rho
        c_mod = n_spins * complex(dx2, -dxp)

        def loc(x):
            return -1j * (h_eff @ x - x @ h_eff)

        d_phi_z = z * phi_z + loc(phi_z) + c_mod * comm
        d_phi_zb = zb * phi_zb + loc(phi_zb) + c_mod.conjugate() * comm
        d_psi_z = z * psi_z + loc(psi_z) + anti
        d_psi_zb = zb * psi_zb + loc(psi_zb) + anti

        # scalar accumulators of past Bloch/fluctuation values
        d_acc = np.array(
            [
                w_plus * a_p1 + 1.0,
                w_minus * a_m1 + 1.0,
                w_plus * a_px2 + mean_sz * dx2,
                w_minus * a_mx2 + mean_sz * dx2,
                w_plus * a_pxp + mean_sz * dxp,
                w_minus * a_mxp + mean_sz * dxp,
            ],
            dtype=complex,
        )

        return [
            np.array([d_q, d_p, d_dn, d_dx2, d_dxp]),
            d_rho,
            d_phi_z,
            d_phi_zb,
            d_psi_z,
            d_psi_zb,
            d_acc,
        ]

    y0 = NaiveState.initial(params, init).to_stack()

    times_rec, rows = [], []

    def observer(i, t, y):
        scal, rho = y[0], y[1]
        if not np.all(np.isfinite(scal)) or np.max(np.abs(scal)) > (
            divergence_threshold
        ):
            raise IntegrationDivergence(t, y)
        if i % record_every:
            return
        q, p, dn, dx2, dxp = (float(v) for v in scal)
        n_total = dn + 0.25 * (q * q + p * p)
        times_rec.append(t)
        rows.append({
            "q": q, "p": p, "dn": dn, "dx2": dx2, "dxp": dxp,
            "n_total": n_total,
            "n_unscaled": n_spins * n_total,
            "sx": float(np.trace(hb.SX @ rho).real),
            "sy": float(np.trace(hb.SY @ rho).real),
            "sz": float(np.trace(hb.SZ @ rho).real),
            "trace_defect": abs(complex(np.trace(rho)) - 1.0),
            "herm_defect": float(np.max(np.abs(rho - rho.conj().T))),
        })

    rk4_integrate(rhs, y0, t_max, dt, observer=observer)
    data = {k: np.array([r[k] for r in rows]) for k in rows[0]}
    meta = {"kind": "naive", "dt": dt, "t_max": t_max, "N": params.N,
            "g": params.g}
    return TimeSeries(t=np.array(times_rec), data=data, meta=meta)


# ---------------------------------------------------------------------------
# Closed-form steady state (parity sector)
# ---------------------------------------------------------------------------


def damped_trig_integral(kappa, kind, a, b):
    """``int_0^inf exp(-kappa*t) * trig_a(a*t) * trig_b(b*t) dt`` exactly.

    kind is "cc", "ss", "sc", or "cs" selecting cos/sin for the two
    factors in order.  Used both by the fixed-point solver and as the
    quadrature cross-check target.
    """
    if kappa <= 0:
        raise ValueError("requires kappa > 0")

    def cos_int(c):
        return kappa / (kappa * kappa + c * c)

    def sin_int(c):
        return c / (kappa * kappa + c * c)

    if kind == "cc":
        return 0.5 * (cos_int(a - b) + cos_int(a + b))
    if kind == "ss":
        return 0.5 * (cos_int(a - b) - cos_int(a + b))
    if kind == "sc":
        return 0.5 * (sin_int(a + b) + sin_int(a - b))
    if kind == "cs":
        return 0.5 * (sin_int(a + b) - sin_int(a - b))
    raise ValueError(f"unknown kind: {kind!r}")


@dataclass
class NaiveSteadyState:
    """Parity-sector fixed point of the factorized-projector equations."""

    dn: float
    dx2: float
    dxp: float
    sz: float
    n_unscaled: float
    residual: float
    iterations: int
    converged: bool


def naive_steady_state(params, sz0=-1.0, damping=0.5, tol=1e-12,
                       max_iter=500):
    """Solve the parity-sector fixed point by damped iteration.

    For fixed ``<sigma^z>`` the photon block is linear; the spin balance
    then updates ``<sigma^z> = e_int / (N * d_int)`` where ``d_int`` and
    ``e_int`` are damped-trig integrals of the cavity kernels against the
    free-spin kernels.  Returns a NaiveSteadyState whose residual reports
    the final fixed-point defect (absolute, on sz).
    """
    _require_bath_free(params)
    if np.isinf(params.N):
        raise ValueError("the control equations require finite N")
    n_spins, g = params.N, params.g
    omega, kappa, omega_z = params.Omega, params.kappa, params.omega_z
    wz2 = 2.0 * omega_z

    k_cc = damped_trig_integral(kappa, "cc", wz2, omega)  # cos(2wz) cos(Om)
    k_ss = damped_trig_integral(kappa, "ss", wz2, omega)  # sin(2wz) sin(Om)
    k_sc = damped_trig_integral(kappa, "sc", wz2, omega)  # sin(2wz) cos(Om)
    k_cs = damped_trig_integral(kappa, "cs", wz2, omega)  # cos(2wz) sin(Om)

    def photon_solve(sz):
        # linear system for (dn, dx2, dxp) given sz:
        #  0 = -2k*dn + 2g^2*[ (1/N)k_cc + sz*(k_ss*dx2 - k_sc*dxp) ]
        #  0 =  2W*dxp - 2k*dx2 + 2k/N
        #  0 = -2W*dx2 - 2k*dxp + 2W/N + 4W*dn
        #      + 4g^2*[ (1/N)k_cs - sz*(k_ss*dxp + k_sc*dx2) ]
        g2 = g * g
        mat = np.array([
            [-2.0 * kappa, 2.0 * g2 * sz * k_ss, -2.0 * g2 * sz * k_sc],
            [0.0, -2.0 * kappa, 2.0 * omega],
            [4.0 * omega, -2.0 * omega - 4.0 * g2 * sz * k_sc,
             -2.0 * kappa - 4.0 * g2 * sz * k_ss],
        ])
        vec = -np.array([
            2.0 * g2 * k_cc / n_spins,
            2.0 * kappa / n_spins,
            2.0 * omega / n_spins + 4.0 * g2 * k_cs / n_spins,
        ])
        return np.linalg.solve(mat, vec)

    sz = float(sz0)
    it = 0
    resid = np.inf
    for it in range(1, max_iter + 1):
        dn, dx2, dxp = photon_solve(sz)
        # spin balance: sz * int C0R cos(2wz) = (1/N) int C0I sin(2wz)
        d_int = dx2 * k_cc + dxp * k_cs
        e_int = -k_ss  # int C0I sin(2wz) with C0I = -exp(-k t) sin(Om t)
        sz_new = e_int / (n_spins * d_int)
        resid = abs(sz_new - sz)
        sz = (1.0 - damping) * sz + damping * sz_new
        if resid < tol:
            break
    dn, dx2, dxp = photon_solve(sz)
    return NaiveSteadyState(
        dn=float(dn), dx2=float(dx2), dxp=float(dxp), sz=float(sz),
        n_unscaled=float(n_spins * dn),
        residual=float(resid), iterations=it, converged=bool(resid < tol),
    )
