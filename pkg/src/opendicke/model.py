"""Model builders: parameters, local Liouvillians, and initial states.

N spins (Pauli convention) couple uniformly to one lossy cavity mode,
(g/sqrt(N)) (a + a^+) sigma^x_i, and each spin additionally dephases
through sigma^z into its own bath.  The cavity enters the site dynamics
only through the scalar drive 2 g Re<a>/sqrt(N); everything else is local,
so a "site" here means spin tensor pseudomodes (or just the spin for the
bare/Markovian backends).

Scaled photon variables used throughout: q = <a+a^+>/sqrt(N),
p = i<a^+ - a>/sqrt(N), i.e. <a>/sqrt(N) = (q + i p)/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import hilbert as hb
from . import bath as bth


@dataclass(frozen=True)
class MarkovianDephasing:
    """Plain Lindblad dephasing: jump sigma^z at rate gamma_phi.

    Decays <sigma^x> at 2*gamma_phi (sigma^z rho sigma^z flips the sign of
    coherences, so the dissipator doubles the rate on off-diagonals).
    """

    gamma_phi: float


@dataclass(frozen=True)
class DickeParams:
    """Model parameters; Omega = 1 sets the unit of frequency.

    bath is one of: None (no dephasing), MarkovianDephasing,
    a resolved PseudomodeEmbedding, or a SpectralDensity that still
    needs resolving into an embedding before dynamics can run.
    N = inf selects the mean-field limit.
    """

    Omega: float = 1.0
    kappa: float = 1.0
    omega_z: float = 0.025
    g: float = 0.1
    N: float = np.inf
    bath: object = None

    def __post_init__(self):
        if self.kappa < 0 or self.g < 0:
            raise ValueError("kappa and g must be non-negative")
        if not (self.N >= 2 or np.isinf(self.N)):
            raise ValueError("N must be >= 2 (or inf for mean field)")

    def with_bath(self, bath):
        return replace(self, bath=bath)


def resolve_bath(params, profile="compact"):
    """Replace a SpectralDensity bath by its pseudomode embedding.

    A zero-coupling ohmic density resolves to the empty embedding.  The
    shipped default fit is used for the default ohmic bath; anything else
    must be fitted explicitly (bath.fit_exponentials + embedding).
    """
    b = params.bath
    if not isinstance(b, bth.SpectralDensity):
        return params
    if b.form == bth.OHMIC and b.alpha == 0.0:
        return params.with_bath(bth.empty_embedding())
    default = bth.SpectralDensity()
    if b == default:
        return params.with_bath(bth.default_embedding(profile))
    raise ValueError(
        "no shipped embedding for this spectral density; fit one explicitly"
    )


def site_dims(params):
    """Tensor factor dimensions of one site (spin first, then modes)."""
    b = params.bath
    if isinstance(b, bth.PseudomodeEmbedding):
        return (2,) + b.mode_dims
    if b is None or isinstance(b, MarkovianDephasing):
        return (2,)
    raise ValueError("unresolved bath backend; call resolve_bath first")


def site_liouvillian(params, drive=0.0):
    """LiouvillianSpec of one site under cavity drive 2g Re<a>/sqrt(N).

    H = omega_z sigma^z + drive sigma^x + mode terms; dissipation from the
    bath backend.  drive is the real scalar multiplying sigma^x.
    """
    b = params.bath
    if isinstance(b, bth.PseudomodeEmbedding):
        H, jumps, dims = bth.site_liouvillian_parts(b, params.omega_z)
        if drive != 0.0:
            H = H + drive * hb.lift(hb.SX, dims, 0)
        return hb.LiouvillianSpec(H=H, jumps=jumps)
    if b is None:
        H = params.omega_z * hb.SZ + drive * hb.SX
        return hb.LiouvillianSpec(H=H, jumps=[])
    if isinstance(b, MarkovianDephasing):
        H = params.omega_z * hb.SZ + drive * hb.SX
        return hb.LiouvillianSpec(H=H, jumps=[(b.gamma_phi, hb.SZ.copy())])
    raise ValueError("unresolved bath backend; call resolve_bath first")


@dataclass(frozen=True)
class InitialState:
    """Spin at Bloch angle theta in the x-z plane (from +z), photon near vacuum.

    q0/p0 seed the scaled cavity quadratures; seed amplitude a0/sqrt(N)
    maps to q0 = 2 Re a0, p0 = 2 Im a0.  Bath modes always start in vacuum.
    """

    theta: float = np.pi
    q0: float = 0.0
    p0: float = 0.0

    @classmethod
    def from_seed(cls, theta, a_scaled):
        return cls(theta=theta, q0=2 * np.real(a_scaled), p0=2 * np.imag(a_scaled))


@dataclass
class PhotonMoments:
    """Scaled cavity moments: q, p and the fluctuation block (dn, dx2, dxp).

    dn  = Delta<a^+ a>/N, dx2 = Delta<(a+a^+)^2>/N,
    dxp = Delta<i(a^+ a^+ - a a)>/N, all connected (mean-subtracted).
    """

    q: float = 0.0
    p: float = 0.0
    dn: float = 0.0
    dx2: float = 0.0
    dxp: float = 0.0

    @property
    def a(self):
        """Scaled coherent amplitude <a>/sqrt(N)."""
        return 0.5 * (self.q + 1j * self.p)


def spin_state(theta):
    """Pure spin state at angle theta in the x-z plane: Bloch (sin t, 0, cos t)."""
    ket = np.array([np.cos(theta / 2), np.sin(theta / 2)], dtype=complex)
    return np.outer(ket, ket.conj())


def build_initial_state(params, init):
    """(site rho, pair rho, photon moments) for a factorized start.

    Site state |theta><theta| tensor mode vacua; pair state is the product
    of two copies; photon fluctuations are vacuum: (dn, dx2, dxp) =
    (0, 1/N, 0) in scaled units (0 for the mean-field limit N = inf).
    """
    dims = site_dims(params)
    rho_spin = spin_state(init.theta)
    if len(dims) > 1:
        nm = int(np.prod(dims[1:], dtype=int))
        vac = np.zeros((nm, nm), dtype=complex)
        vac[0, 0] = 1.0
        rho_site = np.kron(rho_spin, vac)
    else:
        rho_site = rho_spin
    rho_pair = np.kron(rho_site, rho_site)
    dx2_vac = 0.0 if np.isinf(params.N) else 1.0 / params.N
    photon = PhotonMoments(q=init.q0, p=init.p0, dn=0.0, dx2=dx2_vac, dxp=0.0)
    return rho_site, rho_pair, photon


def spin_expectations(rho_site, dims):
    """(<sigma^x>, <sigma^y>, <sigma^z>) of one embedded site state."""
    rho_spin = hb.partial_trace(rho_site, list(dims), keep=[0]) if len(dims) > 1 else rho_site
    return (
        float(np.real(np.trace(hb.SX @ rho_spin))),
        float(np.real(np.trace(hb.SY @ rho_spin))),
        float(np.real(np.trace(hb.SZ @ rho_spin))),
    )
