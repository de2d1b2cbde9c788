"""Shared fixtures: expensive simulation artifacts computed once per session.

The artifact cache lets unit tests and the acceptance gate share the
same mean-field sweeps and pair-closure runs instead of recomputing
them.  Everything here is deterministic, so caching cannot change
results.
"""

import numpy as np
import pytest

from opendicke.model import DickeParams, InitialState

#: Initial spin tilts used by the thermalization fan-out fixtures. They
#: span most of the Bloch sphere so memory of the preparation is easy to
#: detect in the late-time inversion.
FAN_OUT_THETAS = (0.2, 1.0, 2.0, 3.0)


@pytest.fixture(scope="session")
def bathfree_params():
    return DickeParams(N=10, g=0.2, bath=None)


@pytest.fixture(scope="session")
def ohmic_bath():
    from opendicke.bath import SpectralDensity

    return SpectralDensity(alpha=0.3)


@pytest.fixture(scope="session")
def mf_threshold_sweep():
    """Bath-free steady sweep bracketing the threshold, shared by tests.

    Long integration (t_max chosen so critical slowing down near the
    threshold still converges to the averaging tolerance).
    """
    from opendicke.meanfield import mf_steady_sweep

    g_lo = np.arange(0.150, 0.1584, 0.0025)
    g_hi = np.array([0.1590, 0.1600, 0.1615, 0.1630, 0.1650, 0.1670,
                     0.1700, 0.1740, 0.1790, 0.1850])
    g_grid = np.concatenate((g_lo, g_hi))
    params = DickeParams(N=np.inf, g=0.1, bath=None)
    init = InitialState(theta=2.0, q0=0.05, p0=0.0)
    return mf_steady_sweep(params, g_grid, init, t_max=6000.0, dt=0.05)


@pytest.fixture(scope="session")
def bmf_rise_runs():
    """Pair-closure rise curves above threshold for four system sizes."""
    from opendicke.bmf import bmf_run

    runs = []
    for n_spins in (160, 640, 2560, 10240):
        params = DickeParams(N=n_spins, g=0.26, bath=None)
        runs.append(bmf_run(params, InitialState(theta=np.pi), t_max=300.0,
                            dt=0.02, record_every=5))
    return runs


@pytest.fixture(scope="session")
def mf_bath_fan_out(ohmic_bath):
    """Mean-field runs with the bath from four initial tilts (one batch).

    Below the bath-shifted threshold the factorized equations freeze
    each trajectory near its starting inversion, so the batch keeps a
    large late-time spread.
    """
    from opendicke.meanfield import mf_run

    params = DickeParams(N=10, g=0.16, bath=ohmic_bath)
    inits = [InitialState(theta=th) for th in FAN_OUT_THETAS]
    return mf_run(params, inits, t_max=1000.0, dt=0.1)


@pytest.fixture(scope="session")
def bmf_bath_fan_out(ohmic_bath):
    """Pair-closure runs with the bath from the same four initial tilts.

    Fluctuation feedback lets the spins exchange energy with the cavity
    and bath modes, so the late-time inversions collapse onto a common
    value; the runs are long because that equilibration is slow
    (timescale proportional to N over the squared coupling).
    """
    from opendicke.bmf import bmf_run

    runs = []
    for th in FAN_OUT_THETAS:
        params = DickeParams(N=10, g=0.16, bath=ohmic_bath)
        runs.append(bmf_run(params, InitialState(theta=th), t_max=1000.0,
                            dt=0.1, record_every=25))
    return runs


def _relax_run(n_spins, g, t_max, bath_density):
    from opendicke.bmf import bmf_run

    params = DickeParams(N=n_spins, g=g, bath=bath_density)
    return bmf_run(params, InitialState(theta=np.pi), t_max=t_max,
                   dt=0.1, record_every=25)


@pytest.fixture(scope="session")
def bmf_relax_base(ohmic_bath):
    """Smallest normal-phase relaxation run, shared by both scaling axes."""
    return _relax_run(10, 0.2, 800.0, ohmic_bath)


@pytest.fixture(scope="session")
def bmf_relax_runs_n(ohmic_bath, bmf_relax_base):
    """Normal-phase relaxation vs system size at fixed coupling."""
    runs = [bmf_relax_base]
    for n_spins, t_max in ((20, 1600.0), (40, 3200.0), (80, 6400.0)):
        runs.append(_relax_run(n_spins, 0.2, t_max, ohmic_bath))
    return runs


@pytest.fixture(scope="session")
def bmf_relax_runs_g(ohmic_bath, bmf_relax_base):
    """Normal-phase relaxation vs coupling at fixed system size."""
    runs = [bmf_relax_base]
    for g, t_max in ((0.14, 1600.0), (0.1, 3200.0)):
        runs.append(_relax_run(10, g, t_max, ohmic_bath))
    return runs
