"""Open Dicke model with local non-Markovian dephasing baths.

Simulation suite for the driven-dissipative Dicke transition when each
spin additionally couples to its own structured dephasing environment:

- ``meanfield``: product-state (mean-field) dynamics, exact as N -> inf,
  including steady-state coupling sweeps;
- ``bmf``: pair-correlation (projection-operator) dynamics with memory,
  capturing the leading 1/N corrections and their pathologies;
- ``naive``: the fully factorized control closure whose steady photon
  number stays N-independent (no transition survives);
- ``bath``: spectral densities, correlation functions, exponential fits
  and damped pseudomode embeddings of the dephasing bath;
- ``analysis``: susceptibility quadrature, critical coupling/exponent,
  rise/relaxation-time and correlator-scaling fits;
- ``cli``: reproducible command-line experiment runner.
"""

__version__ = "0.1.0"

from .model import DickeParams, InitialState, PhotonMoments  # noqa: F401
from .bath import SpectralDensity, PseudomodeEmbedding  # noqa: F401
from .meanfield import (  # noqa: F401
    TimeSeries, IntegrationDivergence, mf_run, mf_steady_sweep,
)
from .bmf import bmf_run  # noqa: F401
from .naive import naive_run, naive_steady_state  # noqa: F401
from .analysis import (  # noqa: F401
    chi_susceptibility, critical_coupling, critical_exponent_fit,
    rise_time_fit, relaxation_time_fit, connected_scaling_fit,
)
