"""Floquet stability analysis and probe spectroscopy of a dissipative time crystal.

The modulated open Dicke model is treated on two levels: atom-only
mean-field equations (``meanfield``) whose attractors are linearised over
one doubled drive period (``floquet``), and truncated-Wigner simulations of
spins plus cavity with vacuum noise and a weak probe (``wigner``).
``analysis`` holds the closed-form normal-phase spectrum and lineshape
fitting; ``cli`` is the batch front end.
"""

from .errors import (
    ConfigError,
    DTCError,
    IllConditioned,
    NoProbe,
    NonFinite,
    NumericalError,
    OutsideDomain,
    SupercriticalCoupling,
    TooCoarse,
)
from .model import DerivedScales, ModelParams, ProbeParams, derive_scales
from .meanfield import AttractorInfo, AttractorKind, SpinState, Trajectory, find_attractor
from .floquet import Classification, FloquetResult, floquet_analysis, spectrum_sweep
from .wigner import EnsembleSpec, FullState, ProbeResponseMap
from .analysis import Branch, BogoliubovParams, Lineshape, bogoliubov_epsilon

__version__ = "0.1.0"

__all__ = [
    "AttractorInfo", "AttractorKind", "BogoliubovParams", "Branch", "Classification",
    "ConfigError", "DTCError", "DerivedScales", "EnsembleSpec", "FloquetResult", "FullState",
    "IllConditioned", "Lineshape", "ModelParams", "NoProbe", "NonFinite", "NumericalError",
    "OutsideDomain", "ProbeParams", "ProbeResponseMap", "SpinState", "SupercriticalCoupling",
    "TooCoarse", "Trajectory", "bogoliubov_epsilon", "derive_scales", "find_attractor",
    "floquet_analysis", "spectrum_sweep",
]
