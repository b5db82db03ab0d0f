"""Physical parameters, derived scales and the time-periodic couplings.

All frequencies are in units of the cavity linewidth ``kappa`` (normally 1).
The couplings are the closed forms obtained after adiabatic elimination of
the cavity field; they accept scalar or array time arguments.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoProbe, SupercriticalCoupling

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ProbeParams:
    """Weak coherent probe ``eta(t) = eta0 exp(-i(omega_pr t - phi))``."""

    eta0: float = 0.1
    omega_pr: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if self.eta0 < 0:
            raise ValueError(f"eta0 must be >= 0, got {self.eta0}")
        # phase is stored on [0, 2pi)
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)


@dataclass(frozen=True)
class ModelParams:
    kappa: float = 1.0
    delta_c: float = 1.0
    delta: float = 0.1
    g0: float = 0.0
    g1: float = 0.0
    omega: float = 0.1
    n_atoms: float = 1.0e4
    probe: ProbeParams | None = None
    regime_factor: float = field(default=4.0, compare=False)

    def __post_init__(self):
        for name in ("kappa", "delta_c", "delta", "omega", "n_atoms"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("g0", "g1"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")

    @classmethod
    def from_ratios(cls, g0_ratio=0.5, g1_ratio=0.6, omega_ratio=1.0, *,
                    kappa=1.0, delta_c=1.0, delta=0.1, n_atoms=1.0e4, probe=None):
        """Build parameters on the axes used in the phase diagrams.

        ``g0_ratio`` is g0/g_c, ``g1_ratio`` is g1/g0 and ``omega_ratio`` is
        omega/(2 omega_res).
        """
        g_c = critical_coupling(kappa, delta_c, delta)
        g0 = g0_ratio * g_c
        if g0 >= g_c:
            raise SupercriticalCoupling(f"g0/g_c = {g0_ratio} >= 1")
        omega_res = delta * math.sqrt(1.0 - g0_ratio**2)
        return cls(kappa=kappa, delta_c=delta_c, delta=delta, g0=g0,
                   g1=g1_ratio * g0, omega=2.0 * omega_ratio * omega_res,
                   n_atoms=n_atoms, probe=probe)

    @property
    def period(self) -> float:
        return TWO_PI / self.omega

    def replace(self, **changes) -> ModelParams:
        return dataclasses.replace(self, **changes)

    def with_probe(self, eta0=None, omega_pr=None, phi=None) -> ModelParams:
        base = self.probe or ProbeParams()
        probe = ProbeParams(
            eta0=base.eta0 if eta0 is None else eta0,
            omega_pr=base.omega_pr if omega_pr is None else omega_pr,
            phi=base.phi if phi is None else phi,
        )
        return dataclasses.replace(self, probe=probe)

    def regime_warnings(self, factor: float | None = None) -> list[str]:
        """Diagnostics for the bad-cavity regime ``omega, Delta << kappa, delta_c``.

        A warning is emitted whenever a slow scale exceeds ``1/factor`` of the
        smaller cavity scale.
        """
        factor = self.regime_factor if factor is None else factor
        fast = min(self.kappa, self.delta_c)
        out = []
        for name, value in (("omega", self.omega), ("delta", self.delta)):
            if value * factor > fast:
                out.append(
                    f"adiabatic elimination questionable: {name}={value:g} is not "
                    f"<< min(kappa, delta_c)={fast:g} (factor {factor:g})"
                )
        return out


@dataclass(frozen=True)
class DerivedScales:
    g_c: float
    omega_res: float
    gamma0: float
    period_T: float


def critical_coupling(kappa, delta_c, delta):
    return math.sqrt(delta * (delta_c**2 + kappa**2) / (4.0 * delta_c))


def derive_scales(p: ModelParams) -> DerivedScales:
    """Critical coupling, lower-polariton resonance and mean damping rate."""
    g_c = critical_coupling(p.kappa, p.delta_c, p.delta)
    if p.g0 >= g_c:
        raise SupercriticalCoupling(f"g0={p.g0:g} >= g_c={g_c:g}")
    omega_res = p.delta * math.sqrt(1.0 - (p.g0 / g_c) ** 2)
    d2 = p.delta_c**2 + p.kappa**2
    gamma0 = 4.0 * p.g0**2 * p.delta_c * p.kappa * p.delta / d2**2
    return DerivedScales(g_c=g_c, omega_res=omega_res, gamma0=gamma0,
                         period_T=p.period)


def coupling_g(p: ModelParams, t):
    return p.g0 + p.g1 * np.cos(p.omega * t)


def coupling_gdot(p: ModelParams, t):
    return -p.g1 * p.omega * np.sin(p.omega * t)


def coupling_v0(p: ModelParams, t):
    """Coherent cavity-mediated interaction, including the retardation term."""
    d2 = p.delta_c**2 + p.kappa**2
    g = coupling_g(p, t)
    return (2.0 * p.delta_c * g**2 / d2
            - 4.0 * p.delta_c * p.kappa * g * coupling_gdot(p, t) / d2**2)


def coupling_v1(p: ModelParams, t):
    """Cavity-mediated dissipative coupling (carries the level splitting)."""
    d2 = p.delta_c**2 + p.kappa**2
    return 4.0 * p.delta_c * p.delta * p.kappa * coupling_g(p, t) ** 2 / d2**2


def coupling_v2(p: ModelParams, t):
    if p.probe is None:
        raise NoProbe("coupling_v2 requires probe parameters")
    pr = p.probe
    theta = pr.omega_pr * t - pr.phi
    d2 = p.delta_c**2 + p.kappa**2
    return (2.0 * coupling_g(p, t) * pr.eta0
            * (p.delta_c * np.cos(theta) + p.kappa * np.sin(theta))
            / (math.sqrt(p.n_atoms) * d2))


def elimination_coeffs(p: ModelParams, t):
    """Adiabatic amplitudes ``(c_plus, c_minus, c_pr)`` of the displaced cavity.

    Uses the expansion to first order in ``Delta`` and in the slow time
    derivatives.  ``c_pr`` is zero when no probe is configured.
    """
    z = p.delta_c - 1j * p.kappa
    g = coupling_g(p, t)
    gdot = coupling_gdot(p, t)
    sqn = math.sqrt(p.n_atoms)
    common = g / z + 1j * gdot / z**2
    split = p.delta * g / z**2
    c_plus = -(common - split) / sqn
    c_minus = -(common + split) / sqn
    if p.probe is None:
        c_pr = np.zeros_like(c_plus)
    else:
        pr = p.probe
        eta = pr.eta0 * np.exp(-1j * (pr.omega_pr * t - pr.phi))
        eta_dot = -1j * pr.omega_pr * eta
        c_pr = -eta / z - 1j * eta_dot / z**2
    return c_plus, c_minus, c_pr


def v0_from_coeffs(p: ModelParams, t):
    c_plus, c_minus, _ = elimination_coeffs(p, t)
    return -coupling_g(p, t) * math.sqrt(p.n_atoms) * np.real(c_plus + c_minus)


def v1_from_coeffs(p: ModelParams, t):
    c_plus, c_minus, _ = elimination_coeffs(p, t)
    return p.n_atoms * p.kappa * (np.abs(c_minus) ** 2 - np.abs(c_plus) ** 2)


def v2_from_coeffs(p: ModelParams, t):
    _, _, c_pr = elimination_coeffs(p, t)
    return -2.0 * coupling_g(p, t) * np.real(c_pr) / math.sqrt(p.n_atoms)


def cavity_amplitude(p: ModelParams, t, jx, jy):
    """Mean cavity amplitude ``beta = c+ J+ + c- J- + c_pr`` in the atom-only picture."""
    c_plus, c_minus, c_pr = elimination_coeffs(p, t)
    return c_plus * (jx + 1j * jy) + c_minus * (jx - 1j * jy) + c_pr
