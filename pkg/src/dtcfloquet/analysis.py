"""Analytic cross-checks and lineshape post-processing."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import IllConditioned, OutsideDomain
from .model import ModelParams, derive_scales


class Branch(str, enum.Enum):
    UPPER = "Upper"
    LOWER = "Lower"

    @property
    def sign(self):
        return 1.0 if self is Branch.UPPER else -1.0


@dataclass(frozen=True)
class BogoliubovParams:
    a_coef: float
    b_coef: float
    theta_bt: float
    phi_bt: float
    epsilon: float


def bogoliubov_params(p: ModelParams) -> BogoliubovParams:
    """Two-step Bogoliubov diagonalisation of the normal-phase excitation.

    Raises OutsideDomain when either inverse hyperbolic argument leaves its
    domain (close to the parametric window) instead of extrapolating.
    """
    d2 = p.delta_c**2 + p.kappa**2
    a = p.g0**2 * p.delta_c / d2
    b = 2.0 * p.g0 * p.g1 * p.delta_c / d2
    x = p.delta / (2.0 * a) - 1.0 if a > 0 else math.inf
    if not abs(x) > 1.0:
        raise OutsideDomain("theta_bt", x)
    theta = 0.5 * math.log((x + 1.0) / (x - 1.0)) if math.isfinite(x) else 0.0
    detuning = derive_scales(p).omega_res - 0.5 * p.omega
    if b == 0.0:
        y = 0.0
    elif detuning == 0.0:
        raise OutsideDomain("phi_bt", math.inf)
    else:
        y = b / detuning
    if not abs(y) < 1.0:
        raise OutsideDomain("phi_bt", y)
    phi = math.atanh(y)
    eps = (-b * (math.cosh(2 * theta) + math.sinh(2 * theta)) * math.sinh(2 * phi)
           + detuning * math.cosh(2 * phi))
    return BogoliubovParams(a, b, theta, phi, eps)


def bogoliubov_epsilon(p: ModelParams) -> float:
    return bogoliubov_params(p).epsilon


def sign_flip_detuning(p: ModelParams) -> float:
    """Detuning ``|omega_res - omega/2|`` at which the closed-form epsilon crosses zero.

    Closer to resonance the expression changes sign and then diverges at the
    domain edge ``|detuning| = b``; it is not a usable estimate there.
    """
    d2 = p.delta_c**2 + p.kappa**2
    b = 2.0 * p.g0 * p.g1 * p.delta_c / d2
    if b == 0.0:
        return 0.0
    x = p.delta / (2.0 * p.g0**2 * p.delta_c / d2) - 1.0
    # zero of the closed form: tanh(phi)^2 = 1 / (2 e^{2 theta} - 1)
    return b * math.sqrt(2.0 * (x + 1.0) / (x - 1.0) - 1.0)


def epsilon_from_coefficients(b_coef, theta_bt, detuning):
    """Closed form of the excitation frequency for explicit coefficients."""
    y = b_coef / detuning
    if not abs(y) < 1.0:
        raise OutsideDomain("phi_bt", y)
    phi = math.atanh(y)
    return (-b_coef * math.exp(2 * theta_bt) * math.sinh(2 * phi)
            + detuning * math.cosh(2 * phi))


@dataclass(frozen=True)
class Lineshape:
    center: float
    width: float
    amplitude: float
    samples: np.ndarray
    branch: Branch = Branch.UPPER
    residual_rms: float = 0.0

    def model(self, omega_pr_offset):
        x = np.asarray(omega_pr_offset, dtype=float)
        return self.amplitude * lorentzian(x, self.center, self.width)

    def to_csv(self, path, meta=None):
        from .io import write_csv

        rows = [[x, y, float(self.model(x))] for x, y in self.samples]
        write_csv(path, ["omega_pr_offset", "value", "lorentzian"], rows,
                  meta={**(meta or {}), "center": self.center, "width": self.width,
                        "amplitude": self.amplitude})


def lorentzian(x, center, width):
    """Unit-height Lorentzian with half width at half maximum ``width``."""
    return width**2 / ((x - center) ** 2 + width**2)


def fit_amplitude(x, y, center, width):
    """Least-squares amplitude of a Lorentzian with fixed centre and width."""
    shape = lorentzian(np.asarray(x, dtype=float), center, width)
    y = np.asarray(y, dtype=float)
    amp = float(np.dot(shape, y) / np.dot(shape, shape))
    resid = y - amp * shape
    return amp, float(np.sqrt(np.mean(resid**2)))


def lorentzian_overlay(fl, samples, branch=Branch.UPPER, scale=1.0) -> Lineshape:
    """Floquet-parameterised Lorentzian with a fitted amplitude.

    ``samples`` holds ``(offset, value)`` pairs where offset is
    ``omega_pr - omega/2`` in the same units as ``fl.nu_fl / scale``.  The
    centre is ``+-nu_fl`` and the half width ``|gamma_fl|``; only the
    amplitude is free.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 2 or len(samples) < 2:
        raise IllConditioned("need at least two (offset, value) samples")
    width = abs(fl.gamma_fl) / scale
    if width <= 0:
        raise IllConditioned("zero linewidth")
    center = Branch(branch).sign * fl.nu_fl / scale
    x = samples[:, 0]
    if not (x.min() <= center <= x.max()):
        raise IllConditioned(f"samples [{x.min():g}, {x.max():g}] do not bracket {center:g}")
    amp, rms = fit_amplitude(x, samples[:, 1], center, width)
    return Lineshape(center=center, width=width, amplitude=amp, samples=samples,
                     branch=Branch(branch), residual_rms=rms)


def fit_free_lorentzian(x, y, center0, width0):
    """Centre, width and amplitude all free (used to locate measured peaks)."""
    from scipy.optimize import curve_fit

    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a0 = y[np.argmax(np.abs(y))]

    def f(xx, a, c, w):
        return a * lorentzian(xx, c, w)

    popt, _ = curve_fit(f, x, y, p0=(a0, center0, width0), maxfev=20000)
    return float(popt[0]), float(popt[1]), abs(float(popt[2]))


def branch_overlay(sweep, branch=Branch.UPPER):
    """``(omega, omega/2 +- nu_fl)`` pairs for co-plotting with response maps.

    ``sweep`` is a sequence of ``(params, FloquetResult)`` sorted by omega.
    """
    out = []
    last = -math.inf
    sign = Branch(branch).sign
    for p, fl in sweep:
        if p.omega < last:
            raise ValueError("sweep must be sorted by omega")
        last = p.omega
        out.append((p.omega, 0.5 * p.omega + sign * fl.nu_fl))
    return out


def overlay_in_axes(sweep, branch=Branch.UPPER):
    """Overlay on the response-map axes ``omega/(2 omega_res)`` and offset/omega_res."""
    out = []
    for (p, _), (om, om_pr) in zip(sweep, branch_overlay(sweep, branch)):
        w = derive_scales(p).omega_res
        out.append((om / (2 * w), (om_pr - 0.5 * om) / w))
    return out
