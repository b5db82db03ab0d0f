"""Atom-only mean-field dynamics of the modulated dissipative Dicke model.

The state is the collective spin ``(Jx, Jy, Jz)`` (extensive, scales with N).
Integration uses a fixed-step classical RK4 so that samples land on an exact
subdivision of the doubled drive period ``2T``; the Floquet module relies on
that grid.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import NonFinite
from .model import ModelParams, cavity_amplitude, coupling_v0, coupling_v1, derive_scales

DEFAULT_TOL = 1e-6
DEFAULT_TILT = 1e-3
DEFAULT_N_CUT = 4096
RELAX_N_CUT = 1024


@dataclass(frozen=True)
class SpinState:
    jx: float
    jy: float
    jz: float

    @classmethod
    def normal_phase(cls, n_atoms):
        return cls(0.0, 0.0, -0.5 * n_atoms)

    @classmethod
    def tilted(cls, n_atoms, eps=DEFAULT_TILT):
        """Normal phase tipped by ``eps`` towards +x, on the sphere ``L = N/2``."""
        return cls(eps * n_atoms, 0.0, -0.5 * n_atoms * math.sqrt(1.0 - 4.0 * eps**2))

    @classmethod
    def from_array(cls, a):
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def as_array(self):
        return np.array([self.jx, self.jy, self.jz], dtype=float)

    @property
    def length_sq(self):
        return self.jx**2 + self.jy**2 + self.jz**2


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled spin trajectory; ``samples[k]`` is the state at ``t0 + k dt``."""

    t0: float
    dt: float
    samples: np.ndarray
    params: ModelParams

    def __post_init__(self):
        if self.samples.ndim != 2 or self.samples.shape[1] != 3:
            raise ValueError("samples must have shape (n, 3)")
        if len(self.samples) < 2:
            raise ValueError("a trajectory needs at least two samples")

    def __len__(self):
        return len(self.samples)

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(len(self.samples))

    @property
    def t_end(self):
        return self.t0 + self.dt * (len(self.samples) - 1)

    def state(self, k) -> SpinState:
        return SpinState.from_array(self.samples[k])

    @property
    def final(self) -> SpinState:
        return self.state(-1)

    def to_csv(self, path):
        from .io import write_csv

        n = self.params.n_atoms
        rows = np.column_stack([self.times, self.samples / n])
        write_csv(path, ["t", "jx", "jy", "jz"], rows,
                  meta={"units": "t in 1/kappa; spins normalised by N"})


class AttractorKind(str, enum.Enum):
    FIXED_POINT = "FixedPoint"
    LIMIT_CYCLE_2T = "LimitCycle2T"
    UNCONVERGED = "Unconverged"


@dataclass(frozen=True)
class AttractorInfo:
    kind: AttractorKind
    cycle: Trajectory
    residual: float
    order_param: float
    relax_periods: int = 0

    @property
    def converged(self):
        return self.kind is not AttractorKind.UNCONVERGED


class Direction(str, enum.Enum):
    UP = "Up"
    DOWN = "Down"


def _kernel_args(p: ModelParams, with_probe: bool):
    d2 = p.delta_c**2 + p.kappa**2
    a0 = 2.0 * p.delta_c / d2
    a1 = 4.0 * p.delta_c * p.kappa / d2**2
    b1 = 4.0 * p.delta_c * p.delta * p.kappa / d2**2
    if with_probe and p.probe is not None:
        pr = p.probe
        c2 = 2.0 * pr.eta0 / (math.sqrt(p.n_atoms) * d2)
        probe = (1.0, c2, pr.omega_pr, pr.phi)
    else:
        probe = (0.0, 0.0, 0.0, 0.0)
    return (p.delta, p.g0, p.g1, p.omega, p.n_atoms, a0, a1, b1,
            p.delta_c, p.kappa) + probe


@njit(cache=True)
def _rhs(t, x, y, z, delta, g0, g1, om, n, a0, a1, b1, dc, kap,
         pon, c2, om_pr, phi):
    c = math.cos(om * t)
    g = g0 + g1 * c
    gd = -g1 * om * math.sin(om * t)
    v0 = a0 * g * g - a1 * g * gd
    v1 = b1 * g * g
    dx = -delta * y
    dy = delta * x + 4.0 * v0 * x * z / n + 4.0 * v1 * y * z / n
    dz = -4.0 * v0 * x * y / n - 4.0 * v1 * y * y / n
    if pon != 0.0:
        th = om_pr * t - phi
        v2 = c2 * g * (dc * math.cos(th) + kap * math.sin(th))
        dy += 2.0 * v2 * z
        dz -= 2.0 * v2 * y
    return dx, dy, dz


@njit(cache=True)
def _rk4(s0, t0, dt, n_steps, stride, args):
    (delta, g0, g1, om, n, a0, a1, b1, dc, kap, pon, c2, om_pr, phi) = args
    n_out = n_steps // stride + 1
    out = np.empty((n_out, 3))
    x, y, z = s0[0], s0[1], s0[2]
    out[0, 0] = x
    out[0, 1] = y
    out[0, 2] = z
    h = 0.5 * dt
    k = 1
    for i in range(n_steps):
        t = t0 + i * dt
        k1x, k1y, k1z = _rhs(t, x, y, z, delta, g0, g1, om, n, a0, a1, b1,
                             dc, kap, pon, c2, om_pr, phi)
        k2x, k2y, k2z = _rhs(t + h, x + h * k1x, y + h * k1y, z + h * k1z,
                             delta, g0, g1, om, n, a0, a1, b1, dc, kap,
                             pon, c2, om_pr, phi)
        k3x, k3y, k3z = _rhs(t + h, x + h * k2x, y + h * k2y, z + h * k2z,
                             delta, g0, g1, om, n, a0, a1, b1, dc, kap,
                             pon, c2, om_pr, phi)
        k4x, k4y, k4z = _rhs(t + dt, x + dt * k3x, y + dt * k3y, z + dt * k3z,
                             delta, g0, g1, om, n, a0, a1, b1, dc, kap,
                             pon, c2, om_pr, phi)
        x += dt * (k1x + 2.0 * k2x + 2.0 * k3x + k4x) / 6.0
        y += dt * (k1y + 2.0 * k2y + 2.0 * k3y + k4y) / 6.0
        z += dt * (k1z + 2.0 * k2z + 2.0 * k3z + k4z) / 6.0
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
            return out[:k], False
        if (i + 1) % stride == 0:
            out[k, 0] = x
            out[k, 1] = y
            out[k, 2] = z
            k += 1
    return out, True


def rhs(p: ModelParams, t: float, s: SpinState, with_probe: bool = False):
    """Time derivative of the mean-field spin, optionally with the probe terms."""
    d = _rhs(float(t), s.jx, s.jy, s.jz, *_kernel_args(p, with_probe))
    return np.array(d)


def _as_array(s):
    return s.as_array() if isinstance(s, SpinState) else np.asarray(s, dtype=float)


def integrate(p: ModelParams, s0, t_span, n_cut_per_2T: int = DEFAULT_N_CUT,
              with_probe: bool = False, stride: int = 1) -> Trajectory:
    """Fixed-step RK4 integration with step ``dt = 2T / n_cut_per_2T``.

    The end of ``t_span`` is rounded to the nearest whole step.  ``stride``
    keeps every ``stride``-th sample.
    """
    if n_cut_per_2T < 64:
        raise ValueError(f"n_cut_per_2T must be >= 64, got {n_cut_per_2T}")
    t0, t1 = map(float, t_span)
    dt = 2.0 * p.period / n_cut_per_2T
    n_steps = max(int(round((t1 - t0) / dt)), stride)
    n_steps -= n_steps % stride
    out, ok = _rk4(_as_array(s0), t0, dt, n_steps, stride, _kernel_args(p, with_probe))
    if not ok:
        raise NonFinite(f"mean-field state diverged after t={t0 + dt * stride * (len(out) - 1):g}")
    return Trajectory(t0=t0, dt=dt * stride, samples=out, params=p)


def integrate_periods(p, s0, n_periods_2T, n_cut_per_2T=DEFAULT_N_CUT, t0=0.0,
                      with_probe=False, stride=1):
    """Integrate over an exact whole number of doubled drive periods."""
    dt = 2.0 * p.period / n_cut_per_2T
    n_steps = int(n_periods_2T) * n_cut_per_2T
    out, ok = _rk4(_as_array(s0), float(t0), dt, n_steps, stride,
                   _kernel_args(p, with_probe))
    if not ok:
        raise NonFinite("mean-field state diverged")
    return Trajectory(t0=float(t0), dt=dt * stride, samples=out, params=p)


def default_relax_periods(p: ModelParams) -> int:
    """``20/gamma0`` rounded up to whole doubled periods."""
    sc = derive_scales(p)
    if sc.gamma0 <= 0:
        return 64
    return max(1, int(math.ceil(20.0 / sc.gamma0 / (2.0 * p.period))))


def order_parameter(cycle: Trajectory) -> float:
    """Single-period average of ``Jx^2`` (trapezoid rule), normalised by ``N^2``."""
    n_half = int(round(cycle.params.period / cycle.dt))
    jx = cycle.samples[: n_half + 1, 0]
    if len(jx) < 2:
        return float(jx[0] ** 2 / cycle.params.n_atoms**2)
    avg = np.trapezoid(jx**2, dx=cycle.dt) / (cycle.dt * (len(jx) - 1))
    return float(avg / cycle.params.n_atoms**2)


def find_attractor(p: ModelParams, seed, relax_periods: int | None = None,
                   tol: float = DEFAULT_TOL, n_cut: int = DEFAULT_N_CUT,
                   n_relax: int = RELAX_N_CUT, max_extensions: int = 3) -> AttractorInfo:
    """Relax from ``seed`` and classify the reached attractor.

    After ``relax_periods`` doubled periods two further 2T windows are
    integrated at ``n_cut`` samples each.  A window with variation below
    ``tol*N`` is a fixed point; a window matching its predecessor to
    ``tol*N`` is a 2T limit cycle.  Otherwise relaxation is extended by
    another ``relax_periods`` up to ``max_extensions`` times before the
    result is reported as unconverged.
    """
    if relax_periods is None:
        relax_periods = default_relax_periods(p)
    if relax_periods < 1:
        raise ValueError("relax_periods must be >= 1")
    n = p.n_atoms
    two_t = 2.0 * p.period
    state = _as_array(seed)
    elapsed = 0
    for _ in range(max_extensions + 1):
        relax = integrate_periods(p, state, relax_periods, n_relax,
                                  t0=elapsed * two_t, stride=relax_periods * n_relax)
        elapsed += relax_periods
        pair = integrate_periods(p, relax.samples[-1], 2, n_cut, t0=elapsed * two_t)
        prev = pair.samples[: n_cut + 1]
        last = pair.samples[n_cut:]
        cycle = Trajectory(t0=(elapsed + 1) * two_t, dt=pair.dt, samples=last, params=p)
        spread = float(np.max(np.abs(last - last.mean(axis=0)))) / n
        strobe = float(np.max(np.linalg.norm(last - prev, axis=1))) / n
        if spread < tol:
            return AttractorInfo(AttractorKind.FIXED_POINT, cycle, spread,
                                 order_parameter(cycle), elapsed + 2)
        if strobe < tol:
            return AttractorInfo(AttractorKind.LIMIT_CYCLE_2T, cycle, strobe,
                                 order_parameter(cycle), elapsed + 2)
        state = last[-1]
        elapsed += 2
    return AttractorInfo(AttractorKind.UNCONVERGED, cycle, min(spread, strobe),
                         order_parameter(cycle), elapsed)


POLISH_TOL = 1e-9


def polish_cycle(p: ModelParams, info: AttractorInfo, tol: float = POLISH_TOL,
                 relax_periods: int | None = None, n_cut: int = DEFAULT_N_CUT,
                 max_extensions: int = 2) -> AttractorInfo:
    """Continue relaxing a converged limit cycle until its residual is below ``tol``.

    The linearisation inherits the distance from the exact cycle, so the
    Floquet analysis benefits from a reference much tighter than the
    classification tolerance.  Returns ``info`` unchanged if the tighter
    target is not reached (slow, near-critical cycles).
    """
    if info.kind is not AttractorKind.LIMIT_CYCLE_2T or info.residual < tol:
        return info
    more = find_attractor(p, info.cycle.samples[-1], relax_periods=relax_periods, tol=tol,
                          n_cut=n_cut, max_extensions=max_extensions)
    if more.kind is not AttractorKind.LIMIT_CYCLE_2T:
        return info
    # whole 2T windows keep the drive phase; restore absolute time
    shift = info.cycle.t_end
    cycle = Trajectory(t0=more.cycle.t0 + shift, dt=more.cycle.dt, samples=more.cycle.samples,
                       params=p)
    return AttractorInfo(more.kind, cycle, more.residual, more.order_param,
                         info.relax_periods + more.relax_periods)


def retilt(s, n_atoms, eps=DEFAULT_TILT):
    """Add a small +x tilt to ``s`` and renormalise onto ``L = N/2``."""
    a = _as_array(s).copy()
    a[0] += eps * n_atoms
    return a * (0.5 * n_atoms / np.linalg.norm(a))


def hysteresis_scan(p: ModelParams, omega_grid, direction=Direction.UP,
                    tilt: float = DEFAULT_TILT, **kwargs) -> list[AttractorInfo]:
    """Adiabatic sweep of the drive frequency, re-seeding from the last attractor."""
    grid = np.asarray(omega_grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("omega_grid must be sorted ascending")
    if Direction(direction) is Direction.DOWN:
        grid = grid[::-1]
    seed = SpinState.normal_phase(p.n_atoms).as_array()
    out = []
    for om in grid:
        q = p.replace(omega=float(om))
        info = find_attractor(q, retilt(seed, p.n_atoms, tilt), **kwargs)
        out.append(info)
        seed = info.cycle.samples[-1]
    if Direction(direction) is Direction.DOWN:
        out.reverse()
    return out


def probe_response(p: ModelParams, variants, seed=None, relax_periods: int | None = None,
                   avg_periods: int = 20, n_cut: int = 256, **attractor_kw):
    """Atom-only intensity change ``<|beta_pr|^2> - <|beta_0|^2>`` per probe variant.

    The probe-free attractor reached from ``seed`` (default: small +x tilt)
    is the common starting point.  Each variant ``(eta0, omega_pr, phi)`` is
    switched on there, run for ``relax_periods`` doubled periods (default
    ``10/gamma0``) and averaged over the following ``avg_periods``.
    """
    if seed is None:
        seed = SpinState.tilted(p.n_atoms)
    p = p.replace(probe=None)
    att = find_attractor(p, seed, **attractor_kw)
    s0, t0 = att.cycle.samples[0], att.cycle.t0
    if relax_periods is None:
        relax_periods = max(1, int(math.ceil(10.0 / derive_scales(p).gamma0
                                             / (2.0 * p.period))))

    def intensity(q, with_probe):
        tr = integrate_periods(q, s0, relax_periods + avg_periods, n_cut, t0=t0,
                               with_probe=with_probe)
        k = relax_periods * n_cut
        jx, jy = tr.samples[k:, 0], tr.samples[k:, 1]
        beta = cavity_amplitude(q, tr.times[k:], jx, jy)
        return float(np.mean(0.5 * (np.abs(beta[1:]) ** 2 + np.abs(beta[:-1]) ** 2)))

    base = intensity(p, False)
    out = np.empty(len(variants))
    for i, (eta0, om_pr, phi) in enumerate(variants):
        if eta0 == 0:
            out[i] = 0.0
        else:
            out[i] = intensity(p.with_probe(eta0, om_pr, phi), True) - base
    return out, base


def spin_length_sq(samples):
    return np.sum(np.asarray(samples) ** 2, axis=-1)


def couplings_on_grid(p: ModelParams, t):
    return coupling_v0(p, t), coupling_v1(p, t)
