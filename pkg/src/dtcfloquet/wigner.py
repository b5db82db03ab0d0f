"""Truncated-Wigner simulation of spins plus cavity with vacuum noise and probe.

Phase-space variables are the spin ``(Jx, Jy, Jz)`` and the symmetric cavity
quadratures ``a_x = a + a^dag``, ``a_p = i(a^dag - a)``.  Noise enters the
quadratures additively; the spin equations are noise free.

Ensembles are organised in *cells*.  All trajectories of a cell share the
same random stream per trajectory index, and every probe variant evaluated in
that cell (including the probe-off reference) consumes identical noise, so
intensity differences are formed with common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import NonFinite
from .model import ModelParams, derive_scales
from .rng import stream

CHUNK = 16384


@dataclass(frozen=True)
class FullState:
    jx: float
    jy: float
    jz: float
    ax: float
    ap: float

    def as_array(self):
        return np.array([self.jx, self.jy, self.jz, self.ax, self.ap], dtype=float)

    @classmethod
    def from_array(cls, a):
        return cls(*(float(v) for v in a[:5]))

    @property
    def photon_number(self):
        return 0.25 * (self.ax**2 + self.ap**2) - 0.5


@dataclass(frozen=True)
class EnsembleSpec:
    """Ensemble and time-window settings.

    ``t_relax=None`` means ``10/gamma0``; ``t_avg=None`` means 20 doubled
    drive periods.  ``dt`` is an upper bound: the actual step divides ``2T``.
    ``scheme`` is ``"heun"`` (predictor-corrector, default) or ``"euler"``.
    """

    n_traj: int = 200
    seed: int = 0
    n_atoms: float | None = None
    noise_on: bool = True
    dt: float = 0.05
    t_relax: float | None = None
    t_avg: float | None = None
    scheme: str = "heun"
    tilt: float = 0.0
    probe_on_at: float = 0.0

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.scheme not in ("heun", "euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def resolve(self, p: ModelParams):
        """``(params, dt, n_relax, n_avg, n_probe_off)`` for parameter set ``p``."""
        if self.n_atoms is not None:
            p = p.replace(n_atoms=float(self.n_atoms))
        two_t = 2.0 * p.period
        dt_max = min(self.dt, 0.05 / p.kappa, p.period / 256.0)
        per_2t = int(math.ceil(two_t / dt_max - 1e-9))
        dt = two_t / per_2t
        t_relax = self.t_relax
        if t_relax is None:
            t_relax = 10.0 / derive_scales(p).gamma0
        n_relax = int(math.ceil(t_relax / dt - 1e-9))
        if self.t_avg is None:
            n_avg = 20 * per_2t
        else:
            k = int(round(self.t_avg / two_t))
            if k < 1 or abs(k * two_t - self.t_avg) > 1e-6 * two_t:
                raise ValueError("t_avg must be a positive multiple of 2T")
            n_avg = k * per_2t
        n_off = int(math.ceil(self.probe_on_at / dt - 1e-9))
        return p, dt, n_relax, n_avg, n_off


@dataclass(frozen=True)
class EnsembleResult:
    """Per-trajectory time averages, shape ``(n_traj, n_variants)``."""

    intensity: np.ndarray
    jx: np.ndarray
    jx_sq: np.ndarray
    variants: np.ndarray
    n_atoms: float
    final: np.ndarray | None = None

    def mean(self):
        return self.intensity.mean(axis=0)

    def stderr(self, values=None):
        v = self.intensity if values is None else values
        n = v.shape[0]
        if n < 2:
            return np.zeros(v.shape[1])
        return v.std(axis=0, ddof=1) / math.sqrt(n)

    def difference(self, ref=0):
        """Mean and stderr of ``I_variant - I_ref`` (paired per trajectory)."""
        d = self.intensity - self.intensity[:, [ref]]
        return d.mean(axis=0), self.stderr(d)


@dataclass(frozen=True)
class ProbeResponseMap:
    axis1_name: str
    axis1: np.ndarray
    axis2_name: str
    axis2: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    n_traj: int
    n_atoms: float
    baseline: np.ndarray = field(default=None)
    failed: dict = field(default_factory=dict)

    def to_csv(self, path, meta=None):
        from .io import write_csv

        rows = []
        for i, a1 in enumerate(self.axis1):
            for j, a2 in enumerate(self.axis2):
                v = self.values[i, j]
                rows.append([a1, a2, v, self.stderr[i, j], self.n_traj,
                             v / self.n_atoms, self.stderr[i, j] / self.n_atoms])
        write_csv(path, [self.axis1_name, self.axis2_name, "value", "stderr", "n_traj",
                         "value_per_atom", "stderr_per_atom"], rows, meta=meta)


def sample_initial(spec: EnsembleSpec, rng: np.random.Generator | None,
                   n_atoms: float | None = None, tilt: float | None = None) -> FullState:
    """Gaussian Wigner sample of the spin-down state with the cavity in vacuum.

    ``Jz`` is fixed at ``-N/2``; ``Jx, Jy`` have variance ``N/4`` and the
    quadratures unit variance.  ``tilt`` adds a deterministic ``tilt*N`` to
    ``Jx``.
    """
    n = spec.n_atoms if n_atoms is None else n_atoms
    if n is None:
        raise ValueError("number of atoms not specified")
    tilt = spec.tilt if tilt is None else tilt
    jx = jy = ax = ap = 0.0
    if spec.noise_on:
        z = rng.standard_normal(4)
        jx = 0.5 * math.sqrt(n) * z[0]
        jy = 0.5 * math.sqrt(n) * z[1]
        ax, ap = z[2], z[3]
    return FullState(jx + tilt * n, jy, -0.5 * n, ax, ap)


@njit(cache=True)
def _drift(t, s, out, delta, g0, g1, om, sqn, kap, dc, eta0, om_pr, phi):
    g = g0 + g1 * math.cos(om * t)
    th = om_pr * t - phi
    jx, jy, jz, ax, ap = s[0], s[1], s[2], s[3], s[4]
    out[0] = -delta * jy
    out[1] = delta * jx - 2.0 * g * ax * jz / sqn
    out[2] = 2.0 * g * ax * jy / sqn
    out[3] = -kap * ax + dc * ap - 2.0 * eta0 * math.sin(th)
    out[4] = -kap * ap - dc * ax - 4.0 * g * jx / sqn - 2.0 * eta0 * math.cos(th)


@njit(cache=True)
def _advance(states, t0, dt, noise, n_off, i0, n_relax, n_avg, acc, heun,
             delta, g0, g1, om, sqn, kap, dc, eta0, om_pr, phi):
    """Advance every variant through ``len(noise)`` steps, starting at step ``i0``.

    ``acc[k]`` accumulates trapezoid-weighted (photon number, Jx, Jx^2) over
    the window of steps ``[n_relax, n_relax + n_avg]``.  The probe of each
    variant is off before step ``n_off``.  Returns False on a non-finite state.
    """
    n_var = states.shape[0]
    f1 = np.empty(5)
    f2 = np.empty(5)
    pred = np.empty(5)
    amp = math.sqrt(2.0 * kap * dt)
    end = n_relax + n_avg
    for i in range(noise.shape[0]):
        step = i0 + i
        t = t0 + step * dt
        wx = amp * noise[i, 0]
        wp = amp * noise[i, 1]
        for k in range(n_var):
            s = states[k]
            e0 = eta0[k] if step >= n_off else 0.0
            _drift(t, s, f1, delta, g0, g1, om, sqn, kap, dc, e0, om_pr[k], phi[k])
            if heun:
                for m in range(5):
                    pred[m] = s[m] + dt * f1[m]
                pred[3] += wx
                pred[4] += wp
                e1 = eta0[k] if step + 1 >= n_off else 0.0
                _drift(t + dt, pred, f2, delta, g0, g1, om, sqn, kap, dc, e1,
                       om_pr[k], phi[k])
                for m in range(5):
                    s[m] += 0.5 * dt * (f1[m] + f2[m])
            else:
                for m in range(5):
                    s[m] += dt * f1[m]
            s[3] += wx
            s[4] += wp
            for m in range(5):
                if not math.isfinite(s[m]):
                    return False
            done = step + 1
            if n_relax <= done <= end:
                w = 0.5 if (done == n_relax or done == end) else 1.0
                acc[k, 0] += w * (0.25 * (s[3] * s[3] + s[4] * s[4]) - 0.5)
                acc[k, 1] += w * s[0]
                acc[k, 2] += w * s[0] * s[0]
    return True


def _kernel_params(p: ModelParams):
    return (p.delta, p.g0, p.g1, p.omega, math.sqrt(p.n_atoms), p.kappa, p.delta_c)


def sde_step(p: ModelParams, state: FullState, t: float, dt: float,
             rng: np.random.Generator | None, probe_on: bool = False,
             noise_on: bool = True) -> FullState:
    """One Euler-Maruyama step of the stochastic spin-cavity equations."""
    s = state.as_array()
    f = np.empty(5)
    pr = p.probe if probe_on else None
    eta0, om_pr, phi = (pr.eta0, pr.omega_pr, pr.phi) if pr is not None else (0.0, 0.0, 0.0)
    delta, g0, g1, om, sqn, kap, dc = _kernel_params(p)
    _drift(float(t), s, f, delta, g0, g1, om, sqn, kap, dc, eta0, om_pr, phi)
    with np.errstate(invalid="ignore", over="ignore"):
        s = s + dt * f
        if noise_on:
            s[3:] += math.sqrt(2.0 * p.kappa * dt) * rng.standard_normal(2)
    if not np.all(np.isfinite(s)):
        raise NonFinite("stochastic state left the finite range")
    return FullState.from_array(s)


def simulate_trajectory(p: ModelParams, state: FullState, t0: float, dt: float,
                        n_steps: int, rng=None, probe_on=False, noise_on=True,
                        scheme="heun", stride=1):
    """Single trajectory, returning every ``stride``-th state as an ``(n, 5)`` array."""
    pr = p.probe if probe_on else None
    eta0, om_pr, phi = ((np.array([pr.eta0]), np.array([pr.omega_pr]), np.array([pr.phi]))
                        if pr is not None else (np.zeros(1), np.zeros(1), np.zeros(1)))
    states = state.as_array()[None, :].copy()
    acc = np.zeros((1, 3))
    out = [states[0].copy()]
    for i in range(0, n_steps, stride):
        m = min(stride, n_steps - i)
        noise = rng.standard_normal((m, 2)) if noise_on else np.zeros((m, 2))
        # averaging window placed beyond the run: nothing is accumulated
        ok = _advance(states, t0, dt, noise, 0, i, n_steps + 1, 0, acc,
                      scheme == "heun", *_kernel_params(p), eta0, om_pr, phi)
        if not ok:
            raise NonFinite("stochastic state left the finite range")
        out.append(states[0].copy())
    return np.array(out)


def run_variants(p: ModelParams, spec: EnsembleSpec, variants, cell: int = 0,
                 traj_indices=None) -> EnsembleResult:
    """Ensemble of trajectories, each evolved for every probe variant.

    ``variants`` is an array of rows ``(eta0, omega_pr, phi)``; a row with
    ``eta0 = 0`` is the probe-off reference.  Trajectory ``i`` of ``cell``
    draws all of its randomness from ``stream(spec.seed, cell, i)``.
    """
    p, dt, n_relax, n_avg, n_off = spec.resolve(p)
    variants = np.atleast_2d(np.asarray(variants, dtype=float))
    eta0 = np.ascontiguousarray(variants[:, 0])
    om_pr = np.ascontiguousarray(variants[:, 1])
    phi = np.ascontiguousarray(variants[:, 2])
    n_var = len(variants)
    n_total = n_relax + n_avg
    idx = range(spec.n_traj) if traj_indices is None else traj_indices
    idx = list(idx)
    res = np.zeros((len(idx), n_var, 3))
    final = np.zeros((len(idx), n_var, 5))
    heun = spec.scheme == "heun"
    kp = _kernel_params(p)
    for r, i in enumerate(idx):
        rng = stream(spec.seed, cell, i)
        s0 = sample_initial(spec, rng, n_atoms=p.n_atoms).as_array()
        states = np.repeat(s0[None, :], n_var, axis=0)
        acc = np.zeros((n_var, 3))
        step = 0
        while step < n_total:
            m = min(CHUNK, n_total - step)
            noise = rng.standard_normal((m, 2)) if spec.noise_on else np.zeros((m, 2))
            ok = _advance(states, 0.0, dt, noise, n_off, step, n_relax, n_avg, acc,
                          heun, *kp, eta0, om_pr, phi)
            if not ok:
                raise NonFinite(f"trajectory {i} of cell {cell} diverged")
            step += m
        res[r] = acc / n_avg
        final[r] = states
    return EnsembleResult(intensity=res[:, :, 0], jx=res[:, :, 1], jx_sq=res[:, :, 2],
                          variants=variants, n_atoms=p.n_atoms, final=final)


def _merge(parts):
    cat = lambda name: np.concatenate([getattr(r, name) for r in parts], axis=0)  # noqa: E731
    return EnsembleResult(intensity=cat("intensity"), jx=cat("jx"), jx_sq=cat("jx_sq"),
                          variants=parts[0].variants, n_atoms=parts[0].n_atoms,
                          final=cat("final"))


class _EnsembleJob:
    def __init__(self, p, spec, variants):
        self.p, self.spec, self.variants = p, spec, variants

    def __call__(self, task):
        cell, idx = task
        p = self.p[cell] if isinstance(self.p, dict) else self.p
        v = self.variants[cell] if isinstance(self.variants, dict) else self.variants
        try:
            return cell, run_variants(p, self.spec, v, cell=cell, traj_indices=idx)
        except NonFinite as exc:
            return cell, exc


def _blocks(n_traj, n_blocks):
    edges = np.linspace(0, n_traj, max(1, min(n_blocks, n_traj)) + 1).astype(int)
    return [list(range(a, b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def run_cells(params_by_cell, spec, variants_by_cell, mapper=map, blocks_per_cell=1):
    """Run several cells, optionally split into trajectory blocks for a parallel ``mapper``.

    Per-trajectory streams make the merged result independent of the split.
    A cell whose integration diverged maps to the ``NonFinite`` instance.
    """
    tasks = [(c, b) for c in params_by_cell for b in _blocks(spec.n_traj, blocks_per_cell)]
    job = _EnsembleJob(dict(params_by_cell), spec, dict(variants_by_cell))
    parts = {}
    for cell, res in mapper(job, tasks):
        parts.setdefault(cell, []).append(res)
    out = {}
    for c in params_by_cell:
        bad = [r for r in parts[c] if isinstance(r, Exception)]
        out[c] = bad[0] if bad else _merge(parts[c])
    return out


def intensity_tav(p: ModelParams, spec: EnsembleSpec, probe_on: bool = False):
    """Ensemble mean and standard error of the time-averaged photon number."""
    if probe_on and p.probe is not None:
        v = [[p.probe.eta0, p.probe.omega_pr, p.probe.phi]]
    else:
        v = [[0.0, 0.0, 0.0]]
    res = run_variants(p, spec, v)
    return float(res.mean()[0]), float(res.stderr()[0])


def probe_response_map(p_base: ModelParams, omega_ratios, offsets, spec: EnsembleSpec,
                       eta0: float = 0.1, phi: float = 0.0, mapper=map,
                       blocks_per_cell=1) -> ProbeResponseMap:
    """Intensity change ``<I_pr> - <I_0>`` over drive frequency and probe detuning.

    ``omega_ratios`` are ``omega/(2 omega_res)``; ``offsets`` are
    ``(omega_pr - omega/2)/omega_res``.  Column ``i`` (one drive frequency)
    is cell ``i``: its probe-off reference and all probe frequencies share
    the per-trajectory noise.
    """
    omega_ratios = np.asarray(omega_ratios, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    w = derive_scales(p_base).omega_res
    params, variants = {}, {}
    for i, r in enumerate(omega_ratios):
        q = p_base.replace(omega=2.0 * r * w, probe=None)
        params[i] = q
        variants[i] = np.array([[0.0, 0.0, 0.0]]
                               + [[eta0, 0.5 * q.omega + x * w, phi] for x in offsets])
    results = run_cells(params, spec, variants, mapper, blocks_per_cell)
    vals = np.zeros((len(omega_ratios), len(offsets)))
    errs = np.zeros_like(vals)
    base = np.zeros(len(omega_ratios))
    n_atoms = p_base.n_atoms if spec.n_atoms is None else spec.n_atoms
    failed = {}
    for i in range(len(omega_ratios)):
        if isinstance(results[i], Exception):
            vals[i] = errs[i] = base[i] = np.nan
            failed[i] = str(results[i])
            continue
        m, s = results[i].difference()
        vals[i], errs[i] = m[1:], s[1:]
        base[i] = results[i].mean()[0]
    return ProbeResponseMap("omega_ratio", omega_ratios, "omega_pr_offset", offsets,
                            vals, errs, spec.n_traj, n_atoms, baseline=base, failed=failed)


def phase_scan(p_base: ModelParams, offsets, phis, spec: EnsembleSpec, eta0: float = 0.1,
               mapper=map, blocks=1) -> ProbeResponseMap:
    """Intensity change over probe phase and probe detuning at fixed drive.

    All ``(phi, offset)`` variants share one cell, hence identical noise.
    """
    offsets = np.asarray(offsets, dtype=float)
    phis = np.asarray(phis, dtype=float)
    w = derive_scales(p_base).omega_res
    q = p_base.replace(probe=None)
    var = [[0.0, 0.0, 0.0]] + [[eta0, 0.5 * q.omega + x * w, ph]
                               for ph in phis for x in offsets]
    res = run_cells({0: q}, spec, {0: np.array(var)}, mapper, blocks)[0]
    if isinstance(res, Exception):
        raise res
    m, s = res.difference()
    shape = (len(phis), len(offsets))
    return ProbeResponseMap("phi", phis, "omega_pr_offset", offsets,
                            m[1:].reshape(shape), s[1:].reshape(shape), spec.n_traj,
                            res.n_atoms, baseline=np.array([res.mean()[0]]))
