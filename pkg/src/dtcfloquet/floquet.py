"""Linear stability of mean-field attractors over the doubled drive period.

The fluctuation matrix is assembled on the attractor, propagated with a
first-order Trotter product of 3x3 exponentials over ``2T`` and diagonalised.
Shifting the base point of the product does not change the spectrum, so the
left-point rule still converges at second order in the step for the
multipliers.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TooCoarse
from .linalg import ordered_product
from .meanfield import (
    AttractorInfo,
    AttractorKind,
    SpinState,
    Trajectory,
    find_attractor,
    integrate_periods,
    polish_cycle,
)
from .model import ModelParams, coupling_v0, coupling_v1, derive_scales

DEFAULT_N_CUT = 4096
DEFAULT_REFINE_TOL = 1e-8
MAX_N_CUT = 2**18


class Classification(str, enum.Enum):
    STABLE_NP = "StableNP"
    STABLE_DTC = "StableDTC"
    CRITICAL = "Critical"
    UNSTABLE = "Unstable"


@dataclass(frozen=True)
class FloquetResult:
    monodromy: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    gamma_fl: float
    nu_fl: float
    trivial_defect: float
    classification: Classification
    trivial_index: int
    overdamped: bool = False
    degenerate: bool = False
    n_cut: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def lambda_fl(self) -> complex:
        return complex(self.gamma_fl, -self.nu_fl)


def sigma_matrix(delta, n_atoms, v0, v1, jx, jy, jz):
    """Fluctuation matrix for arrays of couplings and reference states.

    Broadcasts over leading dimensions and returns shape ``(..., 3, 3)``.
    """
    v0, v1, jx, jy, jz = np.broadcast_arrays(*map(np.asarray, (v0, v1, jx, jy, jz)))
    out = np.zeros(v0.shape + (3, 3))
    c0 = 4.0 * v0 / n_atoms
    c1 = 4.0 * v1 / n_atoms
    out[..., 0, 1] = -delta
    out[..., 1, 0] = delta + c0 * jz
    out[..., 1, 1] = c1 * jz
    out[..., 1, 2] = c0 * jx + c1 * jy
    out[..., 2, 0] = -c0 * jy
    out[..., 2, 1] = -c0 * jx - 2.0 * c1 * jy
    return out


def sigma_at(p: ModelParams, cycle: Trajectory, t: float) -> np.ndarray:
    """Fluctuation matrix at absolute time ``t`` along ``cycle``.

    The reference state is extended periodically over the cycle window and
    linearly interpolated between stored samples (exact on the grid).
    """
    window = cycle.t_end - cycle.t0
    tau = (t - cycle.t0) % window if window > 0 else 0.0
    grid = cycle.dt * np.arange(len(cycle))
    j0 = [np.interp(tau, grid, cycle.samples[:, k]) for k in range(3)]
    return sigma_matrix(p.delta, p.n_atoms, coupling_v0(p, t), coupling_v1(p, t), *j0)


def _reference_on_grid(p: ModelParams, cycle: Trajectory, n_cut: int) -> np.ndarray:
    """``n_cut`` reference states at ``t0 + j*2T/n_cut``, ``j = 0..n_cut-1``."""
    n_store = len(cycle) - 1
    if n_store % n_cut == 0:
        return cycle.samples[: n_store : n_store // n_cut]
    fine = integrate_periods(p, cycle.samples[0], 1, n_cut, t0=cycle.t0)
    return fine.samples[:n_cut]


def monodromy(p: ModelParams, cycle: Trajectory, n_cut: int = DEFAULT_N_CUT) -> np.ndarray:
    """Trotterised propagator of the fluctuations over one ``2T`` window."""
    if n_cut < 256:
        raise ValueError(f"n_cut must be >= 256, got {n_cut}")
    ref = _reference_on_grid(p, cycle, n_cut)
    dtau = 2.0 * p.period / n_cut
    tau = cycle.t0 + dtau * np.arange(n_cut)
    mats = sigma_matrix(p.delta, p.n_atoms, coupling_v0(p, tau), coupling_v1(p, tau),
                        ref[:, 0], ref[:, 1], ref[:, 2])
    return ordered_product(np.ascontiguousarray(mats), dtau)


def liouville_det(p: ModelParams, cycle: Trajectory, n_quad: int = 8192) -> float:
    """``exp`` of the integrated trace of the fluctuation matrix over ``2T``.

    Independent of the Trotter product: the trace ``4 V1 Jz / N`` is
    integrated with the trapezoid rule on a separately integrated reference.
    """
    fine = integrate_periods(p, cycle.samples[0], 1, n_quad, t0=cycle.t0)
    tau = fine.times
    tr = 4.0 * coupling_v1(p, tau) * fine.samples[:, 2] / p.n_atoms
    return float(np.exp(np.trapezoid(tr, tau)))


def _match(a, b):
    best = None
    for perm in itertools.permutations(range(len(b))):
        d = max(abs(a[i] - b[j]) for i, j in enumerate(perm))
        if best is None or d < best:
            best = d
    return best


def eigvals_refined(p, cycle, n_cut=DEFAULT_N_CUT, tol=DEFAULT_REFINE_TOL,
                    max_n_cut=MAX_N_CUT):
    """Double ``n_cut`` until the estimated multiplier error drops below ``tol``.

    The product converges at second order, so the error of the finer of two
    products is estimated as a third of their difference (Richardson),
    measured relative to ``max(1, max|mu|)``.

    Returns ``(phi, n_cut, change)`` for the finest product computed.
    Raises TooCoarse if ``max_n_cut`` is reached first.
    """
    phi = monodromy(p, cycle, n_cut)
    mu = np.linalg.eigvals(phi)
    while True:
        if 2 * n_cut > max_n_cut:
            raise TooCoarse(f"multipliers not stable to {tol:g} at n_cut={n_cut}")
        phi2 = monodromy(p, cycle, 2 * n_cut)
        mu2 = np.linalg.eigvals(phi2)
        change = _match(mu, mu2) / (3.0 * max(1.0, float(np.max(np.abs(mu2)))))
        n_cut *= 2
        phi, mu = phi2, mu2
        if change < tol:
            return phi, n_cut, change


def extract_exponents(phi: np.ndarray, p: ModelParams,
                      kind: AttractorKind = AttractorKind.FIXED_POINT,
                      reference: np.ndarray | None = None,
                      eps_crit: float | None = None,
                      tie_tol: float = 1e-6,
                      cluster_tol: float = 1e-9) -> FloquetResult:
    """Floquet exponents ``ln(mu)/(2T)`` and the classification of the attractor.

    The trivial multiplier is the one closest to 1; near-ties are resolved
    by alignment of the eigenvector with ``reference`` (the time-averaged
    spin).  ``gamma_fl`` is the largest real part among the other two and
    ``nu_fl`` the modulus of its imaginary part.
    """
    phi = np.asarray(phi, dtype=float)
    if not np.all(np.isfinite(phi)):
        raise ValueError("monodromy is not finite")
    two_t = 2.0 * p.period
    mu, vecs = np.linalg.eig(phi)
    lam = np.log(mu.astype(complex)) / two_t
    dist = np.abs(mu - 1.0)
    trivial = int(np.argmin(dist))
    ties = np.flatnonzero(dist <= dist[trivial] + tie_tol)
    if len(ties) > 1 and reference is not None and np.linalg.norm(reference) > 0:
        ref = np.asarray(reference, dtype=float) / np.linalg.norm(reference)
        align = [abs(np.vdot(vecs[:, i], ref)) / np.linalg.norm(vecs[:, i]) for i in ties]
        trivial = int(ties[int(np.argmax(align))])
    rest = [i for i in range(3) if i != trivial]
    pair = lam[rest]
    overdamped = bool(np.all(np.abs(mu[rest].imag) <= 1e-14 * np.abs(mu[rest]).max()))
    lead = rest[int(np.argmax(pair.real))]
    gamma = float(lam[lead].real)
    nu = float(abs(lam[lead].imag))
    degenerate = bool(np.ptp(mu.real) < cluster_tol and np.ptp(mu.imag) < cluster_tol)
    if eps_crit is None:
        eps_crit = 1e-4 * derive_scales(p).gamma0
    if gamma > eps_crit:
        cls = Classification.UNSTABLE
    elif gamma >= -eps_crit:
        cls = Classification.CRITICAL
    elif kind is AttractorKind.LIMIT_CYCLE_2T:
        cls = Classification.STABLE_DTC
    else:
        cls = Classification.STABLE_NP
    return FloquetResult(
        monodromy=phi, mu=mu, lam=lam, gamma_fl=gamma, nu_fl=nu,
        trivial_defect=float(dist[trivial]), classification=cls,
        trivial_index=trivial, overdamped=overdamped, degenerate=degenerate,
    )


def floquet_analysis(p: ModelParams, attractor: AttractorInfo,
                     n_cut: int = DEFAULT_N_CUT, refine_tol: float | None = DEFAULT_REFINE_TOL,
                     max_n_cut: int = MAX_N_CUT, eps_crit: float | None = None) -> FloquetResult:
    """Monodromy plus exponent extraction for a converged attractor.

    With ``refine_tol=None`` a single product at ``n_cut`` is used.
    """
    cycle = attractor.cycle
    change = float("nan")
    if refine_tol is None:
        phi = monodromy(p, cycle, n_cut)
    else:
        phi, n_cut, change = eigvals_refined(p, cycle, n_cut, refine_tol, max_n_cut)
    ref = cycle.samples.mean(axis=0)
    res = extract_exponents(phi, p, attractor.kind, reference=ref, eps_crit=eps_crit)
    diag = {"refine_change": change, "residual": attractor.residual}
    return FloquetResult(**{**res.__dict__, "n_cut": n_cut, "diagnostics": diag})


@dataclass(frozen=True)
class SweepPoint:
    params: ModelParams
    omega_ratio: float
    g1_ratio: float
    seed_kind: str
    attractor: AttractorInfo | None
    result: FloquetResult | None
    bistable: bool = False
    error: str | None = None


SEED_KINDS = ("np", "tilted")
LARGE_TILT = 0.4


def analyse_point(p: ModelParams, seed_kind: str, *, tilt=1e-3, relax_periods=None,
                  tol=1e-6, n_cut=DEFAULT_N_CUT, refine_tol=DEFAULT_REFINE_TOL,
                  max_n_cut=MAX_N_CUT, polish=True):
    """Attractor search from one seed followed by its Floquet analysis.

    With ``polish`` a converged limit cycle is relaxed further (see
    ``polish_cycle``) before linearising around it.
    """
    if seed_kind == "np":
        seed = SpinState.normal_phase(p.n_atoms)
    elif seed_kind == "tilted":
        seed = SpinState.tilted(p.n_atoms, tilt)
    elif seed_kind == "large":
        # far from the NP basin; picks up the DTC inside the bistable window
        seed = SpinState.tilted(p.n_atoms, LARGE_TILT)
    else:
        raise ValueError(f"unknown seed kind {seed_kind!r}")
    att = find_attractor(p, seed, relax_periods=relax_periods, tol=tol, n_cut=n_cut)
    if not att.converged:
        return att, None
    if polish:
        att = polish_cycle(p, att, relax_periods=relax_periods, n_cut=n_cut)
    return att, floquet_analysis(p, att, n_cut=n_cut, refine_tol=refine_tol,
                                 max_n_cut=max_n_cut)


def spectrum_point(p_base: ModelParams, omega_ratio: float, g1_ratio: float,
                   seeds=SEED_KINDS, **kwargs) -> list[SweepPoint]:
    """Both seeds at one ``(omega/(2 omega_res), g1/g0)`` grid point."""
    omega_res = derive_scales(p_base).omega_res
    p = p_base.replace(omega=2.0 * omega_ratio * omega_res, g1=g1_ratio * p_base.g0)
    out = []
    for kind in seeds:
        try:
            att, res = analyse_point(p, kind, **kwargs)
            out.append(SweepPoint(p, omega_ratio, g1_ratio, kind, att, res,
                                  error=None if res else "Unconverged"))
        except (TooCoarse, FloatingPointError, ValueError) as exc:
            out.append(SweepPoint(p, omega_ratio, g1_ratio, kind, None, None,
                                  error=f"{type(exc).__name__}: {exc}"))
    stable_np = any(pt.result is not None and pt.result.classification is Classification.STABLE_NP
                    for pt in out)
    stable_dtc = any(pt.result is not None and pt.result.classification is Classification.STABLE_DTC
                     for pt in out)
    if stable_np and stable_dtc:
        out = [SweepPoint(**{**pt.__dict__, "bistable": True}) for pt in out]
    return out


def spectrum_sweep(p_base: ModelParams, omega_ratios, g1_ratios=None, seeds=SEED_KINDS,
                   mapper=map, **kwargs) -> list[SweepPoint]:
    """Floquet spectrum over a grid of drive frequency and modulation strength.

    ``g1_ratios=None`` keeps the modulation of ``p_base``.  ``mapper`` may be
    a parallel map; results are returned in grid order (g1 outer, omega inner).
    """
    if g1_ratios is None:
        g1_ratios = [p_base.g1 / p_base.g0 if p_base.g0 > 0 else 0.0]
    cells = [(float(w), float(r)) for r in g1_ratios for w in omega_ratios]
    if not cells:
        raise ValueError("empty sweep grid")
    job = _SweepJob(p_base, tuple(seeds), kwargs)
    return [pt for pts in mapper(job, cells) for pt in pts]


class _SweepJob:
    def __init__(self, p_base, seeds, kwargs):
        self.p_base = p_base
        self.seeds = seeds
        self.kwargs = kwargs

    def __call__(self, cell):
        return spectrum_point(self.p_base, cell[0], cell[1], self.seeds, **self.kwargs)
