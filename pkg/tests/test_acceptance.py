"""Acceptance criteria 1-10, each reporting one PASS/FAIL line.

The lines are printed as the tests run (visible with ``-s``) and repeated in
the "acceptance criteria" section of the terminal summary.  The whole module
takes several minutes on a single core; most of it is the 61 x 41 Floquet
grid and the two stochastic probe cuts.
"""

import math
import time

import numpy as np
import pytest
from scipy import ndimage

from dtcfloquet.analysis import (
    Branch,
    bogoliubov_epsilon,
    fit_free_lorentzian,
    lorentzian_overlay,
    sign_flip_detuning,
)
from dtcfloquet.errors import OutsideDomain
from dtcfloquet.floquet import analyse_point, liouville_det, monodromy, spectrum_sweep
from dtcfloquet.meanfield import (
    Direction,
    SpinState,
    hysteresis_scan,
    integrate,
    integrate_periods,
    spin_length_sq,
)
from dtcfloquet.model import ModelParams, cavity_amplitude, derive_scales
from dtcfloquet.wigner import (
    EnsembleSpec,
    FullState,
    phase_scan,
    probe_response_map,
    simulate_trajectory,
)

OMEGA_GRID = np.linspace(0.7, 1.2, 61)
G1_GRID = np.linspace(0.0, 1.0, 41)
CUT = 24  # row of g1/g0 = 0.6


def _report(log, n, title, ok, detail):
    line = f"criterion {n:2d}  {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print("\n" + line)
    log[n] = line
    assert ok, line


@pytest.fixture(scope="module")
def base():
    return ModelParams.from_ratios(0.5, 0.6, 1.0)


@pytest.fixture(scope="module")
def w_res(base):
    return derive_scales(base).omega_res


@pytest.fixture(scope="module")
def grid(base):
    """Normal-phase and tilted-seed spectra on the full phase-diagram grid."""
    pts = spectrum_sweep(base, OMEGA_GRID, G1_GRID, seeds=("np", "tilted"))
    out = {}
    for pt in pts:
        i = int(round((pt.omega_ratio - 0.7) / (0.5 / 60)))
        j = int(round(pt.g1_ratio / 0.025))
        out[pt.seed_kind, j, i] = pt
    return out


def test_c1_analytic_oracle(acceptance_log):
    # constant coupling; omega = 0.4 keeps the oscillation inside the principal zone
    p = ModelParams.from_ratios(0.5, 0.0, 1.0).replace(omega=0.4)
    analyse_point(p.replace(omega=0.5), "np")  # compiled kernels loaded from cache
    t0 = time.perf_counter()
    _, fl = analyse_point(p, "np")
    elapsed = time.perf_counter() - t0
    g0 = 0.00125
    nu = math.sqrt(derive_scales(p).omega_res**2 - g0**2)
    e_gamma = abs(fl.gamma_fl / -g0 - 1)
    e_nu = abs(fl.nu_fl / nu - 1)
    ok = e_gamma < 1e-6 and e_nu < 1e-6 and elapsed < 1.0
    _report(acceptance_log, 1, "analytic Floquet oracle", ok,
            f"gamma={fl.gamma_fl:.9f} (rel {e_gamma:.1e}), nu={fl.nu_fl:.9f} "
            f"vs {nu:.9f} (rel {e_nu:.1e}), {elapsed:.3f} s")


def test_c2_trivial_multiplier(grid, acceptance_log):
    defects = [pt.result.trivial_defect for pt in grid.values() if pt.result is not None]
    skipped = sum(1 for pt in grid.values() if pt.result is None)
    worst = max(defects)
    ok = worst < 1e-6
    _report(acceptance_log, 2, "trivial multiplier", ok,
            f"max |mu0 - 1| = {worst:.2e} over {len(defects)} converged attractors "
            f"({skipped} unconverged points excluded)")


def test_c3_spin_length(base, acceptance_log):
    tr = integrate_periods(base, SpinState.tilted(base.n_atoms), 500, 4096, stride=512)
    length = np.sqrt(spin_length_sq(tr.samples))
    dev = float(np.max(np.abs(length / (0.5 * base.n_atoms) - 1)))
    _report(acceptance_log, 3, "spin length conservation", dev < 1e-8,
            f"max relative deviation {dev:.1e} over 1000 drive periods")


def _nu_half(pt):
    return pt.result.nu_fl / (0.5 * pt.params.omega)


def test_c4_phase_diagram(base, w_res, grid, acceptance_log):
    gamma = np.array([[grid["np", j, i].result.gamma_fl for i in range(61)] for j in range(41)])
    unstable = gamma > 0
    labels, n_regions = ndimage.label(unstable)
    region = labels == labels[CUT, 36]
    topo = (n_regions == 1 and unstable[CUT, 36] and region[-1].any() and not region[0].any()
            and not region[:, 0].any() and not region[:, -1].any())

    row = unstable[CUT]
    i_left, i_right = np.flatnonzero(row)[[0, -1]]
    # left edge: stable NP frequency and DTC frequency both fall towards zero
    np_side = [_nu_half(grid["np", CUT, i]) for i in range(i_left - 3, i_left)]
    dtc = [grid["tilted", CUT, i] for i in range(i_left, i_right + 1)]
    dtc = [pt for pt in dtc if pt.result is not None and pt.attractor.kind.value == "LimitCycle2T"]
    dtc_side = [_nu_half(pt) for pt in dtc[:3]]
    left_ok = (np.all(np.diff(np_side) < 0) and np.all(np.diff(dtc_side) > 0)
               and np_side[-1] < 0.1 and dtc_side[0] < 0.1)
    # right edge: branches stay apart
    gap = _nu_half(grid["tilted", CUT, i_right]) - _nu_half(grid["np", CUT, i_right + 1])
    right_ok = gap > 0.1

    omegas = 2 * w_res * OMEGA_GRID
    up = hysteresis_scan(base, omegas, Direction.UP)
    down = hysteresis_scan(base, omegas, Direction.DOWN)
    differ = np.flatnonzero([(a.order_param > 1e-3) != (b.order_param > 1e-3)
                             for a, b in zip(up, down)])
    hyst_ok = (differ.size > 0 and differ[0] == i_right + 1
               and np.all(np.diff(differ) == 1))
    ok = topo and left_ok and right_ok and hyst_ok
    window = (f"{OMEGA_GRID[differ[0]]:.3f}-{OMEGA_GRID[differ[-1]]:.3f}" if differ.size
              else "none")
    _report(acceptance_log, 4, "phase-diagram topology", ok,
            f"{n_regions} unstable region(s), top-connected={region[-1].any()}; cut 0.6: "
            f"NP unstable {OMEGA_GRID[i_left]:.3f}-{OMEGA_GRID[i_right]:.3f}, left nu "
            f"NP {np_side[-1]:.3f} / DTC {dtc_side[0]:.3f}, right gap {gap:.3f}; "
            f"up/down sweeps differ at {window}")


def test_c5_subharmonic(fig1, fig1_cycle, acceptance_log):
    cyc = fig1_cycle.cycle
    half = (len(cyc) - 1) // 2
    jx = cyc.samples[:, 0]
    dev = float(np.max(np.abs(jx[half:] + jx[: half + 1]))) / fig1.n_atoms
    _report(acceptance_log, 5, "subharmonic response", dev < 1e-4,
            f"max |Jx(t+T) + Jx(t)| / N = {dev:.1e}")


def test_c6_wigner_meanfield(fig1, fig1_cycle, acceptance_log):
    s, t0 = fig1_cycle.cycle.samples[0], fig1_cycle.cycle.t0
    b = cavity_amplitude(fig1, t0, s[0], s[1])
    start = FullState(s[0], s[1], s[2], 2 * b.real, 2 * b.imag)
    full = simulate_trajectory(fig1, start, t0, fig1.period / 512, 10 * 512, noise_on=False)
    mf = integrate(fig1, s, (t0, t0 + 10 * fig1.period), n_cut_per_2T=1024)
    dev = float(np.max(np.abs(full[:, :3] - mf.samples[:, :3]))) / (0.5 * fig1.n_atoms)
    _report(acceptance_log, 6, "Wigner vs mean field", dev < 0.03,
            f"sup-norm deviation {100 * dev:.2f}% of N/2 over 10 periods")


def _probe_cut(ratio, offsets):
    p = ModelParams.from_ratios(0.5, 0.6, ratio)
    w = derive_scales(p).omega_res
    pm = probe_response_map(p, [ratio], offsets, EnsembleSpec(n_traj=200, n_atoms=1e4, seed=0))
    _, fl = analyse_point(p, "tilted")
    y = pm.values[0]
    fit = lorentzian_overlay(fl, np.column_stack([offsets, y]), Branch.UPPER, scale=w)
    _, center, _ = fit_free_lorentzian(offsets, y, fit.center, fit.width)
    peak = float(np.max(np.abs(y)))
    return fit, center, peak


def test_c7_probe_spectroscopy(acceptance_log):
    parts, ok = [], True
    for ratio, offsets, sign in ((0.8, np.linspace(0.06, 0.22, 17), 1.0),
                                 (1.0, np.linspace(0.13, 0.25, 25), -1.0)):
        fit, center, peak = _probe_cut(ratio, offsets)
        good = (np.sign(fit.amplitude) == sign and abs(center - fit.center) < fit.width
                and fit.residual_rms < 0.2 * peak)
        ok &= bool(good)
        parts.append(f"x={ratio}: A={fit.amplitude:+.3f}, centre {center:.4f} vs nu "
                     f"{fit.center:.4f} (|gamma| {fit.width:.4f}), rms/peak "
                     f"{fit.residual_rms / peak:.2f}")
    _report(acceptance_log, 7, "probe spectroscopy", ok, "; ".join(parts))


def test_c8_bogoliubov(base, w_res, grid, acceptance_log):
    flip = sign_flip_detuning(base)
    worst, n_left, n_right, signs_ok = 0.0, 0, 0, True
    for i in range(61):
        pt = grid["np", CUT, i]
        if pt.result.gamma_fl > 0 or abs(w_res - 0.5 * pt.params.omega) < flip:
            continue
        try:
            eps = bogoliubov_epsilon(pt.params) / w_res
        except OutsideDomain:
            continue
        left = pt.omega_ratio < 1.0
        n_left += left
        n_right += not left
        signs_ok &= (eps > 0) == left
        branch_nu = (1 if left else -1) * pt.result.nu_fl / w_res
        worst = max(worst, abs(eps - branch_nu))
    ok = signs_ok and worst < 0.15 and n_left > 0 and n_right > 0
    _report(acceptance_log, 8, "Bogoliubov cross-check", ok,
            f"{n_left} left / {n_right} right NP points, signs {'ok' if signs_ok else 'wrong'}, "
            f"max |eps - nu_branch| / omega_res = {worst:.3f}")


def test_c9_phase_scan(base, acceptance_log):
    phis = np.arange(8) * np.pi / 4
    pm = phase_scan(base, [-0.2, 0.0, 0.2], phis, EnsembleSpec(n_traj=200, n_atoms=1e4, seed=0))
    spread = []
    for j in range(3):
        v, s = pm.values[:, j], pm.stderr[:, j]
        spread.append(float(np.max(np.abs(v - v.mean()) / s)))
    on = pm.values[:, 1]
    sign_change = on.min() < 0 < on.max()
    ok = spread[0] < 3 and spread[2] < 3 and spread[1] > 5 and sign_change
    _report(acceptance_log, 9, "probe-phase scan", ok,
            f"phase variation in stderr units: off {spread[0]:.1f}/{spread[2]:.1f}, "
            f"on {spread[1]:.1f}; on-resonant range [{on.min():+.3f}, {on.max():+.3f}]")


def test_c10_numerics(fig1, fig1_cycle, acceptance_log):
    cyc = fig1_cycle.cycle
    mus = [np.sort_complex(np.linalg.eigvals(monodromy(fig1, cyc, n))) for n in (512, 1024, 2048)]
    trotter = math.log2(np.max(np.abs(mus[0] - mus[1])) / np.max(np.abs(mus[1] - mus[2])))
    det = np.linalg.det(monodromy(fig1, cyc, 4096))
    liou = abs(det / liouville_det(fig1, cyc) - 1)
    s0 = SpinState.tilted(fig1.n_atoms, 0.1)
    ends = [integrate_periods(fig1, s0, 4, n).samples[-1] for n in (64, 128, 256)]
    rk4 = math.log2(np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2]))
    ok = 1.7 < trotter < 2.3 and liou < 1e-8 and 3.7 < rk4 < 4.3
    _report(acceptance_log, 10, "numerics properties", ok,
            f"Trotter order {trotter:.2f}, det vs Liouville rel {liou:.1e}, RK4 order {rk4:.2f}")
