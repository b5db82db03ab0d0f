import math

import numpy as np
import pytest

from dtcfloquet.errors import NonFinite
from dtcfloquet.meanfield import integrate
from dtcfloquet.model import ModelParams, cavity_amplitude
from dtcfloquet.rng import stream
from dtcfloquet.wigner import (
    EnsembleSpec,
    FullState,
    phase_scan,
    probe_response_map,
    run_cells,
    run_variants,
    sample_initial,
    sde_step,
    simulate_trajectory,
)


@pytest.fixture(scope="module")
def vacuum():
    # no atom-light coupling: the cavity is a damped, noise-driven oscillator
    return ModelParams.from_ratios(0.0, 0.0, 1.0, n_atoms=1e4)


def test_noiseless_sample_is_spin_down():
    spec = EnsembleSpec(n_atoms=100, noise_on=False)
    assert sample_initial(spec, None) == FullState(0.0, 0.0, -50.0, 0.0, 0.0)
    tilted = sample_initial(EnsembleSpec(n_atoms=100, noise_on=False, tilt=1e-3), None)
    assert tilted.jx == pytest.approx(0.1)


def test_sampled_moments():
    n, draws = 1e4, 100_000
    spec = EnsembleSpec(n_atoms=n)
    rng = np.random.default_rng(7)
    s = np.array([sample_initial(spec, rng).as_array() for _ in range(draws)])
    var = s[:, 0].var(ddof=1)
    # stderr of a Gaussian sample variance
    assert abs(var - n / 4) < 3 * (n / 4) * math.sqrt(2 / (draws - 1))
    assert np.all(s[:, 2] == -n / 2)
    assert abs(s[:, 3].var() - 1.0) < 0.02


def test_photon_number_of_vacuum_quadratures():
    assert FullState(0, 0, 0, math.sqrt(2), 0).photon_number == pytest.approx(0.0)
    assert FullState(0, 0, 0, 2.0, 0.0).photon_number == pytest.approx(0.5)


def test_normal_phase_fixed_point_is_stationary(fig1):
    s = FullState(0.0, 0.0, -0.5 * fig1.n_atoms, 0.0, 0.0)
    for k in range(50):
        s = sde_step(fig1, s, 0.05 * k, 0.05, None, noise_on=False)
    assert s == FullState(0.0, 0.0, -0.5 * fig1.n_atoms, 0.0, 0.0)
    out = simulate_trajectory(fig1, s, 0.0, 0.05, 2000, noise_on=False, stride=100)
    assert np.all(out == out[0])


def test_sde_step_example(fig1):
    # hand evaluation of one Euler-Maruyama step with a known normal draw
    n = fig1.n_atoms
    s = FullState(0.1 * n, 0.05 * n, -0.48 * n, 3.0, -1.0)
    dt = 0.01
    z = np.random.default_rng(3).standard_normal(2)
    out = sde_step(fig1, s, 0.0, dt, np.random.default_rng(3))
    g, sq = fig1.g0 + fig1.g1, math.sqrt(n)
    k, dc = fig1.kappa, fig1.delta_c
    expect = [
        s.jx - dt * fig1.delta * s.jy,
        s.jy + dt * (fig1.delta * s.jx - 2 * g * s.ax * s.jz / sq),
        s.jz + dt * 2 * g * s.ax * s.jy / sq,
        s.ax + dt * (-k * s.ax + dc * s.ap) + math.sqrt(2 * k * dt) * z[0],
        s.ap + dt * (-k * s.ap - dc * s.ax - 4 * g * s.jx / sq) + math.sqrt(2 * k * dt) * z[1],
    ]
    np.testing.assert_allclose(out.as_array(), expect, rtol=1e-14, atol=1e-12)


def test_sde_step_rejects_divergence(fig1):
    s = FullState(0.0, 0.0, -0.5 * fig1.n_atoms, np.inf, 0.0)
    with pytest.raises(NonFinite):
        sde_step(fig1, s, 0.0, 0.01, None, noise_on=False)


def test_cavity_noise_relaxes_to_vacuum(vacuum):
    # Ornstein-Uhlenbeck: unit stationary variance per quadrature, rotation does not matter
    s = FullState(0.0, 0.0, -0.5 * vacuum.n_atoms, 0.0, 0.0)
    out = simulate_trajectory(vacuum, s, 0.0, 0.01, 400_000, rng=np.random.default_rng(11))
    ax = out[1000:, 3]
    assert abs(ax.var() - 1.0) < 0.06
    # lag-1/kappa autocorrelation is exp(-1) times cos(delta_c)
    lag = 100
    c = np.mean(ax[:-lag] * ax[lag:]) + np.mean(out[1000:-lag, 4] * out[1000 + lag:, 4])
    assert c / 2 == pytest.approx(math.exp(-1.0) * math.cos(vacuum.delta_c), abs=0.05)


def test_ensemble_spec_resolution(fig1):
    spec = EnsembleSpec(n_traj=4, t_relax=100.0)
    p, dt, n_relax, n_avg, _ = spec.resolve(fig1)
    two_t = 2 * fig1.period
    assert dt <= min(0.05 / fig1.kappa, fig1.period / 256)
    assert (two_t / dt) == pytest.approx(round(two_t / dt), abs=1e-9)
    assert n_avg * dt == pytest.approx(20 * two_t)
    assert n_relax * dt >= 100.0
    with pytest.raises(ValueError):
        EnsembleSpec(t_avg=1.3 * two_t).resolve(fig1)
    with pytest.raises(ValueError):
        EnsembleSpec(n_traj=0)
    with pytest.raises(ValueError):
        EnsembleSpec(scheme="milstein")


def test_streams_are_reproducible_and_distinct():
    a = stream(5, 2, 3).standard_normal(4)
    assert np.array_equal(a, stream(5, 2, 3).standard_normal(4))
    assert not np.array_equal(a, stream(5, 3, 2).standard_normal(4))
    assert not np.array_equal(a, stream(6, 2, 3).standard_normal(4))


def test_vacuum_intensity_is_zero(vacuum):
    spec = EnsembleSpec(n_traj=64, t_relax=5.0, t_avg=2 * vacuum.period, seed=1)
    res = run_variants(vacuum, spec, [[0.0, 0.0, 0.0]])
    assert abs(res.mean()[0]) < 3 * res.stderr()[0]


def test_stderr_scales_as_inverse_sqrt(vacuum):
    spec = EnsembleSpec(n_traj=4096, t_relax=5.0, t_avg=2 * vacuum.period, seed=2)
    res = run_variants(vacuum, spec, [[0.0, 0.0, 0.0]])
    sizes = np.array([256, 512, 1024, 2048, 4096])
    errs = [res.intensity[:m, 0].std(ddof=1) / math.sqrt(m) for m in sizes]
    slope = -np.polyfit(np.log(sizes), np.log(errs), 1)[0]
    assert 0.45 <= slope <= 0.55


def test_common_random_numbers(fig1):
    spec = EnsembleSpec(n_traj=6, n_atoms=1e4, t_relax=200.0, t_avg=2 * fig1.period, seed=9)
    w = 0.5 * fig1.omega
    variants = [[0.0, 0.0, 0.0], [0.0, w + 0.01, 1.0], [0.1, w, 0.0]]
    a = run_variants(fig1, spec, variants)
    b = run_variants(fig1, spec, variants)
    assert np.array_equal(a.intensity, b.intensity)
    assert np.array_equal(a.final, b.final)
    # a zero-amplitude probe sees exactly the reference noise and dynamics
    assert np.array_equal(a.intensity[:, 0], a.intensity[:, 1])
    assert not np.array_equal(a.intensity[:, 0], a.intensity[:, 2])
    # block splitting does not change any trajectory
    split = run_cells({0: fig1}, spec, {0: np.array(variants)}, blocks_per_cell=4)[0]
    assert np.array_equal(split.intensity, a.intensity)
    assert np.array_equal(split.jx_sq, a.jx_sq)


def test_zero_amplitude_map_vanishes(fig1):
    spec = EnsembleSpec(n_traj=3, n_atoms=1e4, t_relax=100.0)
    pm = probe_response_map(fig1, [0.9, 1.0], [-0.1, 0.1], spec, eta0=0.0)
    assert pm.values.shape == (2, 2)
    assert np.all(pm.values == 0.0)
    assert pm.failed == {}
    ps = phase_scan(fig1, [0.0, 0.2], [0.0, 1.0, 2.0], spec, eta0=0.0)
    assert ps.values.shape == (3, 2) and np.all(ps.values == 0.0)


def test_divergent_cell_is_reported(fig1):
    bad = fig1.replace(delta=1e4, omega=1e-3)
    spec = EnsembleSpec(n_traj=2, n_atoms=1e4, t_relax=50.0, t_avg=2 * bad.period, dt=0.5)
    out = run_cells({0: bad}, spec, {0: np.zeros((1, 3))})
    assert isinstance(out[0], NonFinite)


def test_noiseless_follows_meanfield(fig1, fig1_cycle):
    # on the attractor, cavity started at its adiabatic value
    n, period = fig1.n_atoms, fig1.period
    s, t0 = fig1_cycle.cycle.samples[0], fig1_cycle.cycle.t0
    b = cavity_amplitude(fig1, t0, s[0], s[1])
    start = FullState(s[0], s[1], s[2], 2 * b.real, 2 * b.imag)
    dt = period / 512
    full = simulate_trajectory(fig1, start, t0, dt, 10 * 512, noise_on=False)
    mf = integrate(fig1, s, (t0, t0 + 10 * period), n_cut_per_2T=1024)
    dev = np.max(np.abs(full[:, :3] - mf.samples[:, :3])) / (n / 2)
    assert dev == pytest.approx(0.00577, abs=5e-4)
    # noiseless spin length is conserved by the exact flow
    length = np.linalg.norm(full[:, :3], axis=1)
    assert np.max(np.abs(length - n / 2)) / (n / 2) < 1e-6


@pytest.mark.slow
def test_symmetry_broken_across_trajectories(fig1):
    spec = EnsembleSpec(n_traj=40, n_atoms=1e4, seed=4)
    res = run_variants(fig1, spec, [[0.0, 0.0, 0.0]])
    n = 1e4
    end = res.final[:, 0, :2] / n
    # the window ends where Jx crosses zero; the Z2 partner flips Jy there
    assert np.all(np.abs(end.mean(axis=0)) < 3 * end.std(axis=0, ddof=1) / math.sqrt(len(end)))
    assert np.any(end[:, 1] > 0.3) and np.any(end[:, 1] < -0.3)
    assert abs(res.jx[:, 0].mean()) / n < 1e-3
    # each trajectory still sits on a cycle with finite Jx^2
    assert res.jx_sq[:, 0].mean() / n**2 == pytest.approx(0.0909, rel=0.15)
