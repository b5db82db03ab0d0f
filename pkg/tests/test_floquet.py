import math

import numpy as np
import pytest

from dtcfloquet.errors import TooCoarse
from dtcfloquet.floquet import (
    Classification,
    analyse_point,
    eigvals_refined,
    extract_exponents,
    floquet_analysis,
    liouville_det,
    monodromy,
    sigma_at,
    sigma_matrix,
    spectrum_point,
    spectrum_sweep,
)
from dtcfloquet.meanfield import AttractorKind, SpinState, find_attractor
from dtcfloquet.model import ModelParams, coupling_v0, coupling_v1, derive_scales

GAMMA0 = 0.00125
OMEGA_RES = 0.05 * math.sqrt(3.0)


def test_sigma_normal_phase_form():
    n = 1e4
    s = sigma_matrix(0.1, n, 0.0125, 0.00125, 0.0, 0.0, -n / 2)
    expected = np.array([[0.0, -0.1, 0.0],
                         [0.1 - 2 * 0.0125, -2 * 0.00125, 0.0],
                         [0.0, 0.0, 0.0]])
    np.testing.assert_allclose(s, expected, rtol=1e-15)


def test_sigma_trace_and_broadcast():
    rng = np.random.default_rng(0)
    jx, jy, jz, v0, v1 = rng.standard_normal((5, 7))
    s = sigma_matrix(0.1, 10.0, v0, v1, jx, jy, jz)
    assert s.shape == (7, 3, 3)
    np.testing.assert_allclose(np.trace(s, axis1=1, axis2=2), 4 * v1 * jz / 10.0, rtol=1e-14)


def test_sigma_is_jacobian_of_rhs(fig1):
    from dtcfloquet.meanfield import rhs

    s0 = np.array([1500.0, -700.0, -4700.0])
    t = 12.3
    jac = np.empty((3, 3))
    h = 1e-3
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        jac[:, k] = (rhs(fig1, t, SpinState(*(s0 + e))) - rhs(fig1, t, SpinState(*(s0 - e)))) / (2 * h)
    sig = sigma_matrix(fig1.delta, fig1.n_atoms, coupling_v0(fig1, t), coupling_v1(fig1, t), *s0)
    np.testing.assert_allclose(sig, jac, rtol=1e-7, atol=1e-12)


def test_sigma_at_matches_stored_samples(fig1, fig1_cycle):
    cyc = fig1_cycle.cycle
    k = 37
    t = cyc.t0 + k * cyc.dt
    direct = sigma_matrix(fig1.delta, fig1.n_atoms, coupling_v0(fig1, t), coupling_v1(fig1, t),
                          *cyc.samples[k])
    np.testing.assert_allclose(sigma_at(fig1, cyc, t), direct, rtol=1e-12, atol=1e-13)
    # periodic extension over the 2T window
    np.testing.assert_allclose(sigma_at(fig1, cyc, t + 2 * fig1.period), direct, rtol=1e-9, atol=1e-12)


def _np_oracle(omega):
    p = ModelParams.from_ratios(0.5, 0.0, 1.0).replace(omega=omega)
    att = find_attractor(p, SpinState.normal_phase(p.n_atoms))
    return p, att


def test_constant_matrix_oracle():
    """g1 = 0: exponents are -V1 -+ i sqrt(omega_res^2 - gamma0^2)."""
    p, att = _np_oracle(0.4)
    res = floquet_analysis(p, att)
    assert res.gamma_fl == pytest.approx(-GAMMA0, rel=1e-8)
    assert res.nu_fl == pytest.approx(math.sqrt(OMEGA_RES**2 - GAMMA0**2), rel=1e-8)
    assert res.classification is Classification.STABLE_NP
    assert res.trivial_defect < 1e-12


def test_frequency_folded_into_principal_zone():
    """At omega = 2 omega_res the oscillation aliases; nu stays within [0, omega/4]."""
    p, att = _np_oracle(2 * OMEGA_RES)
    res = floquet_analysis(p, att)
    assert res.gamma_fl == pytest.approx(-GAMMA0, rel=1e-8)
    assert 0.0 <= res.nu_fl <= p.omega / 4


def test_liouville_determinant(fig1, fig1_cycle):
    phi = monodromy(fig1, fig1_cycle.cycle, 4096)
    assert np.linalg.det(phi) == pytest.approx(liouville_det(fig1, fig1_cycle.cycle), rel=1e-8)


def test_trotter_second_order(fig1, fig1_cycle):
    mus = [np.sort_complex(np.linalg.eigvals(monodromy(fig1, fig1_cycle.cycle, n)))
           for n in (512, 1024, 2048)]
    ratio = np.max(np.abs(mus[0] - mus[1])) / np.max(np.abs(mus[1] - mus[2]))
    assert 1.7 < math.log2(ratio) < 2.3


def test_limit_cycle_spectrum(fig1, fig1_cycle):
    res = floquet_analysis(fig1, fig1_cycle)
    assert res.classification is Classification.STABLE_DTC
    assert res.trivial_defect < 1e-6
    # frozen values on the reference cycle
    assert res.gamma_fl / GAMMA0 == pytest.approx(-0.68234, abs=2e-4)
    assert res.nu_fl / (0.5 * fig1.omega) == pytest.approx(0.190629, abs=2e-5)
    rest = [m for i, m in enumerate(res.mu) if i != res.trivial_index]
    # non-trivial multipliers: complex-conjugate pair or both real
    assert (abs(rest[0] - np.conj(rest[1])) < 1e-12
            or (abs(rest[0].imag) < 1e-14 and abs(rest[1].imag) < 1e-14))
    assert res.nu_fl <= fig1.omega / 4


def test_unstable_normal_phase(fig1):
    att, res = analyse_point(fig1, "np")
    assert att.kind is AttractorKind.FIXED_POINT
    assert res.classification is Classification.UNSTABLE
    assert res.nu_fl == 0.0
    assert res.gamma_fl / GAMMA0 == pytest.approx(5.5084, abs=1e-3)


def test_extract_exponents_synthetic():
    p = ModelParams.from_ratios(0.5, 0.0, 1.0)
    two_t = 2 * p.period
    lam = complex(-0.002, 0.01)
    mu = np.exp(lam * two_t)
    block = np.array([[mu.real, -mu.imag], [mu.imag, mu.real]])
    phi = np.eye(3)
    phi[1:, 1:] = block
    res = extract_exponents(phi, p, AttractorKind.LIMIT_CYCLE_2T, reference=np.array([1.0, 0, 0]))
    assert res.mu[res.trivial_index] == pytest.approx(1.0, abs=1e-14)
    assert res.gamma_fl == pytest.approx(-0.002, rel=1e-12)
    assert res.nu_fl == pytest.approx(0.01, rel=1e-12)
    assert res.classification is Classification.STABLE_DTC


def test_extract_exponents_critical_band():
    p = ModelParams.from_ratios(0.5, 0.0, 1.0)
    phi = np.diag([1.0, 1.0 + 1e-9, 0.5])
    res = extract_exponents(phi, p, reference=np.array([0.0, 0.0, 1.0]))
    assert res.classification is Classification.CRITICAL


def test_extract_exponents_rejects_nonfinite():
    p = ModelParams.from_ratios(0.5, 0.0, 1.0)
    with pytest.raises(ValueError):
        extract_exponents(np.full((3, 3), np.nan), p)


def test_refinement_cap(fig1, fig1_cycle):
    with pytest.raises(TooCoarse):
        eigvals_refined(fig1, fig1_cycle.cycle, 256, tol=1e-15, max_n_cut=1024)


def test_monodromy_resolution_floor(fig1, fig1_cycle):
    with pytest.raises(ValueError):
        monodromy(fig1, fig1_cycle.cycle, 128)


def test_bistable_point_detected(fig1):
    pts = spectrum_point(fig1, 1.09, 0.6, seeds=("np", "large"))
    cls = {pt.seed_kind: pt.result.classification for pt in pts}
    assert cls == {"np": Classification.STABLE_NP, "large": Classification.STABLE_DTC}
    assert all(pt.bistable for pt in pts)


def test_sweep_grid_order(fig1):
    pts = spectrum_sweep(fig1, [0.75, 0.8], [0.0, 0.2], seeds=("np",), refine_tol=None)
    assert [(pt.omega_ratio, pt.g1_ratio) for pt in pts] == [
        (0.75, 0.0), (0.8, 0.0), (0.75, 0.2), (0.8, 0.2)]
    w = derive_scales(fig1).omega_res
    assert pts[1].params.omega == pytest.approx(1.6 * w)
    with pytest.raises(ValueError):
        spectrum_sweep(fig1, [], [0.1])
