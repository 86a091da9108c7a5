import numpy as np
import pytest
from scipy import constants

from sqzlight import optomech as om
from sqzlight.core import (
    SHOT_NOISE,
    TWO_PI,
    CouplingConfig,
    DetectionConfig,
    OscillatorParams,
    s_output_quadrature,
    susceptibility,
    thermal_occupation,
)

KAPPA = TWO_PI * 94e6
OMEGA_M = TWO_PI * 2.27e6


def membrane(n_th=None):
    n = thermal_occupation(OMEGA_M, 10.0) if n_th is None else n_th
    return OscillatorParams(OMEGA_M, OMEGA_M / 5.1e7, n)


def state_space_matrix(w, osc, kappa, delta, g):
    """Output spectral matrix of the linear cavity + oscillator Langevin system, solved directly.

    State (x_c, y_c, X, P); inputs (x_in, y_in, P_th) with symmetrized PSDs
    (1/2, 1/2, n_th + 1/2); outputs ``in - sqrt(kappa) * cavity``.
    """
    A = np.array([[-kappa / 2, -delta, 0, 0],
                  [delta, -kappa / 2, 2 * g, 0],
                  [0, 0, 0, osc.omega],
                  [2 * g, 0, -osc.omega, -osc.gamma]])
    B = np.zeros((4, 3))
    B[0, 0] = B[1, 1] = np.sqrt(kappa)
    B[3, 2] = np.sqrt(2 * osc.gamma)
    N = np.diag([0.5, 0.5, osc.n_th + 0.5])
    out = []
    for wi in np.atleast_1d(w):
        T = np.linalg.solve(-1j * wi * np.eye(4) - A, B)
        O = np.eye(2, 3) - np.sqrt(kappa) * T[:2]
        S = (O @ N @ O.conj().T).real
        out.append((S[0, 0], S[1, 1], S[0, 1]))
    return np.array(out).T


def test_cavity_susceptibility_direct():
    c = om.CavityParams(KAPPA, -TWO_PI * 40e6)
    w = OMEGA_M
    assert om.cavity_susceptibility(w, c) == pytest.approx(1 / complex(KAPPA / 2, -(w - TWO_PI * 40e6)), rel=1e-14)


def test_filter_functions_from_primitive_susceptibilities():
    c = om.CavityParams(KAPPA, -TWO_PI * 40e6)
    w = np.array([0.3, 1.0, 2.0]) * OMEGA_M
    chi = om.cavity_susceptibility(w, c)
    chim = np.conj(om.cavity_susceptibility(-w, c))
    c0 = om.cavity_susceptibility(0.0, c)
    xp, xm, rp, rm = om.filter_functions(w, c)
    assert np.allclose(xp, (chi + chim) / 2)
    assert np.allclose(xm, 1j * (chi - chim) / 2)
    assert np.allclose(rp, c0 * chi + np.conj(c0) * chim)
    assert np.allclose(rm, 1j * (c0 * chi - np.conj(c0) * chim))


def test_dynamical_backaction_signs_and_symmetry():
    osc = membrane()
    g2 = 1e10
    assert om.dynamical_backaction(osc, om.CavityParams(KAPPA, 0.0), g2) == (0.0, 0.0)
    red = om.dynamical_backaction(osc, om.CavityParams(KAPPA, -TWO_PI * 40e6), g2)
    blue = om.dynamical_backaction(osc, om.CavityParams(KAPPA, TWO_PI * 40e6), g2)
    assert red[0] < 0 and red[1] > 0
    assert blue == pytest.approx((-red[0], -red[1]))


def test_derive_from_rate_round_trip():
    osc = membrane()
    c = om.CavityParams(KAPPA, -TWO_PI * 40e6, 0.98, g0=TWO_PI * 248)
    d = om.derive_from_rate(TWO_PI * 47e3, osc, c)
    assert d.Gamma_m == pytest.approx(TWO_PI * 47e3, rel=1e-12)
    assert d.Gamma_m == pytest.approx(4 * d.g_abs2 / KAPPA, rel=1e-12)
    d2 = om.derive_from_rate(TWO_PI * 47e3, osc, c, gamma_opt=TWO_PI * 5.2e3)
    assert d2.gamma_opt_total == pytest.approx(TWO_PI * 5.2e3)
    assert d2.gamma_opt == d.gamma_opt


def test_closed_form_optical_damping_value():
    # the closed form gives about half of the fitted linewidth quoted for this point
    osc = membrane()
    d = om.derive_from_rate(TWO_PI * 47e3, osc, om.CavityParams(KAPPA, -TWO_PI * 40e6))
    assert d.gamma_opt / TWO_PI == pytest.approx(2599.0, rel=1e-3)
    assert d.delta_omega_m / TWO_PI == pytest.approx(-23.2e3, rel=1e-2)


@pytest.mark.xfail(strict=True, reason="closed-form optical damping is 2pi*2.60 kHz at this point, "
                                        "a factor ~2 below the fitted 2pi*5.2 kHz")
def test_closed_form_optical_damping_matches_fitted_linewidth():
    osc = membrane()
    d = om.derive_from_rate(TWO_PI * 47e3, osc, om.CavityParams(KAPPA, -TWO_PI * 40e6))
    assert d.gamma_opt / TWO_PI == pytest.approx(5.2e3, rel=0.1)


def test_effective_susceptibility_reduces_without_drive():
    osc = membrane()
    c = om.CavityParams(KAPPA, -TWO_PI * 40e6)
    d = om.derive(osc, c)
    w = OMEGA_M + osc.gamma * np.linspace(-5, 5, 11)
    assert np.allclose(om.effective_mech_susceptibility(w, osc, c, d), susceptibility(w, osc), rtol=1e-14)


def test_effective_susceptibility_peak_and_width():
    osc = OscillatorParams(TWO_PI * 1e6, TWO_PI * 50.0)
    c = om.CavityParams(TWO_PI * 50e6, -TWO_PI * 20e6)
    d = om.derive_from_rate(TWO_PI * 2e3, osc, c)
    center = osc.omega + d.delta_omega_m
    width = osc.gamma + d.gamma_opt
    w = center + width * np.linspace(-5, 5, 200001)
    p = np.abs(om.effective_mech_susceptibility(w, osc, c, d)) ** 2
    k = np.argmax(p)
    assert w[k] == pytest.approx(center, abs=0.01 * width)
    half = w[p >= p[k] / 2]
    assert half[-1] - half[0] == pytest.approx(width, rel=1e-2)


def test_backaction_psd_properties():
    c = om.CavityParams(KAPPA, 0.0)
    d = om.derive_from_rate(TWO_PI * 47e3, membrane(), c)
    assert om.backaction_force_psd(0.0, c, d) == pytest.approx(d.Gamma_m, rel=1e-12)
    w = np.linspace(0, 3 * KAPPA, 301)
    s = om.backaction_force_psd(w, c, d)
    assert np.all(np.diff(s) < 0)
    cd = om.CavityParams(KAPPA, -TWO_PI * 40e6)
    dd = om.derive_from_rate(TWO_PI * 47e3, membrane(), cd)
    assert np.allclose(om.backaction_force_psd(w, cd, dd), om.backaction_force_psd(-w, cd, dd))


def test_occupation_without_drive_is_thermal():
    osc = membrane()
    c = om.CavityParams(KAPPA, om.optimal_detuning(KAPPA))
    assert om.phonon_occupation(osc, c, om.derive(osc, c)) == pytest.approx(osc.n_th)


def test_occupation_rejects_antidamping():
    osc = membrane()
    c = om.CavityParams(KAPPA, TWO_PI * 47e6)
    d = om.derive_from_rate(TWO_PI * 47e3, osc, c)
    with pytest.raises(ValueError, match="damping"):
        om.phonon_occupation(osc, c, d)


def test_cooling_floor_value():
    assert om.cooling_floor(KAPPA, OMEGA_M) == pytest.approx(94 / (4 * 2.27))
    assert om.optimal_detuning(KAPPA) == -KAPPA / 2


def test_occupation_approaches_floor_from_above():
    osc = membrane()
    c = om.CavityParams(KAPPA, om.optimal_detuning(KAPPA))
    rates = TWO_PI * np.logspace(2, 6, 40)
    n = np.array([om.phonon_occupation(osc, c, om.derive_from_rate(r, osc, c)) for r in rates])
    floor = om.cooling_floor(KAPPA, OMEGA_M)
    assert np.all(np.diff(n) < 0)
    assert np.all(n > floor)
    assert n[-1] == pytest.approx(floor, rel=0.05)


def test_backaction_occupation_approx_is_labeled_limit():
    osc = membrane()
    c = om.CavityParams(KAPPA, om.optimal_detuning(KAPPA))
    d = om.derive_from_rate(TWO_PI * 1e6, osc, c)
    exact = om.occupation_components(osc, c, d)["backaction"]
    assert om.backaction_occupation_approx(osc, c, d) == pytest.approx(exact, rel=1e-3)
    assert om.backaction_occupation_approx(osc, c, d) > exact


def test_photon_number_from_power():
    lam, P = 1064e-9, 2e-3
    D = -TWO_PI * 40e6
    n = om.photon_number_from_power(P, lam, KAPPA, D, 0.98)
    flux = P / (constants.h * constants.c / lam)
    assert n == pytest.approx(4 * 0.98 * flux / KAPPA * (KAPPA**2 / 4) / (KAPPA**2 / 4 + D**2), rel=1e-12)
    assert om.photon_number_from_power(P, lam, KAPPA, D, 0.98, calibration=2.0) == pytest.approx(2 * n)


def test_cooling_curve_decomposition():
    osc = membrane()
    c = om.CavityParams(KAPPA, om.optimal_detuning(KAPPA), 0.98, g0=TWO_PI * 248)
    lam = 1064e-9
    P1 = om.power_for_unit_cooperativity(osc, c, lam)
    powers = P1 * np.logspace(-2, 2, 21)
    out = om.cooling_curve(osc, c, powers, lam)
    assert np.allclose(out["thermal"] + out["backaction"], out["total"])
    assert np.allclose(out["C_qu"], powers / P1, rtol=1e-10)
    # thermal part falls like 1/P once optical damping dominates; backaction saturates
    assert out["thermal"][-1] * powers[-1] == pytest.approx(out["thermal"][-2] * powers[-2], rel=1e-2)
    assert out["backaction"][-1] == pytest.approx(out["backaction"][-2], rel=1e-2)
    assert np.all(np.diff(out["total"]) < 0)


def test_empty_cavity_is_unitary():
    osc = membrane()
    c = om.CavityParams(KAPPA, -TWO_PI * 40e6)
    d = om.derive(osc, c)
    w = OMEGA_M * np.linspace(0.5, 1.5, 51)
    for th in np.linspace(0, np.pi, 7):
        A, B, C = om.detector_coefficients(w, th, osc, c, d)
        assert np.allclose(C, 0)
        assert np.allclose(np.abs(A) ** 2 + np.abs(B) ** 2, 1.0, rtol=1e-12)
        assert np.allclose(om.s_dd_full(w, th, osc, c, d), SHOT_NOISE, rtol=1e-12)


def test_amplitude_quadrature_has_no_signal_on_resonance():
    osc = membrane(2.0)
    c = om.CavityParams(100 * OMEGA_M, 0.0)
    d = om.derive_from_rate(TWO_PI * 5e3, osc, c)
    assert np.allclose(om.s_dd_full(OMEGA_M + osc.gamma * np.linspace(-20, 20, 41), 0.0, osc, c, d), SHOT_NOISE)


@pytest.mark.parametrize("seed", range(4))
def test_full_spectral_matrix_matches_state_space_model(seed):
    rng = np.random.default_rng(seed)
    W = TWO_PI * 10 ** rng.uniform(4, 6)
    osc = OscillatorParams(W, W / 10 ** rng.uniform(1, 4), [0.0, 3.0][seed % 2])
    kappa = W * 10 ** rng.uniform(0, 1.5)
    delta = -kappa * rng.uniform(0, 1)
    c = om.CavityParams(kappa, delta)
    d = om.derive_from_rate(10 ** rng.uniform(0, 2.5) * osc.gamma_th, osc, c)
    w = W + osc.gamma * np.linspace(-30, 30, 121)
    s = om.full_spectral_matrix(w, osc, c, d)
    t = state_space_matrix(w, osc, kappa, delta, np.sqrt(d.g_abs2))
    # invariants under a rotation of the quadrature basis
    assert np.allclose(s[0] + s[1], t[0] + t[1], rtol=1e-10)
    assert np.allclose(s[0] * s[1] - s[2] ** 2, t[0] * t[1] - t[2] ** 2, rtol=1e-10)


def test_loss_port_keeps_output_physical():
    osc = membrane()
    c = om.CavityParams(KAPPA, -TWO_PI * 40e6, eta_in=0.6)
    d = om.derive_from_rate(TWO_PI * 47e3, osc, c)
    w = OMEGA_M + TWO_PI * np.linspace(-60e3, 60e3, 601)
    s = om.full_spectral_matrix(w, osc, c, d)
    assert np.all(s[0] * s[1] - s[2] ** 2 >= 0.25 - 1e-9)
    smin, _ = om.best_quadrature(w, osc, c, d)
    assert np.all(smin <= om.s_dd_full(w, 0.5 * np.pi, osc, c, d) + 1e-12)


def test_resonant_simplified_trivial_cases():
    osc = membrane(2.0)
    c = om.CavityParams(100 * OMEGA_M, 0.0)
    d = om.derive_from_rate(TWO_PI * 5e3, osc, c)
    w = OMEGA_M + osc.gamma * np.linspace(-20, 20, 81)
    assert np.allclose(om.s_dd_resonant_simplified(w, 0.0, osc, c, d), SHOT_NOISE)
    # the interference term changes sign across the resonance
    with_sig = om.s_dd_resonant_simplified(w, 0.25 * np.pi, osc, c, d)
    sig_only = om.s_dd_resonant_simplified(w, 0.5 * np.pi, osc, c, d) - SHOT_NOISE
    interference = with_sig - SHOT_NOISE - 0.5 * sig_only
    assert np.all(interference[w < OMEGA_M - osc.gamma] > 0)
    assert np.all(interference[w > OMEGA_M + osc.gamma] < 0)
    with pytest.raises(ValueError):
        om.s_dd_resonant_simplified(w, 0.2, osc, om.CavityParams(KAPPA, -1.0), d)


def test_resonant_forms_with_loss():
    osc = membrane(2.0)
    c = om.CavityParams(100 * OMEGA_M, 0.0, eta_in=0.7)
    d = om.derive_from_rate(TWO_PI * 5e3, osc, c)
    w = OMEGA_M + osc.gamma * np.linspace(-20, 20, 81)
    for th in (0.1, 0.25, 0.4):
        full = om.s_dd_full(w, th * np.pi, osc, c, d)
        assert np.allclose(om.s_dd_resonant_simplified(w, th * np.pi, osc, c, d, losses=True), full, rtol=1e-2)
        assert np.allclose(om.s_dd_resonant_exact(w, th * np.pi, osc, c, d), full, rtol=1e-3)


def test_broadband_limit_matches_core_model():
    osc = OscillatorParams(TWO_PI * 1e6, TWO_PI * 100.0, 1.0)
    c = om.CavityParams(1e4 * osc.omega, 0.0)
    d = om.derive_from_rate(TWO_PI * 300.0, osc, c)
    w = osc.omega + osc.gamma * np.linspace(-20, 20, 201)
    for th in (0.1, 0.25, 0.4):
        ref = s_output_quadrature(w, osc, CouplingConfig.from_rate(d.Gamma_m), DetectionConfig(th * np.pi))
        assert np.allclose(om.s_dd_full(w, th * np.pi, osc, c, d), ref, rtol=1e-3)
