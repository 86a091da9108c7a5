import numpy as np
import pytest

from sqzlight.core import TWO_PI, DetectionConfig, Geometry, s_output_quadrature
from sqzlight.spin import (
    CloudBeamGeometry,
    SpinEnsembleParams,
    alpha_for_rate,
    effective_spin_rate,
    inhomogeneous_factors,
    spin_coupling,
    spin_measurement_rate,
    spin_squeezing_spectrum,
    spin_style_variance,
    spin_variance_curve,
)


def _ensemble(**kw):
    base = dict(n_atoms=1e7, alpha_1=1.2e-9, photon_flux=3.9e15, omega_larmor=TWO_PI * 1.958e6, gamma_s=TWO_PI * 1.41e3)
    base.update(kw)
    return SpinEnsembleParams(**base)


def test_measurement_rate_scaling():
    p = _ensemble()
    r = spin_measurement_rate(p)
    assert spin_measurement_rate(_ensemble(n_atoms=2e7)) == pytest.approx(2 * r)
    assert spin_measurement_rate(_ensemble(photon_flux=7.8e15)) == pytest.approx(2 * r)
    assert spin_measurement_rate(_ensemble(alpha_1=2.4e-9)) == pytest.approx(4 * r)
    assert spin_measurement_rate(_ensemble(polarization=0.5)) == pytest.approx(0.5 * r)


def test_alpha_for_rate_inverts_the_chain():
    target, eta2 = TWO_PI * 812.0, 0.33
    a = alpha_for_rate(target, 1e7, 3.9e15, eta2)
    p = _ensemble(alpha_1=a)
    assert effective_spin_rate(spin_measurement_rate(p), eta2) == pytest.approx(target, rel=1e-12)


def test_effective_rate():
    assert effective_spin_rate(TWO_PI * 1e3, 1.0) == pytest.approx(TWO_PI * 1e3)
    assert effective_spin_rate(TWO_PI * 1e3, 0.33) / TWO_PI == pytest.approx(330.0)
    with pytest.raises(ValueError):
        effective_spin_rate(-1.0, 0.3)


def test_ensemble_validation():
    with pytest.raises(ValueError):
        _ensemble(n_atoms=0)
    with pytest.raises(ValueError):
        _ensemble(polarization=1.5)
    with pytest.raises(ValueError):
        _ensemble(n_th=-1)


def test_inhomogeneous_factors_two_methods_agree():
    geom = CloudBeamGeometry(25e-6, 2e-3, 50e-6, 780e-9)
    q = inhomogeneous_factors(geom)
    mc = inhomogeneous_factors(geom, "monte-carlo", seed=3, n=400_000)
    assert mc.eta_mean == pytest.approx(q.eta_mean, rel=1e-2)
    assert mc.eta_sq_mean == pytest.approx(q.eta_sq_mean, rel=1e-2)
    assert 0 < q.eta_sq_mean < q.eta_mean < 1


def test_inhomogeneous_factors_point_cloud_limit():
    # a tiny cloud at the focus sees the peak intensity
    geom = CloudBeamGeometry(1e-9, 1e-9, 50e-6, 780e-9)
    q = inhomogeneous_factors(geom)
    assert q.eta_mean == pytest.approx(1.0, rel=1e-6)
    assert q.eta_sq_mean == pytest.approx(1.0, rel=1e-6)


def test_inhomogeneous_factors_radial_closed_form():
    # negligible axial extent: <u^2> = w0^2 / (w0^2 + wa^2)
    wa, w0 = 25e-6, 50e-6
    q = inhomogeneous_factors(CloudBeamGeometry(wa, 1e-9, w0, 780e-9))
    assert q.eta_mean == pytest.approx(w0**2 / (w0**2 + wa**2), rel=1e-8)
    assert q.eta_sq_mean == pytest.approx(w0**2 / (w0**2 + 2 * wa**2), rel=1e-8)


def test_inhomogeneous_factors_rejects_bad_method():
    geom = CloudBeamGeometry(25e-6, 2e-3, 50e-6, 780e-9)
    with pytest.raises(ValueError):
        inhomogeneous_factors(geom, "simpson")
    with pytest.raises(ValueError):
        inhomogeneous_factors(geom, "monte-carlo", n=100)


def test_spin_coupling_uses_phase_drive():
    cpl = spin_coupling(TWO_PI * 812)
    assert cpl.geometry is Geometry.DRIVE_PHASE_SIGNAL_AMPLITUDE
    assert cpl.Gamma == pytest.approx(TWO_PI * 812)


def test_variance_curve_decomposition():
    g, bw = TWO_PI * 280, TWO_PI * 4e3
    rates = TWO_PI * np.array([0.0, 50.0, 140.0, 400.0, 1400.0])
    out = spin_variance_curve(rates, g, bw, 0.83)
    assert np.allclose(out["shot"] + out["projection"] + out["backaction"], out["total"])
    assert np.allclose(out["total"], [spin_style_variance(r, g, bw, 0.83) for r in rates])
    # backaction beats projection exactly when 2 Gamma / gamma_s > 1
    above = out["backaction"][1:] > out["projection"][1:]
    assert np.array_equal(above, 2 * rates[1:] / g > 1)
    assert out["backaction"][-1] / out["projection"][-1] == pytest.approx(10.0)


def test_variance_curve_zero_rates_is_flat():
    out = spin_variance_curve(np.zeros(4), TWO_PI * 280, TWO_PI * 4e3, 0.83)
    assert np.allclose(out["total"], TWO_PI * 4e3 / (TWO_PI * 0.83))


def test_squeezing_spectrum_matches_core(spin_point):
    p = _ensemble(omega_larmor=spin_point["Omega"], gamma_s=spin_point["gamma"])
    det = DetectionConfig(spin_point["theta"], spin_point["eta_det"])
    grid = spin_point["Omega"] + spin_point["gamma"] * np.linspace(-10, 10, 201)
    spec = spin_squeezing_spectrum(grid, p, spin_point["Gamma"], det)
    ref = s_output_quadrature(grid, p.oscillator(), spin_coupling(spin_point["Gamma"]), det)
    assert np.array_equal(spec.values, ref)
    assert spec.values.min() < 0.5


def test_squeezing_spectrum_grid_limits(spin_point):
    p = _ensemble()
    with pytest.raises(ValueError):
        spin_squeezing_spectrum(np.array([1.0, 2.0]), p, 1.0, DetectionConfig())
