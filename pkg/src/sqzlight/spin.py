"""Atomic spin ensemble probed through the Faraday interaction.

The transverse collective spin of a well-polarized ensemble behaves as an
oscillator at the Larmor frequency.  The circular Stokes component of the
probe drives it and the spin is read out on the linear polarization, i.e. the
phase-drive / amplitude-signal geometry of :mod:`sqzlight.core`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .core import (
    CouplingConfig,
    DetectionConfig,
    Geometry,
    OscillatorParams,
    Spectrum,
    SpectrumKind,
    TWO_PI,
    s_output_quadrature,
    spin_style_variance,
)

DEFAULT_SPIN_N_TH = 0.03


@dataclass(frozen=True)
class SpinEnsembleParams:
    """Ensemble and probe parameters.

    ``photon_flux`` is the total flux ``2 |S_x|`` [1/s]; ``polarization`` the
    fraction ``|F_x| / (2 N)`` of the stretched f=2 state.
    """

    n_atoms: float
    alpha_1: float
    photon_flux: float
    omega_larmor: float
    gamma_s: float
    polarization: float = 1.0
    n_th: float = DEFAULT_SPIN_N_TH

    def __post_init__(self):
        if not self.n_atoms > 0:
            raise ValueError("n_atoms must be > 0")
        if not 0.0 < self.polarization <= 1.0:
            raise ValueError("polarization must lie in (0, 1]")
        if not self.photon_flux >= 0:
            raise ValueError("photon_flux must be >= 0")
        if not (self.omega_larmor > 0 and self.gamma_s > 0):
            raise ValueError("omega_larmor and gamma_s must be > 0")
        if self.n_th < 0:
            raise ValueError("n_th must be >= 0")

    @property
    def spin_length(self) -> float:
        """Collective spin length ``|F_x| = 2 N polarization``."""
        return 2.0 * self.n_atoms * self.polarization

    @property
    def stokes_x(self) -> float:
        return self.photon_flux / 2.0

    def oscillator(self) -> OscillatorParams:
        return OscillatorParams(self.omega_larmor, self.gamma_s, self.n_th)


@dataclass(frozen=True)
class CloudBeamGeometry:
    """Gaussian atom cloud in a Gaussian probe beam, lengths in metres.

    ``cloud_radial_waist`` is the 1/e^2 radius of the radial density profile
    (density ``~ exp(-2 r^2 / w_a^2)``), matching the beam-waist convention;
    ``cloud_axial_sigma`` is the axial standard deviation.  The cloud is
    centred on the beam focus.
    """

    cloud_radial_waist: float
    cloud_axial_sigma: float
    beam_waist: float
    wavelength: float

    def __post_init__(self):
        for name in ("cloud_radial_waist", "cloud_axial_sigma", "beam_waist", "wavelength"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    @property
    def rayleigh_range(self) -> float:
        return np.pi * self.beam_waist**2 / self.wavelength

    def beam_radius(self, z):
        return self.beam_waist * np.sqrt(1.0 + (np.asarray(z) / self.rayleigh_range) ** 2)

    def mode_intensity(self, r, z):
        """``|u_0(r, z)|^2`` normalized to 1 at the focus."""
        w = self.beam_radius(z)
        return (self.beam_waist / w) ** 2 * np.exp(-2.0 * np.asarray(r) ** 2 / w**2)


@dataclass(frozen=True)
class InhomogeneousFactors:
    eta_mean: float
    eta_sq_mean: float
    error: float = 0.0
    method: str = "quadrature"


class QuadratureError(RuntimeError):
    pass


def spin_measurement_rate(p: SpinEnsembleParams) -> float:
    """``alpha_1^2 |S_x| |F_x| / 4``."""
    return p.alpha_1**2 * p.stokes_x * p.spin_length / 4.0


def alpha_for_rate(Gamma_eff, n_atoms, photon_flux, eta_sq_mean=1.0, polarization=1.0):
    """Polarisability that makes ``<eta^2> Gamma_s`` equal ``Gamma_eff``."""
    bare = Gamma_eff / eta_sq_mean
    return float(np.sqrt(4.0 * bare / ((photon_flux / 2.0) * 2.0 * n_atoms * polarization)))


def effective_spin_rate(Gamma_s, eta_sq_mean):
    """Ensemble-averaged rate ``<eta^2> Gamma_s``."""
    if Gamma_s < 0 or eta_sq_mean < 0:
        raise ValueError("rate and <eta^2> must be >= 0")
    return eta_sq_mean * Gamma_s


def inhomogeneous_factors(geom: CloudBeamGeometry, method="quadrature", *, seed=0, n=200_000, tol=1e-9):
    """Ensemble averages ``<|u_0|^2>`` and ``<|u_0|^4>`` over the atom cloud.

    ``method="quadrature"`` integrates the Gaussian radial averages in closed
    form and the axial average adaptively; ``method="monte-carlo"`` samples
    ``n`` atom positions from a seeded generator and reports the standard error
    of the mean in ``error``.
    """
    if method == "quadrature":
        return _factors_quadrature(geom, tol)
    if method in ("monte-carlo", "monte_carlo", "mc"):
        if n < 10_000:
            raise ValueError("monte-carlo integration needs n >= 10_000 samples")
        return _factors_monte_carlo(geom, seed, n)
    raise ValueError(f"unknown method {method!r}")


def _factors_quadrature(geom, tol):
    wa2 = geom.cloud_radial_waist**2
    w02 = geom.beam_waist**2
    sigma = geom.cloud_axial_sigma

    # radial Gaussian averages: <exp(-2r^2/w^2)> = w^2/(w^2 + w_a^2), <exp(-4r^2/w^2)> = w^2/(w^2 + 2 w_a^2)
    def eta(z):
        w2 = geom.beam_radius(z) ** 2
        return w02 / (w2 + wa2)

    def eta_sq(z):
        w2 = geom.beam_radius(z) ** 2
        return w02**2 / (w2 * (w2 + 2.0 * wa2))

    def axial_mean(f):
        def integrand(u):
            return f(sigma * u) * np.exp(-0.5 * u * u) / np.sqrt(TWO_PI)

        val, err = integrate.quad(integrand, -np.inf, np.inf, epsabs=tol, epsrel=tol, limit=200)
        if not np.isfinite(val) or err > 10 * max(tol, tol * abs(val)):
            raise QuadratureError(f"axial average did not converge: estimate {val!r}, error {err:.3g}")
        return val, err

    m1, e1 = axial_mean(eta)
    m2, e2 = axial_mean(eta_sq)
    return InhomogeneousFactors(m1, m2, max(e1, e2), "quadrature")


def _factors_monte_carlo(geom, seed, n):
    rng = np.random.default_rng(seed)
    sigma_r = geom.cloud_radial_waist / 2.0
    x = rng.normal(0.0, sigma_r, n)
    y = rng.normal(0.0, sigma_r, n)
    z = rng.normal(0.0, geom.cloud_axial_sigma, n)
    u2 = geom.mode_intensity(np.hypot(x, y), z)
    u4 = u2 * u2
    err = max(u2.std(ddof=1), u4.std(ddof=1)) / np.sqrt(n)
    return InhomogeneousFactors(float(u2.mean()), float(u4.mean()), float(err), "monte-carlo")


def spin_coupling(Gamma_eff) -> CouplingConfig:
    return CouplingConfig.from_rate(Gamma_eff, Geometry.DRIVE_PHASE_SIGNAL_AMPLITUDE)


def spin_variance_curve(rates, gamma_s, bandwidth, eta_det=1.0):
    """Band variance and its (shot, projection, backaction) split for each rate.

    Returns a dict of arrays keyed ``Gamma_eff``, ``total``, ``shot``,
    ``projection`` and ``backaction``; the three components sum to ``total``.
    """
    rates = np.atleast_1d(np.asarray(rates, dtype=float))
    for G in rates:
        spin_style_variance(G, gamma_s, bandwidth, eta_det)  # input validation
    shot = np.full_like(rates, bandwidth / (TWO_PI * eta_det))
    projection = 2.0 * rates
    backaction = 4.0 * rates**2 / gamma_s
    return {
        "Gamma_eff": rates,
        "total": shot + projection + backaction,
        "shot": shot,
        "projection": projection,
        "backaction": backaction,
    }


def spin_squeezing_spectrum(grid, p: SpinEnsembleParams, Gamma_eff, det: DetectionConfig) -> Spectrum:
    """Detected polarization-quadrature spectrum near the Larmor resonance."""
    grid = np.asarray(grid, dtype=float)
    if np.any(np.abs(grid - p.omega_larmor) > p.omega_larmor / 2.0):
        raise ValueError("grid must lie within omega_larmor/2 of the Larmor frequency")
    values = s_output_quadrature(grid, p.oscillator(), spin_coupling(Gamma_eff), det)
    return Spectrum(grid, values, SpectrumKind.LIGHT_QUADRATURE,
                    meta={"Gamma_eff": Gamma_eff, "theta": det.theta, "eta_det": det.eta_det})
