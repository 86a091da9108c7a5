"""Membrane-in-the-middle cavity optomechanics in the linearized regime.

Covers the detuned-cavity backaction force spectrum, optical spring and
damping, sideband-cooling occupation, and the cavity-filtered homodyne output
spectrum (ponderomotive squeezing).  The output quadratures are written as

    D(w) = A(w) X_in + B(w) P_in + C(w) P_th [+ A2(w) X_loss + B2(w) P_loss]

where ``X_loss, P_loss`` is the vacuum entering through the cavity's other
(loss) port when the incoupling efficiency ``eta_in`` is below one.

Conventions: ``chi_c(w) = 1 / (kappa/2 - i (w + delta_c))``; red detuning is
``delta_c < 0``; ``theta`` is the homodyne angle of ``X_L cos + P_L sin``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import constants

from .core import (
    SHOT_NOISE,
    OscillatorParams,
    _check_efficiency,
    apply_detection_loss,
    min_quadrature,
    quadrature_from_matrix,
)


@dataclass(frozen=True)
class CavityParams:
    """Optical cavity and drive.

    ``kappa`` total linewidth, ``delta_c`` drive detuning (both rad/s),
    ``eta_in = kappa_1 / kappa``, ``g0`` single-photon coupling [rad/s] and
    ``n_c`` the mean intracavity photon number.
    """

    kappa: float
    delta_c: float = 0.0
    eta_in: float = 1.0
    g0: float = 1.0
    n_c: float = 0.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        _check_efficiency(self.eta_in)
        if not self.g0 > 0:
            raise ValueError(f"g0 must be > 0, got {self.g0}")
        if not self.n_c >= 0:
            raise ValueError(f"n_c must be >= 0, got {self.n_c}")

    @classmethod
    def from_power(cls, kappa, delta_c, eta_in, g0, power, wavelength, calibration=1.0):
        n_c = photon_number_from_power(power, wavelength, kappa, delta_c, eta_in, calibration)
        return cls(kappa, delta_c, eta_in, g0, n_c)

    @property
    def input_amplitude(self) -> float:
        """Input field amplitude ``alpha_L`` [s^-1/2] that sustains ``n_c``."""
        return float(np.sqrt(self.n_c / (self.kappa * self.eta_in)) / abs(cavity_susceptibility(0.0, self)))


@dataclass(frozen=True)
class OptomechDerived:
    """Drive-enhanced quantities.

    ``gamma_opt`` and ``delta_omega_m`` are the closed-form dynamical
    backaction values.  ``excess_linewidth`` is an optional extra, noiseless
    broadening of the mechanical response used when a fitted linewidth differs
    from the closed form; it is zero for a purely physical model.
    """

    g_om: complex
    Gamma_m: float
    delta_omega_m: float
    gamma_opt: float
    excess_linewidth: float = 0.0

    @property
    def g_abs2(self) -> float:
        return float(abs(self.g_om) ** 2)

    @property
    def gamma_opt_total(self) -> float:
        return self.gamma_opt + self.excess_linewidth


def photon_number_from_power(power, wavelength, kappa, delta_c, eta_in, calibration=1.0):
    """Intracavity photon number for input power [W] at ``wavelength`` [m].

    ``n_c = calibration * kappa eta P / (hbar w_L (kappa^2/4 + delta_c^2))``.
    ``calibration`` absorbs mode-matching and power-meter factors.
    """
    omega_L = 2.0 * np.pi * constants.c / wavelength
    flux = np.asarray(power, dtype=float) / (constants.hbar * omega_L)
    return calibration * kappa * eta_in * flux / (kappa**2 / 4.0 + delta_c**2)


def cavity_susceptibility(omega, c: CavityParams):
    """``1 / (kappa/2 - i (w + delta_c))``."""
    return 1.0 / (c.kappa / 2.0 - 1j * (np.asarray(omega, dtype=float) + c.delta_c))


def filter_functions(omega, c: CavityParams):
    """Cavity filters ``(xi_plus, xi_minus, r_plus, r_minus)``.

    ``xi_pm`` mix the input quadratures; ``r_pm`` carry the mechanical
    position onto the output amplitude and phase quadratures.
    """
    chi = cavity_susceptibility(omega, c)
    chi_m = np.conj(cavity_susceptibility(-np.asarray(omega, dtype=float), c))
    chi0 = cavity_susceptibility(0.0, c)
    xi_p = (chi + chi_m) / 2.0
    xi_m = 1j * (chi - chi_m) / 2.0
    r_p = chi0 * chi + np.conj(chi0) * chi_m
    r_m = 1j * (chi0 * chi - np.conj(chi0) * chi_m)
    return xi_p, xi_m, r_p, r_m


def backaction_filters(omega, c: CavityParams):
    """Filters ``(f_plus, f_minus)`` carrying input X_L, P_L onto the mechanical force.

    They differ from ``r_pm`` by the conjugated drive phase: the linearized
    force is ``-sqrt(2) (g* c + g c^dagger)`` while the cavity field responds
    to the mechanics through ``g``.  At zero detuning both pairs coincide.
    """
    chi = cavity_susceptibility(omega, c)
    chi_m = np.conj(cavity_susceptibility(-np.asarray(omega, dtype=float), c))
    chi0 = cavity_susceptibility(0.0, c)
    f_p = np.conj(chi0) * chi + chi0 * chi_m
    f_m = 1j * (np.conj(chi0) * chi - chi0 * chi_m)
    return f_p, f_m


def dynamical_backaction(osc: OscillatorParams, c: CavityParams, g_abs2):
    """Optical spring shift and optical damping in the unresolved-sideband limit.

    Returns ``(delta_omega_m, gamma_opt)`` with
    ``delta_omega_m = 2 |g|^2 D / (kappa^2/4 + D^2)`` and
    ``gamma_opt = -4 |g|^2 D kappa Omega / (kappa^2/4 + D^2)^2``.
    """
    if isinstance(g_abs2, OptomechDerived):
        g_abs2 = g_abs2.g_abs2
    lor = c.kappa**2 / 4.0 + c.delta_c**2
    delta_omega = 2.0 * g_abs2 * c.delta_c / lor
    gamma_opt = -4.0 * g_abs2 * c.delta_c * c.kappa * osc.omega / lor**2
    return delta_omega, gamma_opt


def derive(osc: OscillatorParams, c: CavityParams, excess_linewidth=0.0) -> OptomechDerived:
    """Enhanced coupling and backaction quantities from the photon number ``c.n_c``."""
    chi0 = cavity_susceptibility(0.0, c)
    g_om = c.g0 * np.sqrt(c.n_c) * chi0 / abs(chi0)
    g2 = abs(g_om) ** 2
    d_om, g_opt = dynamical_backaction(osc, c, g2)
    return OptomechDerived(complex(g_om), 4.0 * g2 / c.kappa, d_om, g_opt, excess_linewidth)


def derive_from_rate(Gamma_m, osc: OscillatorParams, c: CavityParams, gamma_opt=None) -> OptomechDerived:
    """Build the derived quantities from a measurement rate ``4 |g|^2 / kappa``.

    When ``gamma_opt`` is given (e.g. a fitted linewidth), the difference to
    the closed-form optical damping is carried as ``excess_linewidth``.
    """
    if Gamma_m < 0:
        raise ValueError("Gamma_m must be >= 0")
    n_c = Gamma_m * c.kappa / (4.0 * c.g0**2)
    d = derive(osc, replace(c, n_c=n_c))
    if gamma_opt is not None:
        d = replace(d, excess_linewidth=gamma_opt - d.gamma_opt)
    return d


def effective_mech_susceptibility(omega, osc: OscillatorParams, c: CavityParams, d: OptomechDerived):
    """Mechanical response dressed by the cavity field.

    ``Omega / (Omega^2 - w^2 - i gamma w - 4 |g|^2 Omega xi_minus(w))``, with any
    ``excess_linewidth`` added to ``gamma``.
    """
    w = np.asarray(omega, dtype=float)
    _, xi_m, _, _ = filter_functions(w, c)
    gamma = osc.gamma + d.excess_linewidth
    return osc.omega / (osc.omega**2 - w**2 - 1j * gamma * w - 4.0 * d.g_abs2 * osc.omega * xi_m)


def backaction_force_psd(omega, c: CavityParams, d: OptomechDerived):
    """Quantum backaction force PSD of a detuned, unresolved-sideband cavity."""
    w = np.asarray(omega, dtype=float)
    k, D = c.kappa, c.delta_c
    return d.g_abs2 / 2.0 * (k / (k**2 / 4.0 + (D + w) ** 2) + k / (k**2 / 4.0 + (D - w) ** 2))


def occupation_components(osc: OscillatorParams, c: CavityParams, d: OptomechDerived):
    """Phonon occupation split into the cooled thermal part and the backaction part.

    ``n_m = n_th gamma/(gamma + gamma_opt) + S_qba(Omega)/(gamma + gamma_opt)``.
    """
    damping = osc.gamma + d.gamma_opt_total
    if not damping > 0:
        raise ValueError(f"total mechanical damping must be > 0, got {damping}")
    thermal = osc.n_th * osc.gamma / damping
    backaction = float(backaction_force_psd(osc.omega, c, d)) / damping
    return {"thermal": thermal, "backaction": backaction, "total": thermal + backaction}


def phonon_occupation(osc: OscillatorParams, c: CavityParams, d: OptomechDerived) -> float:
    return occupation_components(osc, c, d)["total"]


def backaction_occupation_approx(osc: OscillatorParams, c: CavityParams, d: OptomechDerived) -> float:
    """Residual heating ``S_qba(Omega) / gamma_opt`` (strong-cooling approximation)."""
    return float(backaction_force_psd(osc.omega, c, d)) / d.gamma_opt_total


def cooling_floor(kappa, omega_m):
    """Minimum occupation ``kappa / (4 Omega_m)`` of backaction-limited cooling."""
    return kappa / (4.0 * omega_m)


def optimal_detuning(kappa):
    """Detuning ``-kappa/2`` that minimizes the backaction-limited occupation."""
    return -kappa / 2.0


def thermal_force_psd(osc: OscillatorParams):
    return osc.gamma * (osc.n_th + 0.5)


def cooling_curve(osc: OscillatorParams, c: CavityParams, powers, wavelength, calibration=1.0):
    """Occupation versus input power [W] at the detuning of ``c``.

    Returns arrays ``power``, ``total``, ``thermal``, ``backaction``,
    ``C_qu`` (backaction over thermal force PSD at the mechanical frequency).
    """
    powers = np.asarray(powers, dtype=float)
    out = {k: np.empty_like(powers) for k in ("total", "thermal", "backaction", "C_qu")}
    s_th = thermal_force_psd(osc)
    for i, P in enumerate(powers):
        cav = replace(c, n_c=float(photon_number_from_power(P, wavelength, c.kappa, c.delta_c, c.eta_in, calibration)))
        d = derive(osc, cav)
        comp = occupation_components(osc, cav, d)
        out["total"][i] = comp["total"]
        out["thermal"][i] = comp["thermal"]
        out["backaction"][i] = comp["backaction"]
        out["C_qu"][i] = float(backaction_force_psd(osc.omega, cav, d)) / s_th
    out["power"] = powers
    return out


def power_for_unit_cooperativity(osc: OscillatorParams, c: CavityParams, wavelength, calibration=1.0):
    """Input power [W] at which the backaction force PSD equals the thermal one."""
    ref = 1e-3
    cav = replace(c, n_c=float(photon_number_from_power(ref, wavelength, c.kappa, c.delta_c, c.eta_in, calibration)))
    s_qba = float(backaction_force_psd(osc.omega, cav, derive(osc, cav)))
    return ref * thermal_force_psd(osc) / s_qba


def _drive_factor(c: CavityParams, d: OptomechDerived):
    # kappa * eta * alpha_L * g0 expressed through |g_om|
    return np.sqrt(c.kappa * c.eta_in * d.g_abs2) / abs(cavity_susceptibility(0.0, c))


def detector_coefficients(omega, theta, osc: OscillatorParams, c: CavityParams, d: OptomechDerived):
    """Coefficients ``(A, B, C)`` of X_in, P_in and P_th in the homodyne signal."""
    xi_p, xi_m, r_p, r_m = filter_functions(omega, c)
    f_p, f_m = backaction_filters(omega, c)
    chi = effective_mech_susceptibility(omega, osc, c, d)
    k = _drive_factor(c, d)
    ke = c.kappa * c.eta_in
    cs, sn = np.cos(theta), np.sin(theta)
    readout = k * (cs * r_m + sn * r_p)
    A = cs - ke * (cs * xi_p - sn * xi_m) - readout * chi * k * f_p
    B = sn - ke * (cs * xi_m + sn * xi_p) - readout * chi * k * f_m
    C = -readout * chi * np.sqrt(2.0 * osc.gamma)
    return A, B, C


def loss_port_coefficients(omega, theta, osc: OscillatorParams, c: CavityParams, d: OptomechDerived):
    """Coefficients ``(A2, B2)`` of the vacuum entering through the loss port.

    That port couples at ``sqrt(kappa (1 - eta_in))`` instead of
    ``sqrt(kappa eta_in)`` and has no direct path to the detector.
    """
    A, B, _ = detector_coefficients(omega, theta, osc, c, d)
    r = np.sqrt((1.0 - c.eta_in) / c.eta_in)
    return r * (A - np.cos(theta)), r * (B - np.sin(theta))


def _s_dd_lossless_detection(omega, theta, osc, c, d):
    A, B, C = detector_coefficients(omega, theta, osc, c, d)
    A2, B2 = loss_port_coefficients(omega, theta, osc, c, d)
    vac = 0.5 * (np.abs(A) ** 2 + np.abs(B) ** 2 + np.abs(A2) ** 2 + np.abs(B2) ** 2)
    return vac + np.abs(C) ** 2 * (osc.n_th + 0.5)


def s_dd_full(omega, theta, osc: OscillatorParams, c: CavityParams, d: OptomechDerived, eta_det=1.0):
    """Symmetrized PSD of the detected output quadrature, after detection loss."""
    return apply_detection_loss(_s_dd_lossless_detection(omega, theta, osc, c, d), eta_det)


def full_spectral_matrix(omega, osc: OscillatorParams, c: CavityParams, d: OptomechDerived):
    """Output spectral matrix ``(S_xx, S_pp, S_xp)`` of the amplitude/phase quadratures."""
    s0 = _s_dd_lossless_detection(omega, 0.0, osc, c, d)
    s90 = _s_dd_lossless_detection(omega, np.pi / 2.0, osc, c, d)
    s45 = _s_dd_lossless_detection(omega, np.pi / 4.0, osc, c, d)
    return s0, s90, s45 - 0.5 * (s0 + s90)


def best_quadrature(omega, osc, c, d, eta_det=1.0):
    """Minimum over theta of the detected PSD and the angle that attains it."""
    smin, theta = min_quadrature(full_spectral_matrix(omega, osc, c, d))
    return apply_detection_loss(smin, eta_det), theta


def s_dd_resonant_simplified(omega, theta, osc: OscillatorParams, c: CavityParams, d: OptomechDerived, losses=False):
    """Resonant-drive spectrum in the Lorentzian approximation near ``Omega_m``.

    With ``chi_m = chi_eff`` and ``L = kappa |chi_c|^2``::

        S = 1/2 + eta * 8 |g|^2 L |chi_m|^2 [ (Omega - w) sin cos
                                               + (|g|^2 L + gamma_th) sin^2 ]

    ``losses=False`` sets ``eta = 1``; otherwise ``eta = c.eta_in`` and the
    loss-port vacuum is included, so loss only scales the signal terms.
    """
    if c.delta_c != 0:
        raise ValueError("resonant simplification requires delta_c == 0")
    eta = c.eta_in if losses else 1.0
    w = np.asarray(omega, dtype=float)
    chi_c2 = np.abs(cavity_susceptibility(w, c)) ** 2
    chi_m2 = np.abs(effective_mech_susceptibility(w, osc, c, d)) ** 2
    g2 = d.g_abs2
    cs, sn = np.cos(theta), np.sin(theta)
    L = c.kappa * chi_c2
    gamma_th = osc.gamma * (osc.n_th + 0.5)
    bracket = (osc.omega - w) * sn * cs + (g2 * L + gamma_th) * sn * sn
    return SHOT_NOISE + eta * 8.0 * g2 * L * chi_m2 * bracket


def s_dd_resonant_exact(omega, theta, osc: OscillatorParams, c: CavityParams, d: OptomechDerived):
    """Resonant-drive spectrum without the Lorentzian approximation.

    ``1/2 + 4 eta |g|^2 L {Re[chi_m] sin cos + 2 |chi_m|^2 (|g|^2 L + gamma_th) sin^2}``.
    """
    if c.delta_c != 0:
        raise ValueError("resonant form requires delta_c == 0")
    w = np.asarray(omega, dtype=float)
    L = c.kappa * np.abs(cavity_susceptibility(w, c)) ** 2
    chi = effective_mech_susceptibility(w, osc, c, d)
    g2 = d.g_abs2
    gamma_th = osc.gamma * (osc.n_th + 0.5)
    cs, sn = np.cos(theta), np.sin(theta)
    inner = chi.real * sn * cs + 2.0 * np.abs(chi) ** 2 * (g2 * L + gamma_th) * sn * sn
    return SHOT_NOISE + 4.0 * c.eta_in * g2 * L * inner


__all__ = [
    "CavityParams",
    "OptomechDerived",
    "backaction_filters",
    "backaction_force_psd",
    "backaction_occupation_approx",
    "best_quadrature",
    "cavity_susceptibility",
    "cooling_curve",
    "cooling_floor",
    "derive",
    "derive_from_rate",
    "detector_coefficients",
    "dynamical_backaction",
    "effective_mech_susceptibility",
    "filter_functions",
    "full_spectral_matrix",
    "loss_port_coefficients",
    "occupation_components",
    "optimal_detuning",
    "phonon_occupation",
    "photon_number_from_power",
    "power_for_unit_cooperativity",
    "quadrature_from_matrix",
    "s_dd_full",
    "s_dd_resonant_exact",
    "s_dd_resonant_simplified",
    "thermal_force_psd",
]
