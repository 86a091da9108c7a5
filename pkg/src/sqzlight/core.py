"""Single-oscillator light interface: susceptibility, noise spectra and variances.

All frequencies and rates are angular [rad/s]. Power spectral densities are
two-sided and symmetrized; a vacuum light quadrature has PSD 1/2 and the
variance of a quadrature is ``2 * int_0^inf S(w) dw / 2pi``.

The homodyne angle ``theta`` is measured from the signal-free light quadrature
toward the signal-carrying one, so the output spectrum has the same form for
both coupling geometries.  :func:`lab_angle` converts it to the angle of the
detected combination ``X_L cos(phi) + P_L sin(phi)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import constants, integrate

TWO_PI = 2.0 * np.pi
SHOT_NOISE = 0.5
CONVENTION = "two-sided symmetrized"


def hz_to_rad(f):
    """Ordinary frequency [Hz] to angular frequency [rad/s]."""
    return TWO_PI * np.asarray(f, dtype=float) if np.ndim(f) else TWO_PI * float(f)


def rad_to_hz(w):
    """Angular frequency [rad/s] to ordinary frequency [Hz]."""
    return np.asarray(w, dtype=float) / TWO_PI if np.ndim(w) else float(w) / TWO_PI


def thermal_occupation(omega, temperature):
    """Bose occupation ``1 / (exp(hbar*omega / kB T) - 1)``; zero at T = 0."""
    if temperature < 0:
        raise ValueError(f"temperature must be >= 0, got {temperature}")
    if temperature == 0:
        return 0.0
    x = constants.hbar * omega / (constants.k * temperature)
    return float(1.0 / np.expm1(x))


class Geometry(enum.Enum):
    """Which input light quadrature drives the oscillator.

    ``DRIVE_AMPLITUDE_SIGNAL_PHASE``: the amplitude quadrature X_L exerts the
    backaction force and the oscillator position is written onto P_L (radiation
    pressure).  ``DRIVE_PHASE_SIGNAL_AMPLITUDE``: the roles are swapped
    (Faraday interaction, where the circular Stokes component drives the spin).
    """

    DRIVE_AMPLITUDE_SIGNAL_PHASE = "drive_amplitude_signal_phase"
    DRIVE_PHASE_SIGNAL_AMPLITUDE = "drive_phase_signal_amplitude"


class SpectrumKind(enum.Enum):
    LIGHT_QUADRATURE = "light_quadrature"
    OSCILLATOR_DISPLACEMENT = "oscillator_displacement"
    FORCE = "force"


@dataclass(frozen=True)
class OscillatorParams:
    """Harmonic mode with resonance ``omega``, energy decay rate ``gamma`` and bath occupation ``n_th``."""

    omega: float
    gamma: float
    n_th: float = 0.0

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not self.n_th >= 0:
            raise ValueError(f"n_th must be >= 0, got {self.n_th}")

    @property
    def gamma_th(self) -> float:
        """Thermal decoherence rate ``gamma * (n_th + 1/2)``."""
        return self.gamma * (self.n_th + 0.5)

    @property
    def quality_factor(self) -> float:
        return self.omega / self.gamma

    @classmethod
    def from_temperature(cls, omega, gamma, temperature):
        return cls(omega, gamma, thermal_occupation(omega, temperature))


@dataclass(frozen=True)
class CouplingConfig:
    """Coupling strength ``g`` [s^-1/2] and the geometry of the interaction."""

    g: float
    geometry: Geometry = Geometry.DRIVE_AMPLITUDE_SIGNAL_PHASE

    def __post_init__(self):
        if not self.g >= 0:
            raise ValueError(f"g must be >= 0, got {self.g}")
        if not isinstance(self.geometry, Geometry):
            object.__setattr__(self, "geometry", Geometry(self.geometry))

    @property
    def Gamma(self) -> float:
        """Measurement rate ``g**2 / 4``."""
        return self.g**2 / 4.0

    @classmethod
    def from_rate(cls, Gamma, geometry=Geometry.DRIVE_AMPLITUDE_SIGNAL_PHASE):
        if Gamma < 0:
            raise ValueError(f"measurement rate must be >= 0, got {Gamma}")
        return cls(float(np.sqrt(4.0 * Gamma)), geometry)


@dataclass(frozen=True)
class DetectionConfig:
    """Homodyne angle ``theta`` [rad] and detection efficiency ``eta_det``."""

    theta: float = 0.0
    eta_det: float = 1.0

    def __post_init__(self):
        _check_efficiency(self.eta_det)

    @property
    def theta_reduced(self) -> float:
        """``theta`` folded into [0, pi); spectra are pi-periodic in theta."""
        return float(np.mod(self.theta, np.pi))


@dataclass
class Spectrum:
    """Sampled symmetrized PSD on a strictly increasing angular-frequency grid.

    ``stderr`` optionally holds per-bin standard errors (e.g. from the scatter
    of averaged periodogram segments).
    """

    grid: np.ndarray
    values: np.ndarray
    kind: SpectrumKind = SpectrumKind.LIGHT_QUADRATURE
    convention: str = CONVENTION
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.ndim != 1 or self.grid.shape != self.values.shape:
            raise ValueError("grid and values must be 1-D arrays of equal length")
        if self.grid.size > 1 and not np.all(np.diff(self.grid) > 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("symmetrized PSD values must be finite and non-negative")
        if self.convention != CONVENTION:
            raise ValueError(f"unsupported PSD convention {self.convention!r}; expected {CONVENTION!r}")
        if not isinstance(self.kind, SpectrumKind):
            self.kind = SpectrumKind(self.kind)
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
            if self.stderr.shape != self.values.shape:
                raise ValueError("stderr must match values in shape")

    def __len__(self):
        return self.grid.size


@dataclass(frozen=True)
class HybridParams:
    """Rates entering the light-mediated spin-membrane coupling."""

    gamma_th_s: float
    gamma_th_m: float
    Gamma_s: float
    Gamma_m: float
    Gamma_ba_s: float = 0.0
    Gamma_ba_m: float = 0.0

    def __post_init__(self):
        for name in ("gamma_th_s", "gamma_th_m", "Gamma_s", "Gamma_m", "Gamma_ba_s", "Gamma_ba_m"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def gamma_tot_s(self) -> float:
        return self.gamma_th_s + self.Gamma_ba_s / 2.0

    @property
    def gamma_tot_m(self) -> float:
        return self.gamma_th_m + self.Gamma_ba_m / 2.0


def _check_efficiency(eta):
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"efficiency must lie in (0, 1], got {eta}")


def susceptibility(omega, osc: OscillatorParams):
    """Mechanical-style susceptibility ``Omega / (Omega**2 - w**2 - i gamma w)``."""
    w = np.asarray(omega, dtype=float)
    return osc.omega / (osc.omega**2 - w**2 - 1j * osc.gamma * w)


def s_xx(omega, osc: OscillatorParams, cpl: CouplingConfig):
    """Displacement PSD ``2 |chi|^2 (gamma_th + Gamma)`` driven by bath and backaction."""
    chi = susceptibility(omega, osc)
    return 2.0 * np.abs(chi) ** 2 * (osc.gamma_th + cpl.Gamma)


def lab_angle(theta, geometry: Geometry):
    """Angle ``phi`` of the detected ``X_L cos(phi) + P_L sin(phi)`` for model angle ``theta``."""
    if Geometry(geometry) is Geometry.DRIVE_PHASE_SIGNAL_AMPLITUDE:
        return theta + np.pi / 2.0
    return theta


def model_angle(phi, geometry: Geometry):
    """Inverse of :func:`lab_angle`."""
    if Geometry(geometry) is Geometry.DRIVE_PHASE_SIGNAL_AMPLITUDE:
        return phi - np.pi / 2.0
    return phi


def output_spectral_matrix(omega, osc: OscillatorParams, cpl: CouplingConfig):
    """Lossless 2x2 symmetrized spectral matrix of the output light.

    Returns ``(s_free, s_signal, s_cross)`` in the (signal-free, signal-carrying)
    quadrature basis, so that
    ``S(theta) = s_free cos^2 + s_signal sin^2 + 2 s_cross cos sin``.
    """
    chi = susceptibility(omega, osc)
    Gamma = cpl.Gamma
    s_free = np.full(np.shape(chi), SHOT_NOISE)
    s_signal = SHOT_NOISE + 4.0 * Gamma * 2.0 * np.abs(chi) ** 2 * (osc.gamma_th + Gamma)
    s_cross = 2.0 * Gamma * chi.real
    return s_free, s_signal, s_cross


def quadrature_from_matrix(matrix, theta):
    s_free, s_signal, s_cross = matrix
    c, s = np.cos(theta), np.sin(theta)
    return s_free * c * c + s_signal * s * s + 2.0 * s_cross * c * s


def min_quadrature(matrix):
    """Smallest eigenvalue of the spectral matrix (best squeezing) and its angle."""
    s_free, s_signal, s_cross = (np.asarray(m, dtype=float) for m in matrix)
    mean = 0.5 * (s_free + s_signal)
    radius = np.hypot(0.5 * (s_free - s_signal), s_cross)
    theta = 0.5 * np.arctan2(-2.0 * s_cross, s_signal - s_free)
    return mean - radius, theta


def apply_detection_loss(S, eta_det):
    """Beam-splitter loss: mix a fraction ``1 - eta_det`` of vacuum into the detected field."""
    _check_efficiency(eta_det)
    S = np.asarray(S, dtype=float) if np.ndim(S) else float(S)
    if np.any(np.asarray(S) < 0):
        raise ValueError("PSD must be non-negative")
    return eta_det * S + (1.0 - eta_det) * SHOT_NOISE


def s_output_quadrature(omega, osc: OscillatorParams, cpl: CouplingConfig, det: DetectionConfig | None = None):
    """Homodyne PSD of the output light quadrature at angle ``det.theta``.

    ``1/2 + 4 Gamma {Re[chi] cos(theta) sin(theta) + S_XX sin^2(theta)}``,
    followed by the detection-loss map.
    """
    det = det or DetectionConfig()
    S = quadrature_from_matrix(output_spectral_matrix(omega, osc, cpl), det.theta)
    return apply_detection_loss(S, det.eta_det)


def spectral_components(omega, osc: OscillatorParams, cpl: CouplingConfig, det: DetectionConfig | None = None):
    """Split the detected spectrum into (shot, interference, signal) terms.

    The three terms sum to :func:`s_output_quadrature`; the shot term is 1/2
    because the loss map rescales only the signal terms.
    """
    det = det or DetectionConfig()
    chi = susceptibility(omega, osc)
    c, s = np.cos(det.theta), np.sin(det.theta)
    interference = det.eta_det * 4.0 * cpl.Gamma * chi.real * c * s
    signal = det.eta_det * 4.0 * cpl.Gamma * s_xx(omega, osc, cpl) * s * s
    shot = np.full(np.shape(chi), SHOT_NOISE)
    return shot, interference, signal


def cooperativity(Gamma_meas, gamma_th):
    """Quantum cooperativity ``Gamma / gamma_th``."""
    if not gamma_th > 0:
        raise ValueError(f"gamma_th must be > 0, got {gamma_th}")
    if Gamma_meas < 0:
        raise ValueError(f"measurement rate must be >= 0, got {Gamma_meas}")
    return Gamma_meas / gamma_th


def variance_band(source, center, bandwidth, *, rtol=1e-6):
    """Band variance ``2 * int S dw / 2pi`` over ``[center - bw/2, center + bw/2]``.

    ``source`` is either a callable ``S(w)`` (integrated adaptively) or a
    :class:`Spectrum` (trapezoidal rule on the samples inside the band).
    """
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be > 0, got {bandwidth}")
    lo, hi = center - bandwidth / 2.0, center + bandwidth / 2.0
    if isinstance(source, Spectrum):
        grid = source.grid
        if lo < grid[0] or hi > grid[-1]:
            missing = []
            if lo < grid[0]:
                missing.append(f"[{lo:.6g}, {grid[0]:.6g}]")
            if hi > grid[-1]:
                missing.append(f"[{grid[-1]:.6g}, {hi:.6g}]")
            raise ValueError("band exceeds sampled grid; missing rad/s range " + " and ".join(missing))
        inside = (grid > lo) & (grid < hi)
        w = np.concatenate(([lo], grid[inside], [hi]))
        S = np.interp(w, grid, source.values)
        return 2.0 * integrate.trapezoid(S, w) / TWO_PI
    value, _ = integrate.quad(lambda w: float(source(w)), lo, hi, points=[center], epsrel=rtol, epsabs=0.0, limit=500)
    return 2.0 * value / TWO_PI


def variance_full(model, center, width, *, rtol=1e-6):
    """Variance ``2 * int_0^inf S dw / 2pi`` of a resonant spectrum.

    The substitution ``w = center + (width/2) tan(u)`` flattens a Lorentzian
    of full width ``width``, so narrow high-Q peaks integrate accurately.
    """
    half = width / 2.0
    u_lo = np.arctan(-center / half)

    def integrand(u):
        return float(model(center + half * np.tan(u))) * half / np.cos(u) ** 2

    value, _ = integrate.quad(integrand, u_lo, np.pi / 2.0, points=[0.0], epsrel=rtol, epsabs=0.0, limit=500)
    return 2.0 * value / TWO_PI


def spin_style_variance(Gamma_eff, gamma_s, bandwidth, eta_det=1.0):
    """Closed-form band variance ``bw/(2pi eta) + 2 Gamma (1 + 2 Gamma / gamma_s)``.

    Assumes ``bandwidth >> gamma_s`` (not checked).  The shot term is referred
    to the input of a detector with efficiency ``eta_det``.
    """
    if Gamma_eff < 0:
        raise ValueError(f"Gamma_eff must be >= 0, got {Gamma_eff}")
    if not gamma_s > 0 or not bandwidth > 0:
        raise ValueError("gamma_s and bandwidth must be > 0")
    _check_efficiency(eta_det)
    return bandwidth / (TWO_PI * eta_det) + 2.0 * Gamma_eff * (1.0 + 2.0 * Gamma_eff / gamma_s)


def hybrid_coupling(Gamma_m, Gamma_s):
    """Light-mediated spin-membrane coupling ``sqrt(4 Gamma_m Gamma_s)``."""
    if Gamma_m < 0 or Gamma_s < 0:
        raise ValueError("measurement rates must be >= 0")
    return float(np.sqrt(4.0 * Gamma_m * Gamma_s))


def hybrid_cooperativity(h: HybridParams):
    """``4 g_hyb^2 / (gamma_tot_s gamma_tot_m)``."""
    if not (h.gamma_tot_s > 0 and h.gamma_tot_m > 0):
        raise ValueError("total decoherence rates must be > 0")
    g = hybrid_coupling(h.Gamma_m, h.Gamma_s)
    return 4.0 * g**2 / (h.gamma_tot_s * h.gamma_tot_m)


def hybrid_bound(h: HybridParams):
    """``16 C_m C_s`` from the individual cooperativities."""
    return 16.0 * cooperativity(h.Gamma_m, h.gamma_th_m) * cooperativity(h.Gamma_s, h.gamma_th_s)


def hybrid_bound_holds(h: HybridParams) -> bool:
    """True when ``C_hyb <= 16 C_m C_s``; equality only without residual backaction."""
    return hybrid_cooperativity(h) <= hybrid_bound(h) * (1.0 + 1e-12)
