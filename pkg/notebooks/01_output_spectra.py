"""
Output-light spectra of a measured oscillator
=============================================

Homodyne spectra of light that has read out an oscillator, how the detection
angle turns backaction correlations into sub-shot-noise noise, and how detection
loss washes that out.  Run with ``python3 notebooks/01_output_spectra.py``.
"""
import numpy as np

from sqzlight.core import (
    TWO_PI,
    DetectionConfig,
    OscillatorParams,
    cooperativity,
    min_quadrature,
    output_spectral_matrix,
    s_output_quadrature,
    spectral_components,
)
from sqzlight.spin import spin_coupling

# Spin-ensemble point: Larmor frequency, linewidth and measurement rate (rad/s)
osc = OscillatorParams(TWO_PI * 1.958e6, TWO_PI * 1.41e3, 0.03)
cpl = spin_coupling(TWO_PI * 812.0)
print("quantum cooperativity", cooperativity(cpl.Gamma, osc.gamma_th))

w = osc.omega + osc.gamma * np.linspace(-10, 10, 2001)
f_khz = (w - osc.omega) / TWO_PI / 1e3

#%% Spectrum at a fixed angle, split into its three terms
det = DetectionConfig(0.19 * np.pi, 0.83)
S = s_output_quadrature(w, osc, cpl, det)
shot, interference, signal = spectral_components(w, osc, cpl, det)
k = np.argmin(S)
print(f"minimum {10 * np.log10(S[k] / 0.5):.2f} dB at {f_khz[k]:+.2f} kHz from resonance")
print(f"  shot {shot[k]:.3f}, interference {interference[k]:+.3f}, signal {signal[k]:.3f}")

#%% Squeezing depth versus angle: the correlation term changes sign with theta
for t in (0.05, 0.1, 0.19, 0.3, 0.45):
    s = s_output_quadrature(w, osc, cpl, DetectionConfig(t * np.pi, 0.83))
    print(f"theta = {t:.2f} pi: best {10 * np.log10(s.min() / 0.5):+.2f} dB")

#%% The optimal quadrature at each frequency
lam, theta_opt = min_quadrature(output_spectral_matrix(w, osc, cpl))
k = np.argmin(lam)
print(f"lossless optimum {10 * np.log10(lam[k] / 0.5):.2f} dB at theta = {theta_opt[k] % np.pi / np.pi:.3f} pi")

#%% Detection loss pulls everything towards 1/2
for eta in (1.0, 0.83, 0.5, 0.2):
    s = s_output_quadrature(w, osc, cpl, DetectionConfig(0.19 * np.pi, eta))
    print(f"eta_det = {eta:.2f}: {10 * np.log10(s.min() / 0.5):+.2f} dB")
