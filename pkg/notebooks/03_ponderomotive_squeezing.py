"""
Ponderomotive squeezing behind a detuned cavity
===============================================

The full cavity-filtered homodyne spectrum of the membrane readout, its best
quadrature, and the chain of simplifications down to the bare oscillator model.
"""
import numpy as np

from sqzlight.core import (
    TWO_PI,
    CouplingConfig,
    DetectionConfig,
    Geometry,
    OscillatorParams,
    model_angle,
    s_output_quadrature,
    thermal_occupation,
)
from sqzlight import optomech as om

W = TWO_PI * 2.27e6
osc = OscillatorParams(W, W / 5.1e7, thermal_occupation(W, 10.0))
cav = om.CavityParams(TWO_PI * 94e6, -TWO_PI * 40e6, 0.98, TWO_PI * 248.0)
# measurement rate and total optical damping taken from the observed spectrum
d = om.derive_from_rate(TWO_PI * 47e3, osc, cav, gamma_opt=TWO_PI * 5.2e3)
print(f"optical damping {d.gamma_opt_total / TWO_PI / 1e3:.2f} kHz, spring {d.delta_omega_m / TWO_PI / 1e3:.2f} kHz")

w = TWO_PI * np.linspace(2.17e6, 2.32e6, 1501)

#%% Fixed-angle spectra with realistic detection efficiency
for t in (0.48, 0.5, 0.5115, 0.52, 0.55):
    S = om.s_dd_full(w, t * np.pi, osc, cav, d, eta_det=0.35)
    k = np.argmin(S)
    print(f"theta = {t:.4f} pi: {10 * np.log10(S[k] / 0.5):+.3f} dB at {w[k] / TWO_PI / 1e6:.4f} MHz")

#%% Best quadrature at every frequency, lossless and lossy
for eta in (1.0, 0.35):
    lam, th = om.best_quadrature(w, osc, cav, d, eta)
    k = np.argmin(lam)
    print(f"eta_det = {eta}: best {10 * np.log10(lam[k] / 0.5):+.2f} dB at theta = {th[k] % np.pi / np.pi:.4f} pi")

#%% Resonant drive with a very fast cavity reduces to the bare oscillator model
osc2 = OscillatorParams(W, W / 1e4, 2.0)
fast = om.CavityParams(100 * W, 0.0, 1.0)
d2 = om.derive_from_rate(TWO_PI * 5e3, osc2, fast)
w2 = osc2.omega + osc2.gamma * np.linspace(-20, 20, 801)
for t in (0.1, 0.25, 0.4):
    full = om.s_dd_full(w2, t * np.pi, osc2, fast, d2)
    simp = om.s_dd_resonant_simplified(w2, t * np.pi, osc2, fast, d2)
    core = s_output_quadrature(w2, osc2, CouplingConfig.from_rate(d2.Gamma_m),
                               DetectionConfig(model_angle(t * np.pi, Geometry.DRIVE_AMPLITUDE_SIGNAL_PHASE)))
    print(f"theta = {t} pi: max |full/simplified - 1| = {np.max(abs(full / simp - 1)):.1e}, "
          f"max |full/core - 1| = {np.max(abs(full / core - 1)):.1e}")
