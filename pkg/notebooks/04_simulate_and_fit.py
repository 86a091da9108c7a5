"""
Simulate a record, estimate its spectrum, fit it back
=====================================================

A scaled oscillator (Omega / gamma = 30) with the rate, occupation and angle of the
spin squeezing point is integrated in the time domain, its averaged periodogram is
compared with the analytic spectrum, and the rate and linewidth are fitted.
"""
import time

import numpy as np

from sqzlight.core import TWO_PI, CouplingConfig, DetectionConfig, OscillatorParams, s_output_quadrature
from sqzlight import fitting as ft
from sqzlight import oracle as orc

osc = OscillatorParams(TWO_PI * 1e3, TWO_PI * 1e3 / 30, 0.03)
Gamma = osc.gamma * 812 / 1410
theta = 0.19 * np.pi
cpl = CouplingConfig.from_rate(Gamma)

cfg = orc.TrajectoryConfig(0.01 * TWO_PI / osc.omega, 2e4 / osc.gamma, seed=1, record=(("D", theta),))
t0 = time.time()
spectra, _ = orc.simulate_psd(osc, cpl, cfg, 1 << 16)
spec = spectra[orc.channel_name(("D", theta))]
print(f"{cfg.n_steps:.3g} steps in {time.time() - t0:.1f} s")

#%% Periodogram against the analytic spectrum
m = np.abs(spec.grid - osc.omega) < 10 * osc.gamma
ref = s_output_quadrature(spec.grid[m], osc, cpl, DetectionConfig(theta))
r = spec.values[m] / ref - 1
print(f"RMS deviation over +-10 linewidths: {np.sqrt(np.mean(r**2)):.3f}")
print(f"lowest bin {10 * np.log10(spec.values[m].min() / 0.5):+.2f} dB, model {10 * np.log10(ref.min() / 0.5):+.2f} dB")

#%% Fit rate and linewidth with the model-based weights
data = ft.decimate_bins(spec, 2, osc.omega - 10 * osc.gamma, osc.omega + 10 * osc.gamma)
problem = ft.FitProblem(data, "CoreSqueezing", {"Gamma": (1.2 * Gamma, 0.0, None), "gamma": (0.8 * osc.gamma, 0.0, None)},
                        dict(Omega=osc.omega, n_th=osc.n_th, theta=theta), "model")
res = ft.fit(problem)
for k, truth in (("Gamma", Gamma), ("gamma", osc.gamma)):
    print(f"{k:5s} = {res.values[k] / TWO_PI:7.3f} +- {res.errors[k] / TWO_PI:.3f} Hz  (truth {truth / TWO_PI:.3f})")
print(f"reduced chi^2 {res.reduced_chi2:.3f}, squared Mahalanobis distance "
      f"{ft.mahalanobis(res, {'Gamma': Gamma, 'gamma': osc.gamma}):.2f}")
c = ft.cooperativity_from_fit(res)
print(f"cooperativity {c.value:.3f} +- {c.error:.3f}")
