"""
Sideband cooling of a membrane mode
===================================

Dynamical backaction from a detuned cavity drive: optical damping and spring,
and the phonon occupation versus input power down to the backaction floor.
"""
import numpy as np

from sqzlight.core import TWO_PI, OscillatorParams, thermal_occupation
from sqzlight import optomech as om

W = TWO_PI * 2.27e6
osc = OscillatorParams(W, W / 5.1e7, thermal_occupation(W, 10.0))
kappa = TWO_PI * 94e6
print(f"thermal occupation at 10 K: {osc.n_th:.3g}")
print(f"kappa / Omega_m = {kappa / W:.1f} (unresolved sidebands)")

#%% Optical damping and spring across detuning at a fixed photon number
for det_mhz in (-80, -47, -20, 0, 20, 47):
    cav = om.CavityParams(kappa, TWO_PI * det_mhz * 1e6, 0.98, TWO_PI * 248.0, n_c=1e8)
    d = om.derive(osc, cav)
    print(f"Delta_c = {det_mhz:+4d} MHz: gamma_opt = {d.gamma_opt / TWO_PI / 1e3:+8.2f} kHz, "
          f"spring = {d.delta_omega_m / TWO_PI / 1e3:+8.2f} kHz")

#%% Occupation versus power at the optimal detuning -kappa/2
cav = om.CavityParams(kappa, om.optimal_detuning(kappa), 0.98, TWO_PI * 248.0)
wavelength = 1064e-9
# pin the power scale so that backaction and thermal forces balance at 224 uW
cal = om.power_for_unit_cooperativity(osc, cav, wavelength) / 224e-6
powers = np.logspace(-5, -2, 13)
curve = om.cooling_curve(osc, cav, powers, wavelength, cal)
floor = om.cooling_floor(kappa, W)
for P, n, nth, nba, C in zip(powers, curve["total"], curve["thermal"], curve["backaction"], curve["C_qu"]):
    print(f"P = {P * 1e3:8.4f} mW  C_qu = {C:8.2f}  n = {n:9.2f}  (thermal {nth:8.2f}, backaction {nba:6.2f})")
print(f"backaction floor kappa / (4 Omega_m) = {floor:.2f}")
