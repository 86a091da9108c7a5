"""Command-line front end.

Each subcommand reads one config (YAML, or a CSV whose header echoes a
config) and writes plot-ready CSV files into ``--out``.

Exit codes: 0 success, 1 runtime failure, 2 configuration/validation failure.
"""

from __future__ import annotations

import argparse
import copy
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import fitting as ft
from . import optomech as om
from . import oracle as orc
from . import spin as sp
from .core import (
    SHOT_NOISE,
    TWO_PI,
    CouplingConfig,
    DetectionConfig,
    Geometry,
    HybridParams,
    OscillatorParams,
    cooperativity,
    hybrid_bound,
    hybrid_bound_holds,
    hybrid_coupling,
    hybrid_cooperativity,
    spectral_components,
    thermal_occupation,
)
from .io import (
    ConfigError,
    LoadedConfig,
    canonical_json,
    convert_param,
    fmt,
    hz,
    load_config,
    read_spectrum_csv,
    sha256_file,
    theta_from,
    validate,
    write_csv,
    write_report,
)

DEFAULT_G0_HZ = 1.0  # only the product g0^2 n_c enters when the rate is given directly


# ---------------------------------------------------------------- config -> physics


def _detection(cfg):
    det = cfg.get("detection", {})
    return theta_from(det, 0.0), float(det.get("eta_det", 1.0))


def _generic(p):
    W, gam = hz(p["omega_Hz"]), hz(p["gamma_Hz"])
    n_th = thermal_occupation(W, p["temperature_K"]) if "temperature_K" in p else float(p.get("n_th", 0.0))
    geometry = Geometry(p.get("geometry", Geometry.DRIVE_AMPLITUDE_SIGNAL_PHASE.value))
    return OscillatorParams(W, gam, n_th), CouplingConfig.from_rate(hz(p.get("Gamma_Hz", 0.0)), geometry)


def _eta_sq_mean(p):
    if "eta_sq_mean" in p:
        return float(p["eta_sq_mean"])
    if "cloud" in p:
        c = p["cloud"]
        geom = sp.CloudBeamGeometry(c["cloud_radial_waist_um"] * 1e-6, c["cloud_axial_sigma_um"] * 1e-6,
                                    c["beam_waist_um"] * 1e-6, c["wavelength_nm"] * 1e-9)
        return sp.inhomogeneous_factors(geom).eta_sq_mean
    return 1.0


def _spin_rate(p, n_atoms=None):
    if n_atoms is None and "Gamma_eff_Hz" in p:
        return hz(p["Gamma_eff_Hz"])
    missing = [k for k in ("alpha_1", "photon_flux_per_s") if k not in p]
    if missing:
        raise ConfigError(f"params: the rate chain needs {missing}")
    ens = sp.SpinEnsembleParams(
        n_atoms=float(p["n_atoms"] if n_atoms is None else n_atoms),
        alpha_1=float(p["alpha_1"]),
        photon_flux=float(p["photon_flux_per_s"]),
        omega_larmor=hz(p["larmor_Hz"]),
        gamma_s=hz(p["gamma_s_Hz"]),
        polarization=float(p.get("polarization", 1.0)),
    )
    return sp.effective_spin_rate(sp.spin_measurement_rate(ens), _eta_sq_mean(p))


def _spin(p):
    osc = OscillatorParams(hz(p["larmor_Hz"]), hz(p["gamma_s_Hz"]), float(p.get("n_th", sp.DEFAULT_SPIN_N_TH)))
    return osc, sp.spin_coupling(_spin_rate(p))


def _optomech_base(p):
    W = hz(p["omega_m_Hz"])
    gam = W / p["Q_m"] if "Q_m" in p else hz(p["gamma_m_Hz"])
    n_th = thermal_occupation(W, p["temperature_K"]) if "temperature_K" in p else float(p["n_th"])
    osc = OscillatorParams(W, gam, n_th)
    cav = om.CavityParams(hz(p["kappa_Hz"]), hz(p.get("delta_c_Hz", 0.0)), float(p.get("eta_in", 1.0)),
                          hz(p.get("g0_Hz", DEFAULT_G0_HZ)))
    return osc, cav


def _calibration(p, osc, cav):
    if "unit_cooperativity_power_uW" in p:
        target = p["unit_cooperativity_power_uW"] * 1e-6
        return om.power_for_unit_cooperativity(osc, cav, _wavelength(p)) / target
    return float(p.get("calibration", 1.0))


def _wavelength(p):
    if "wavelength_nm" not in p:
        raise ConfigError("params: wavelength_nm is required to convert input power")
    return p["wavelength_nm"] * 1e-9


def _optomech(p):
    osc, cav = _optomech_base(p)
    g_opt = hz(p["gamma_opt_Hz"]) if "gamma_opt_Hz" in p else None
    if "Gamma_m_Hz" in p:
        d = om.derive_from_rate(hz(p["Gamma_m_Hz"]), osc, cav, g_opt)
        cav = replace(cav, n_c=d.Gamma_m * cav.kappa / (4.0 * cav.g0**2))
        return osc, cav, d
    if "power_uW" in p or "power_mW" in p:
        power = p["power_uW"] * 1e-6 if "power_uW" in p else p["power_mW"] * 1e-3
        cav = replace(cav, n_c=float(om.photon_number_from_power(
            power, _wavelength(p), cav.kappa, cav.delta_c, cav.eta_in, _calibration(p, osc, cav))))
    elif "n_c" in p:
        cav = replace(cav, n_c=float(p["n_c"]))
    else:
        raise ConfigError("params: give one of Gamma_m_Hz, n_c, power_uW or power_mW")
    d = om.derive(osc, cav)
    if g_opt is not None:
        d = replace(d, excess_linewidth=g_opt - d.gamma_opt)
    return osc, cav, d


def model_and_params(cfg):
    """Fit-model name and full parameter dict (internal units) for the configured system."""
    theta, eta = _detection(cfg)
    p, system = cfg["params"], cfg["system"]
    if system == "generic":
        osc, cpl = _generic(p)
        return "CoreSqueezing", dict(Omega=osc.omega, gamma=osc.gamma, n_th=osc.n_th, Gamma=cpl.Gamma, theta=theta, eta_det=eta)
    if system == "spin":
        osc, cpl = _spin(p)
        return "SpinSqueezing", dict(Omega_s=osc.omega, gamma_s=osc.gamma, n_th=osc.n_th, Gamma_eff=cpl.Gamma,
                                     theta=theta, eta_det=eta)
    osc, cav, d = _optomech(p)
    return "OptomechFull", dict(Omega_m=osc.omega, gamma_m=osc.gamma, n_th=osc.n_th, kappa=cav.kappa,
                                delta_c=cav.delta_c, eta_in=cav.eta_in, Gamma_m=d.Gamma_m,
                                gamma_opt=d.gamma_opt_total, theta=theta, eta_det=eta)


def _grid_hz(g):
    if g["stop_Hz"] <= g["start_Hz"]:
        raise ConfigError("grid: stop_Hz must exceed start_Hz")
    if g["points"] < 2:
        raise ConfigError("grid: points must be >= 2")
    return np.linspace(float(g["start_Hz"]), float(g["stop_Hz"]), int(g["points"]))


def _db(x):
    return 10.0 * np.log10(np.asarray(x) / SHOT_NOISE)


# ---------------------------------------------------------------- commands


def run_spectrum(cfg, out: Path, command="spectrum"):
    f = _grid_hz(cfg["spectrum"]["grid"])
    w = TWO_PI * f
    theta, eta = _detection(cfg)
    system = cfg["system"]
    if system in ("generic", "spin"):
        osc, cpl = _generic(cfg["params"]) if system == "generic" else _spin(cfg["params"])
        if system == "spin" and np.any(np.abs(w - osc.omega) > osc.omega / 2.0):
            raise ConfigError("spectrum.grid must lie within larmor_Hz/2 of the Larmor frequency")
        shot, inter, sig = spectral_components(w, osc, cpl, DetectionConfig(theta, eta))
        psd = shot + inter + sig
        cols = ["frequency_Hz", "psd", "psd_shot_relative_dB", "shot", "interference", "signal"]
        rows = zip(f, psd, _db(psd), shot, inter, sig)
    else:
        osc, cav, d = _optomech(cfg["params"])
        psd = om.s_dd_full(w, theta, osc, cav, d, eta)
        cols = ["frequency_Hz", "psd", "psd_shot_relative_dB", "shot", "excess"]
        rows = zip(f, psd, _db(psd), np.full_like(psd, SHOT_NOISE), psd - SHOT_NOISE)
    return [write_csv(out / f"{_prefix(cfg)}spectrum.csv", command, cfg, cols, rows)]


def _powers(block):
    if "powers_uW" in block:
        powers = np.asarray(block["powers_uW"], dtype=float)
        if np.any(powers < 0):
            raise ConfigError("cooling_curve.powers_uW: powers must be >= 0")
    else:
        missing = [k for k in ("start_uW", "stop_uW", "points") if k not in block]
        if missing:
            raise ConfigError(f"cooling_curve: give powers_uW or start_uW/stop_uW/points (missing {missing})")
        lo, hi, n = float(block["start_uW"]), float(block["stop_uW"]), int(block["points"])
        if block.get("spacing", "log") == "log":
            if lo <= 0:
                raise ConfigError("cooling_curve.start_uW must be > 0 for log spacing")
            powers = np.geomspace(lo, hi, n)
        else:
            powers = np.linspace(lo, hi, n)
    if block.get("include_zero", False):
        powers = np.concatenate(([0.0], powers))
    return powers


def run_cooling_curve(cfg, out: Path, command="cooling-curve"):
    if cfg["system"] != "optomech":
        raise ConfigError("cooling-curve needs system: optomech")
    p = cfg["params"]
    osc, cav = _optomech_base(p)
    powers = _powers(cfg["cooling_curve"])
    curve = om.cooling_curve(osc, cav, powers * 1e-6, _wavelength(p), _calibration(p, osc, cav))
    cols = ["power_uW", "n_m_total", "n_m_thermal_component", "n_m_backaction_component", "C_qu"]
    rows = zip(powers, curve["total"], curve["thermal"], curve["backaction"], curve["C_qu"])
    return [write_csv(out / f"{_prefix(cfg)}cooling_curve.csv", command, cfg, cols, rows)]


def run_variance_sweep(cfg, out: Path, command="variance-sweep"):
    if cfg["system"] != "spin":
        raise ConfigError("variance-sweep needs system: spin")
    p, block = cfg["params"], cfg["variance_sweep"]
    eta = float(block.get("eta_det", _detection(cfg)[1]))
    if "rates_Hz" in block:
        rates_hz = np.asarray(block["rates_Hz"], dtype=float)
        rates = TWO_PI * rates_hz
    elif "n_atoms" in block:
        rates = np.array([_spin_rate(p, n) for n in block["n_atoms"]])
        rates_hz = rates / TWO_PI
    else:
        raise ConfigError("variance_sweep: give rates_Hz or n_atoms")
    curve = sp.spin_variance_curve(rates, hz(p["gamma_s_Hz"]), hz(block["bandwidth_Hz"]), eta)
    cols = ["Gamma_eff_Hz", "var_total", "var_shot", "var_projection", "var_backaction"]
    rows = zip(rates_hz, curve["total"], curve["shot"], curve["projection"], curve["backaction"])
    return [write_csv(out / f"{_prefix(cfg)}variance_sweep.csv", command, cfg, cols, rows)]


def run_simulate(cfg, out: Path, command="simulate"):
    if cfg["system"] not in ("generic", "spin"):
        raise ConfigError("simulate supports system: generic or spin")
    osc, cpl = _generic(cfg["params"]) if cfg["system"] == "generic" else _spin(cfg["params"])
    block = cfg["simulate"]
    theta, eta = _detection(cfg)
    dt = float(block.get("dt_s", orc.MAX_STEP_FRACTION * TWO_PI / osc.omega))
    if "duration_s" in block and "duration_per_gamma" in block:
        raise ConfigError("simulate: give duration_s or duration_per_gamma, not both")
    duration = float(block["duration_s"]) if "duration_s" in block else float(block.get("duration_per_gamma", 2e4)) / osc.gamma
    if "thetas_pi" in block and {"theta_pi", "theta_rad"} & set(cfg.get("detection", {})):
        raise ConfigError("simulate.thetas_pi and detection.theta_pi both set the angle, give one")
    thetas_pi = [float(t) for t in block.get("thetas_pi", [theta / math.pi])]
    seed = int(cfg.get("seed", 0))
    try:
        tcfg = orc.TrajectoryConfig(dt, duration, int(block.get("n_traj", 1)), seed,
                                    tuple(("D", math.pi * t) for t in thetas_pi), eta)
        orc.check_step(osc, dt)
    except ValueError as exc:
        raise ConfigError(f"simulate: {exc}") from None
    nseg = int(block.get("segment_length", 1 << 16))
    if nseg > tcfg.n_steps:
        raise ConfigError(f"simulate.segment_length {nseg} exceeds the {tcfg.n_steps} simulated steps")
    keep = int(block.get("timeseries_samples", 1000))
    spectra, ts = orc.simulate_psd(osc, cpl, tcfg, nseg, float(block.get("overlap", 0.5)),
                                   block.get("window", "hann"), keep_samples=keep)
    band = block.get("band_Hz")
    if band is not None and (len(band) != 2 or band[1] <= band[0]):
        raise ConfigError("simulate.band_Hz must be [low, high] with low < high")
    f_all = np.arange(nseg // 2 + 1) / (nseg * dt)
    if band is None:
        lo, hi = (osc.omega - 20 * osc.gamma) / TWO_PI, (osc.omega + 20 * osc.gamma) / TWO_PI
    else:
        lo, hi = band
    sel = (f_all >= lo) & (f_all <= hi)
    paths = []
    for i, (t_pi, c) in enumerate(zip(thetas_pi, tcfg.record)):
        est = spectra[orc.channel_name(c)]
        model = ft.get_model("CoreSqueezing").evaluate(est.grid[sel], dict(
            Omega=osc.omega, gamma=osc.gamma, n_th=osc.n_th, Gamma=cpl.Gamma, theta=math.pi * t_pi, eta_det=eta))
        name = "simulate_psd.csv" if len(thetas_pi) == 1 else f"simulate_psd_{i}.csv"
        cols = ["frequency_Hz", "psd", "psd_stderr", "model"]
        rows = zip(f_all[sel], est.values[sel], est.stderr[sel], model)
        paths.append(write_csv(out / f"{_prefix(cfg)}{name}", command, cfg, cols, rows))
    if keep:
        names = list(ts.channels)
        cols = ["t_s", *names]
        rows = ([i * dt, *(ts.channels[n][0, i] for n in names)] for i in range(ts.n_samples))
        paths.append(write_csv(out / f"{_prefix(cfg)}simulate_timeseries.csv", command, cfg, cols, rows))
    return paths


HZ_PARAMS = {"Omega", "gamma", "Gamma", "Omega_s", "gamma_s", "Gamma_eff", "Omega_m", "gamma_m", "kappa", "delta_c",
             "Gamma_m", "gamma_opt"}
ANGLE_PARAMS = {"theta"}


def _fit_param(model, key, value, where):
    name, v = convert_param(key, value)
    if name not in model.params:
        raise ConfigError(f"{where}.{key}: unknown parameter for {model.name}; allowed {list(model.params)}")
    if name in HZ_PARAMS and not key.endswith("_Hz"):
        raise ConfigError(f"{where}.{key}: {name} must be given in Hz ({name}_Hz)")
    if name in ANGLE_PARAMS and not (key.endswith("_pi") or key.endswith("_rad")):
        raise ConfigError(f"{where}.{key}: theta must carry _pi or _rad")
    if name not in HZ_PARAMS | ANGLE_PARAMS and key != name:
        raise ConfigError(f"{where}.{key}: {name} is dimensionless and takes no unit suffix")
    return name, v


def _user_key(name):
    if name in HZ_PARAMS:
        return f"{name}_Hz", TWO_PI
    if name in ANGLE_PARAMS:
        return f"{name}_pi", math.pi
    return name, 1.0


def build_fit_problem(cfg, base: Path | None = None):
    block = cfg["fit"]
    model = ft.get_model(block["model"])
    path = Path(block["input"])
    if not path.is_absolute() and not path.exists() and base is not None:
        path = base / path
    data = read_spectrum_csv(path)
    free, fixed = {}, {}
    for key, spec in block["free"].items():
        if isinstance(spec, dict):
            unknown = set(spec) - {"init", "min", "max"}
            if unknown or "init" not in spec:
                raise ConfigError(f"fit.free.{key}: expected keys init[, min, max]")
            vals = [spec["init"], spec.get("min"), spec.get("max")]
        elif isinstance(spec, (int, float)) and not isinstance(spec, bool):
            vals = [spec, None, None]
        else:
            raise ConfigError(f"fit.free.{key}: expected a number or a mapping with init/min/max")
        name, init = _fit_param(model, key, vals[0], "fit.free")
        lo, hi = (None if v is None else convert_param(key, v)[1] for v in vals[1:])
        free[name] = (init, lo, hi)
    for key, value in block.get("fixed", {}).items():
        name, v = _fit_param(model, key, value, "fit.fixed")
        fixed[name] = v
    rng = block.get("range_Hz")
    if rng is not None and (len(rng) != 2 or rng[1] <= rng[0]):
        raise ConfigError("fit.range_Hz must be [low, high] with low < high")
    lo, hi = (TWO_PI * rng[0], TWO_PI * rng[1]) if rng else (None, None)
    data = ft.decimate_bins(data, int(block.get("stride", 1)), lo, hi)
    try:
        return ft.FitProblem(data, model, free, fixed, block.get("weighting")), path
    except ft.FitError as exc:
        raise ConfigError(f"fit: {exc}") from None


def run_fit(cfg, out: Path, command="fit", base=None):
    problem, path = build_fit_problem(cfg, base)
    res = ft.fit(problem)
    report = {
        "model": res.model,
        "input": str(path),
        "input_sha256": sha256_file(path),
        "config": canonical_json(cfg),
        "convention": "two-sided symmetrized",
        "converged": str(res.converged).lower(),
        "message": res.message,
        "iterations": res.iterations,
        "grad_norm": res.grad_norm,
        "chi2": res.chi2,
        "dof": res.dof,
        "reduced_chi2": res.reduced_chi2,
        "n_points": len(problem.data),
    }
    for name in res.names:
        key, s = _user_key(name)
        report[key] = res.values[name] / s
        report[f"{key}_err"] = res.errors[name] / s
    for i, a in enumerate(res.names):
        for j, b in enumerate(res.names):
            if j > i:
                report[f"corr_{a}_{b}"] = res.covariance[i, j] / math.sqrt(res.covariance[i, i] * res.covariance[j, j])
    for name, v in sorted(res.fixed.items()):
        if isinstance(v, float) and math.isnan(v):
            continue
        key, s = _user_key(name)
        report[f"fixed_{key}"] = v / s
    if res.converged:
        c = ft.cooperativity_from_fit(res)
        report["cooperativity"] = c.value
        report["cooperativity_err"] = c.error
    rep = ft.squeezing_report(res.params(), grid=problem.data.grid, model=problem.model)
    report["model_min_dB"] = rep.min_ratio_dB
    report["model_min_frequency_Hz"] = rep.omega_at_min / TWO_PI
    return [write_report(out / f"{_prefix(cfg)}fit_report.txt", report)]


def run_squeeze_scan(cfg, out: Path, command="squeeze-scan"):
    block = cfg["squeeze_scan"]
    f = _grid_hz(block["grid"])
    w = TWO_PI * f
    t = block["thetas_pi"]
    thetas_pi = np.linspace(float(t["start"]), float(t["stop"]), int(t["points"]))
    name, p = model_and_params(cfg)
    rows = []
    for t_pi in thetas_pi:
        rep = ft.squeezing_report({**p, "theta": math.pi * t_pi}, grid=w, model=name)
        rows.append((t_pi, SHOT_NOISE * 10 ** (rep.min_ratio_dB / 10.0), rep.min_ratio_dB, rep.omega_at_min / TWO_PI))
    best = ft.squeezing_report(p, grid=w, model=name, optimize_theta=True)
    cols = ["theta_pi", "min_psd", "min_dB", "frequency_Hz_at_min"]
    path = write_csv(out / f"{_prefix(cfg)}squeeze_scan.csv", command, cfg, cols, rows)
    summary = {"best_min_dB": best.min_ratio_dB, "best_frequency_Hz": best.omega_at_min / TWO_PI,
               "best_theta_pi": best.theta_at_min / math.pi}
    return [path], summary


def run_hybrid(cfg, out: Path, command="hybrid"):
    b = cfg["hybrid"]
    h = HybridParams(hz(b["gamma_th_s_Hz"]), hz(b["gamma_th_m_Hz"]), hz(b["Gamma_s_Hz"]), hz(b["Gamma_m_Hz"]),
                     hz(b.get("Gamma_ba_s_Hz", 0.0)), hz(b.get("Gamma_ba_m_Hz", 0.0)))
    g = hybrid_coupling(h.Gamma_m, h.Gamma_s)
    cols = ["g_hyb_Hz", "C_hyb", "C_s", "C_m", "bound_16CmCs", "bound_holds"]
    row = (g / TWO_PI, hybrid_cooperativity(h), cooperativity(h.Gamma_s, h.gamma_th_s),
           cooperativity(h.Gamma_m, h.gamma_th_m), hybrid_bound(h), hybrid_bound_holds(h))
    return [write_csv(out / f"{_prefix(cfg)}hybrid.csv", command, cfg, cols, [row])]


def _prefix(cfg):
    return f"{cfg['name']}_" if cfg.get("name") else ""


RUNNERS = {
    "spectrum": run_spectrum,
    "cooling-curve": run_cooling_curve,
    "variance-sweep": run_variance_sweep,
    "simulate": run_simulate,
    "fit": run_fit,
    "squeeze-scan": run_squeeze_scan,
    "hybrid": run_hybrid,
}


# ---------------------------------------------------------------- entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="sqzlight", description="Quantum-noise spectra of light-matter interfaces.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="YAML config, or a CSV produced by this tool")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--quiet", action="store_true")
    return parser


def run(command, config_path, out=".", seed=None):
    """Run one command; returns the written paths (and a summary for squeeze-scan)."""
    loaded = load_config(config_path)
    if loaded.command is not None and loaded.command != command:
        raise ConfigError(f"{config_path} echoes a {loaded.command!r} run, not {command!r}")
    cfg = copy.deepcopy(loaded.data)
    if seed is not None:
        if seed < 0:
            raise ConfigError("--seed must be >= 0")
        cfg["seed"] = seed
    validate(LoadedConfig(cfg, loaded.lines), command)
    out = Path(out)
    kwargs = {"base": Path(config_path).parent} if command == "fit" else {}
    try:
        return RUNNERS[command](cfg, out, command, **kwargs)
    except (ft.FitError, sp.QuadratureError) as exc:
        raise RuntimeError(str(exc)) from exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = run(args.command, args.config, args.out, args.seed)
    except ConfigError as exc:
        print(f"sqzlight {args.command}: configuration error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"sqzlight {args.command}: invalid input: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime failure
        print(f"sqzlight {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    paths, summary = result if isinstance(result, tuple) else (result, None)
    if not args.quiet:
        for p in paths:
            print(p)
        for k, v in (summary or {}).items():
            print(f"{k}={fmt(v)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
