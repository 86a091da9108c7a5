"""Configuration files, unit conversion and CSV input/output.

Configs are YAML with a strict schema: unknown keys are rejected and every
dimensional key carries its unit as a suffix (``_Hz``, ``_uW``, ``_mW``,
``_K``, ``_um``, ``_nm``, ``_s``, ``_pi`` for multiples of pi, ``_rad``).
Frequencies and rates given in Hz are converted to rad/s on ingest.

Every CSV written here starts with ``#`` comment lines holding the package
version, the PSD convention, the command and a canonical JSON echo of the
config.  Passing such a CSV back as ``--config`` reruns the same command and
reproduces the file byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .core import CONVENTION, TWO_PI, Spectrum, SpectrumKind


class ConfigError(ValueError):
    """Schema or value violation in a configuration; maps to exit code 2."""


# ---------------------------------------------------------------- schema

NUM, INT, STR, BOOL, LIST, MAP = "number", "integer", "string", "boolean", "list", "mapping"


@dataclass(frozen=True)
class Field:
    kind: str
    required: bool = False
    positive: bool = False
    nonneg: bool = False
    choices: tuple = ()
    schema: dict | None = None  # for nested mappings
    item: str | None = None  # element kind for lists


def F(kind, **kw):
    return Field(kind, **kw)


DETECTION = {
    "theta_pi": F(NUM),
    "theta_rad": F(NUM),
    "eta_det": F(NUM, positive=True),
}

GRID = {
    "start_Hz": F(NUM, required=True, positive=True),
    "stop_Hz": F(NUM, required=True, positive=True),
    "points": F(INT, required=True, positive=True),
}

CLOUD = {
    "cloud_radial_waist_um": F(NUM, required=True, positive=True),
    "cloud_axial_sigma_um": F(NUM, required=True, positive=True),
    "beam_waist_um": F(NUM, required=True, positive=True),
    "wavelength_nm": F(NUM, required=True, positive=True),
}

PARAMS = {
    "generic": {
        "omega_Hz": F(NUM, required=True, positive=True),
        "gamma_Hz": F(NUM, required=True, positive=True),
        "n_th": F(NUM, nonneg=True),
        "temperature_K": F(NUM, nonneg=True),
        "Gamma_Hz": F(NUM, nonneg=True),
        "geometry": F(STR, choices=("drive_amplitude_signal_phase", "drive_phase_signal_amplitude")),
    },
    "spin": {
        "larmor_Hz": F(NUM, required=True, positive=True),
        "gamma_s_Hz": F(NUM, required=True, positive=True),
        "n_th": F(NUM, nonneg=True),
        "Gamma_eff_Hz": F(NUM, nonneg=True),
        "n_atoms": F(NUM, positive=True),
        "alpha_1": F(NUM, positive=True),
        "photon_flux_per_s": F(NUM, positive=True),
        "polarization": F(NUM, positive=True),
        "eta_sq_mean": F(NUM, positive=True),
        "cloud": F(MAP, schema=CLOUD),
    },
    "optomech": {
        "omega_m_Hz": F(NUM, required=True, positive=True),
        "Q_m": F(NUM, positive=True),
        "gamma_m_Hz": F(NUM, positive=True),
        "temperature_K": F(NUM, nonneg=True),
        "n_th": F(NUM, nonneg=True),
        "kappa_Hz": F(NUM, required=True, positive=True),
        "delta_c_Hz": F(NUM),  # signed detuning, red < 0
        "eta_in": F(NUM, positive=True),
        "g0_Hz": F(NUM, positive=True),
        "wavelength_nm": F(NUM, positive=True),
        "Gamma_m_Hz": F(NUM, nonneg=True),
        "n_c": F(NUM, nonneg=True),
        "power_uW": F(NUM, nonneg=True),
        "power_mW": F(NUM, nonneg=True),
        "calibration": F(NUM, positive=True),
        "unit_cooperativity_power_uW": F(NUM, positive=True),
        "gamma_opt_Hz": F(NUM),
    },
}

TASKS = {
    "spectrum": {"grid": F(MAP, required=True, schema=GRID)},
    "cooling_curve": {
        "powers_uW": F(LIST, item=NUM),
        "start_uW": F(NUM, nonneg=True),
        "stop_uW": F(NUM, positive=True),
        "points": F(INT, positive=True),
        "spacing": F(STR, choices=("log", "linear")),
        "include_zero": F(BOOL),
    },
    "variance_sweep": {
        "bandwidth_Hz": F(NUM, required=True, positive=True),
        "eta_det": F(NUM, positive=True),
        "rates_Hz": F(LIST, item=NUM),
        "n_atoms": F(LIST, item=NUM),
    },
    "simulate": {
        "duration_s": F(NUM, positive=True),
        "duration_per_gamma": F(NUM, positive=True),
        "dt_s": F(NUM, positive=True),
        "n_traj": F(INT, positive=True),
        "thetas_pi": F(LIST, item=NUM),
        "segment_length": F(INT, positive=True),
        "overlap": F(NUM, nonneg=True),
        "window": F(STR, choices=("hann", "rectangular")),
        "band_Hz": F(LIST, item=NUM),
        "timeseries_samples": F(INT, nonneg=True),
    },
    "fit": {
        "input": F(STR, required=True),
        "model": F(STR, required=True, choices=("CoreSqueezing", "SpinSqueezing", "OptomechFull")),
        "free": F(MAP, required=True),
        "fixed": F(MAP),
        "range_Hz": F(LIST, item=NUM),
        "stride": F(INT, positive=True),
        "weighting": F(STR, choices=("data", "uniform", "model")),
    },
    "squeeze_scan": {
        "grid": F(MAP, required=True, schema=GRID),
        "thetas_pi": F(MAP, required=True, schema={
            "start": F(NUM, required=True),
            "stop": F(NUM, required=True),
            "points": F(INT, required=True, positive=True),
        }),
    },
    "hybrid": {
        "Gamma_s_Hz": F(NUM, required=True, nonneg=True),
        "Gamma_m_Hz": F(NUM, required=True, nonneg=True),
        "gamma_th_s_Hz": F(NUM, required=True, positive=True),
        "gamma_th_m_Hz": F(NUM, required=True, positive=True),
        "Gamma_ba_s_Hz": F(NUM, nonneg=True),
        "Gamma_ba_m_Hz": F(NUM, nonneg=True),
    },
}

TOP = {
    "name": F(STR),
    "system": F(STR, choices=tuple(PARAMS)),
    "params": F(MAP),
    "detection": F(MAP, schema=DETECTION),
    "seed": F(INT, nonneg=True),
    **{k: F(MAP, schema=v) for k, v in TASKS.items()},
}

COMMAND_BLOCKS = {
    "spectrum": "spectrum",
    "cooling-curve": "cooling_curve",
    "variance-sweep": "variance_sweep",
    "simulate": "simulate",
    "fit": "fit",
    "squeeze-scan": "squeeze_scan",
    "hybrid": "hybrid",
}


def _where(path, lines):
    line = lines.get(path)
    loc = ".".join(path) or "<root>"
    return f"{loc} (line {line})" if line else loc


def _check_value(value, f: Field, path, lines):
    where = _where(path, lines)
    if f.kind == NUM:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"{where}: must be finite")
        if f.positive and not value > 0:
            raise ConfigError(f"{where}: must be > 0, got {value!r}")
        if f.nonneg and value < 0:
            raise ConfigError(f"{where}: must be >= 0, got {value!r}")
    elif f.kind == INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        if f.positive and value <= 0:
            raise ConfigError(f"{where}: must be > 0, got {value!r}")
        if f.nonneg and value < 0:
            raise ConfigError(f"{where}: must be >= 0, got {value!r}")
    elif f.kind == STR:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
    elif f.kind == BOOL:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
    elif f.kind == LIST:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        for i, v in enumerate(value):
            _check_value(v, Field(f.item or NUM), path + (str(i),), lines)
    elif f.kind == MAP:
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a mapping, got {value!r}")
        if f.schema is not None:
            check_mapping(value, f.schema, path, lines)
    if f.choices and value not in f.choices:
        raise ConfigError(f"{where}: must be one of {list(f.choices)}, got {value!r}")


def check_mapping(data: dict, schema: dict, path=(), lines=None):
    """Validate ``data`` against ``schema``; unknown and missing keys are errors."""
    lines = lines or {}
    for key in data:
        if key not in schema:
            raise ConfigError(f"{_where(path + (key,), lines)}: unknown key; allowed keys are {sorted(schema)}")
    for key, f in schema.items():
        if key not in data:
            if f.required:
                raise ConfigError(f"{_where(path, lines)}: missing required key {key!r}")
            continue
        _check_value(data[key], f, path + (key,), lines)


# ---------------------------------------------------------------- loading


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e6``-style floats (YAML 1.2 behaviour)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def _line_map(text):
    """Map key paths to 1-based line numbers of a YAML document."""
    out = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (str(k.value),)
                out[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                p = path + (str(i),)
                out[p] = v.start_mark.line + 1
                walk(v, p)

    try:
        root = yaml.compose(text, Loader=_Loader)
    except yaml.YAMLError:
        return out
    if root is not None:
        walk(root, ())
    return out


@dataclass
class LoadedConfig:
    data: dict
    lines: dict
    command: str | None = None  # set when loaded from a CSV echo


def read_header(path):
    """Comment-header entries ``key: value`` of a CSV written by this package."""
    header = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if ":" in body:
                k, v = body.split(":", 1)
                header[k.strip()] = v.strip()
    return header


def load_config(path) -> LoadedConfig:
    """Read a YAML config, or the config echo stored in a CSV header."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if text.startswith("#") and path.suffix.lower() == ".csv":
        header = read_header(path)
        if "config" not in header:
            raise ConfigError(f"{path}: CSV header carries no config echo")
        try:
            data = json.loads(header["config"])
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed config echo: {exc}") from None
        return LoadedConfig(data, {}, header.get("command"))
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML syntax error: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return LoadedConfig(data, _line_map(text))


def validate(cfg: LoadedConfig, command: str) -> dict:
    """Check the whole config and the presence of the block ``command`` needs."""
    data, lines = cfg.data, cfg.lines
    check_mapping(data, TOP, (), lines)
    block = COMMAND_BLOCKS[command]
    if block not in data:
        raise ConfigError(f"config has no {block!r} block required by the {command} command")
    if command not in ("hybrid", "fit"):
        if "system" not in data or "params" not in data:
            raise ConfigError(f"the {command} command needs 'system' and 'params'")
    if "system" in data:
        check_mapping(data.get("params", {}), PARAMS[data["system"]], ("params",), lines)
        _check_exclusive(data, lines)
    det = data.get("detection", {})
    if "theta_pi" in det and "theta_rad" in det:
        raise ConfigError(f"{_where(('detection',), lines)}: give theta_pi or theta_rad, not both")
    if "eta_det" in det and det["eta_det"] > 1:
        raise ConfigError(f"{_where(('detection', 'eta_det'), lines)}: must lie in (0, 1]")
    return data


def _check_exclusive(data, lines):
    p = data["params"]
    system = data["system"]

    def at_most_one(keys, required=False):
        given = [k for k in keys if k in p]
        if len(given) > 1:
            raise ConfigError(f"{_where(('params',), lines)}: give only one of {keys}, got {given}")
        if required and not given:
            raise ConfigError(f"{_where(('params',), lines)}: one of {keys} is required")

    for key in ("eta_in", "polarization"):
        if key in p and p[key] > 1:
            raise ConfigError(f"{_where(('params', key), lines)}: must lie in (0, 1]")
    if system == "generic":
        at_most_one(["n_th", "temperature_K"])
    elif system == "spin":
        at_most_one(["eta_sq_mean", "cloud"])
        if "Gamma_eff_Hz" not in p:
            missing = [k for k in ("n_atoms", "alpha_1", "photon_flux_per_s") if k not in p]
            if missing and "variance_sweep" not in data:
                raise ConfigError(f"{_where(('params',), lines)}: give Gamma_eff_Hz or the rate chain (missing {missing})")
        elif any(k in p for k in ("alpha_1", "photon_flux_per_s")):
            raise ConfigError(f"{_where(('params',), lines)}: Gamma_eff_Hz excludes alpha_1/photon_flux_per_s")
    elif system == "optomech":
        at_most_one(["Q_m", "gamma_m_Hz"], required=True)
        at_most_one(["n_th", "temperature_K"], required=True)
        at_most_one(["Gamma_m_Hz", "n_c", "power_uW", "power_mW"])
        at_most_one(["calibration", "unit_cooperativity_power_uW"])


# ---------------------------------------------------------------- units


def hz(value):
    """Config Hz value to rad/s."""
    return TWO_PI * float(value)


def theta_from(det: dict, default=0.0):
    if "theta_pi" in det:
        return math.pi * float(det["theta_pi"])
    if "theta_rad" in det:
        return float(det["theta_rad"])
    return default


def convert_param(name, value):
    """Strip a unit suffix and convert to internal units; returns ``(name, value)``."""
    if name.endswith("_Hz"):
        return name[:-3], TWO_PI * float(value)
    if name.endswith("_pi"):
        return name[:-3], math.pi * float(value)
    if name.endswith("_rad"):
        return name[:-4], float(value)
    return name, float(value)


def param_to_user(name, value, unit):
    if unit == "Hz":
        return f"{name}_Hz", value / TWO_PI
    if unit == "pi":
        return f"{name}_pi", value / math.pi
    return name, value


# ---------------------------------------------------------------- output


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False)


def header_lines(command, config):
    return [
        f"sqzlight: {__version__}",
        f"convention: {CONVENTION}",
        f"command: {command}",
        f"config: {canonical_json(config)}",
    ]


def fmt(x) -> str:
    """Shortest round-trip decimal representation (no thousands separators)."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def atomic_write(path, text: str):
    """Write ``text`` to ``path`` through a temporary file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, columns: list, rows) -> str:
    buf = _io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, command, config, columns, rows):
    atomic_write(path, csv_text(header_lines(command, config), columns, rows))
    return Path(path)


def write_report(path, items: dict):
    """Flat ``key=value`` report, one entry per line in insertion order."""
    text = "".join(f"{k}={fmt(v) if isinstance(v, (int, float, np.floating, np.integer)) else v}\n" for k, v in items.items())
    atomic_write(path, text)
    return Path(path)


def read_report(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def read_spectrum_csv(path) -> Spectrum:
    """Load a spectrum CSV (``frequency_Hz,psd[,psd_stderr,...]``); the convention tag must match."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"spectrum file not found: {path}")
    header = read_header(path)
    tag = header.get("convention")
    if tag != CONVENTION:
        raise ConfigError(f"{path}: PSD convention {tag!r} does not match {CONVENTION!r}")
    with open(path, encoding="utf-8") as fh:
        body = [line for line in fh if not line.startswith("#")]
    rows = list(csv.reader(body))
    if not rows or "frequency_Hz" not in rows[0] or "psd" not in rows[0]:
        raise ConfigError(f"{path}: missing frequency_Hz/psd columns")
    cols = rows[0]
    arr = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    f = arr[:, cols.index("frequency_Hz")]
    psd = arr[:, cols.index("psd")]
    err = arr[:, cols.index("psd_stderr")] if "psd_stderr" in cols else None
    try:
        return Spectrum(TWO_PI * f, psd, SpectrumKind.LIGHT_QUADRATURE, stderr=err, meta={"frequency_Hz": f})
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


__all__ = [
    "COMMAND_BLOCKS",
    "ConfigError",
    "LoadedConfig",
    "atomic_write",
    "canonical_json",
    "check_mapping",
    "convert_param",
    "csv_text",
    "fmt",
    "header_lines",
    "hz",
    "load_config",
    "read_header",
    "read_report",
    "read_spectrum_csv",
    "sha256_file",
    "theta_from",
    "validate",
    "write_csv",
    "write_report",
]
