"""Time-domain stochastic oracle for the single-oscillator light interface.

The linear Langevin system is integrated with its exact discretization. The
state is augmented with the step integrals of the oscillator position and of
the driving light quadrature, so each recorded sample is the average of the
continuous output field over one step (a boxcar-filtered white process with
per-sample variance ``1/(2 dt)`` at the vacuum level).

Everything is simulated in the model frame of :mod:`sqzlight.core`: the
driving (signal-free) quadrature ``u`` and the signal quadrature
``v_out = v_in - g X``.  The detected channel at model angle ``theta`` is
``cos(theta) u_out + sin(theta) v_out``, which reproduces the analytic output
spectrum for either coupling geometry.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, signal
from scipy import fft as sfft

from .core import TWO_PI, CouplingConfig, OscillatorParams, Spectrum, SpectrumKind

CHUNK = 1 << 20  # samples per generation block; fixed so output is bit-reproducible
MAX_STEP_FRACTION = 0.01


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrajectoryConfig:
    """Integration settings.

    ``record`` lists channel names: ``"X"``, ``"P"`` and/or ``("D", theta)``
    tuples (model angles).  ``eta_det`` mixes vacuum into every ``D`` channel.
    """

    dt: float
    duration: float
    n_traj: int = 1
    seed: int = 0
    record: tuple = (("D", np.pi / 2),)
    eta_det: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not self.duration >= self.dt:
            raise ValueError("duration must be at least one step")
        if int(self.n_traj) < 1:
            raise ValueError("n_traj must be >= 1")
        if not 0.0 < self.eta_det <= 1.0:
            raise ValueError("eta_det must lie in (0, 1]")
        object.__setattr__(self, "record", tuple(_normalize_channel(c) for c in self.record))

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


def _normalize_channel(c):
    if isinstance(c, str):
        if c in ("X", "P"):
            return c
        if c.startswith("D"):
            return ("D", float(c[1:].strip("()[]=: ")))
        raise ValueError(f"unknown channel {c!r}")
    kind, theta = c
    if kind != "D":
        raise ValueError(f"unknown channel {c!r}")
    return ("D", float(theta))


def channel_name(c) -> str:
    return c if isinstance(c, str) else f"D({c[1]:.12g})"


@dataclass
class TimeSeries:
    """Recorded channels, each an array of shape ``(n_traj, n_steps)``."""

    dt: float
    channels: dict
    seed: int
    n_traj: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {np.shape(v) for v in self.channels.values()}
        if len(lengths) > 1:
            raise ValueError("all channels must have equal length")

    @property
    def n_samples(self) -> int:
        return next(iter(self.channels.values())).shape[-1]


def check_step(osc: OscillatorParams, dt):
    bound = MAX_STEP_FRACTION * TWO_PI / osc.omega
    if dt > bound * (1.0 + 1e-12):
        raise ValueError(f"dt = {dt:.6g} s exceeds the stability bound 0.01*2pi/Omega = {bound:.6g} s")


def discretize(osc: OscillatorParams, cpl: CouplingConfig, dt):
    """Transition matrix and noise covariance of the augmented state (X, P, I_X, J_u).

    Returned ``Phi`` maps (X, P, I_X=0, J_u=0) at the start of a step to the
    state at its end; ``Q`` is the exact covariance of the accumulated noise
    (Van Loan's block-exponential method).
    """
    W, gam, g = osc.omega, osc.gamma, cpl.g
    A = np.zeros((4, 4))
    A[0, 1] = W
    A[1, 0] = -W
    A[1, 1] = -gam
    A[2, 0] = 1.0
    B = np.array([[0.0, 0.0], [np.sqrt(2.0 * gam * (osc.n_th + 0.5)), -g * np.sqrt(0.5)], [0.0, 0.0], [0.0, np.sqrt(0.5)]])
    D = B @ B.T
    M = np.zeros((8, 8))
    M[:4, :4] = -A
    M[:4, 4:] = D
    M[4:, 4:] = A.T
    E = linalg.expm(M * dt)
    Phi = E[4:, 4:].T
    Q = Phi @ E[:4, 4:]
    Q = 0.5 * (Q + Q.T)
    return Phi, Q


def _noise_factor(Q):
    vals, vecs = np.linalg.eigh(Q)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


class _Trajectory:
    """Chunked generator of the augmented outputs for one trajectory."""

    def __init__(self, osc, cpl, dt, seed, traj_index):
        self.osc, self.cpl, self.dt = osc, cpl, dt
        self.rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(traj_index,)))
        Phi, Q = discretize(osc, cpl, dt)
        self.Phi, self.L = Phi, _noise_factor(Q)
        lam, V = np.linalg.eig(Phi[:2, :2])
        self.lam, self.V, self.Vinv = lam, V, np.linalg.inv(V)
        stat = linalg.solve_discrete_lyapunov(Phi[:2, :2], Q[:2, :2])
        z0 = _noise_factor(0.5 * (stat + stat.T)) @ self.rng.standard_normal(2)
        self.y = self.Vinv @ z0  # modal state
        self.step = 0

    def next(self, n):
        """Return ``X, P`` at step starts and the step averages ``xbar, ubar, vin_bar``."""
        w = self.rng.standard_normal((n, 4)) @ self.L.T
        vin = self.rng.standard_normal(n) * np.sqrt(0.5 / self.dt)
        e = w[:, :2] @ self.Vinv.T
        ys = np.empty((n, 2), dtype=complex)
        for k in range(2):
            out, _ = signal.lfilter([1.0], [1.0, -self.lam[k]], e[:, k], zi=[self.lam[k] * self.y[k]])
            ys[:, k] = out
        starts = np.empty((n, 2), dtype=complex)
        starts[0] = self.y
        starts[1:] = ys[:-1]
        z = (starts @ self.V.T).real
        self.y = ys[-1]
        I = z @ self.Phi[2, :2] + w[:, 2]
        J = w[:, 3]
        if not (np.all(np.isfinite(I)) and np.all(np.isfinite(z))):
            bad = np.flatnonzero(~(np.isfinite(I) & np.all(np.isfinite(z), axis=1)))[0]
            raise SimulationError(f"non-finite sample at step {self.step + bad}")
        self.step += n
        return z[:, 0], z[:, 1], I / self.dt, J / self.dt, vin


def _channels_from_block(blk, cfg, g, rng_vac):
    X, P, xbar, ubar, vin = blk
    vout = vin - g * xbar
    out = {}
    for c in cfg.record:
        if c == "X":
            out[c] = X
        elif c == "P":
            out[c] = P
        else:
            th = c[1]
            d = np.cos(th) * ubar + np.sin(th) * vout
            if cfg.eta_det < 1.0:
                vac = rng_vac.standard_normal(d.size) * np.sqrt(0.5 / cfg.dt)
                d = np.sqrt(cfg.eta_det) * d + np.sqrt(1.0 - cfg.eta_det) * vac
            out[c] = d
    return out


def _vacuum_rng(seed, traj_index):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(traj_index, 1)))


def _blocks(osc, cpl, cfg, traj_index):
    traj = _Trajectory(osc, cpl, cfg.dt, cfg.seed, traj_index)
    rng_vac = _vacuum_rng(cfg.seed, traj_index)
    remaining = cfg.n_steps
    while remaining > 0:
        n = min(CHUNK, remaining)
        yield _channels_from_block(traj.next(n), cfg, cpl.g, rng_vac)
        remaining -= n


def _validate(osc, cfg):
    check_step(osc, cfg.dt)
    if cfg.duration * cfg.n_traj < 1000.0 / osc.gamma:
        warnings.warn("total simulated time is below the recommended 1000/gamma", stacklevel=3)


def simulate(osc: OscillatorParams, cpl: CouplingConfig, cfg: TrajectoryConfig) -> TimeSeries:
    """Simulate ``cfg.n_traj`` independent trajectories and keep every recorded channel."""
    _validate(osc, cfg)
    chans = {channel_name(c): np.empty((cfg.n_traj, cfg.n_steps)) for c in cfg.record}
    for t in range(cfg.n_traj):
        pos = 0
        for blk in _blocks(osc, cpl, cfg, t):
            n = next(iter(blk.values())).size
            for c, v in blk.items():
                chans[channel_name(c)][t, pos:pos + n] = v
            pos += n
    meta = {"omega": osc.omega, "gamma": osc.gamma, "n_th": osc.n_th, "g": cpl.g, "eta_det": cfg.eta_det}
    return TimeSeries(cfg.dt, chans, cfg.seed, cfg.n_traj, meta)


class WelchAccumulator:
    """Streaming averaged periodogram with per-bin scatter.

    Feed samples with :meth:`update` (segments may straddle calls). The PSD is
    the symmetrized two-sided density on non-negative angular frequencies:
    white noise of per-sample variance ``1/(2 dt)`` gives 1/2.
    """

    def __init__(self, dt, segment_length, overlap=0.5, window="hann"):
        if not 0.0 <= overlap < 1.0:
            raise ValueError("overlap must lie in [0, 1)")
        if window not in ("hann", "rectangular", "boxcar"):
            raise ValueError(f"unknown window {window!r}")
        self.dt = dt
        self.nseg = int(segment_length)
        self.hop = max(1, int(round(self.nseg * (1.0 - overlap))))
        self.win = signal.get_window("boxcar" if window == "rectangular" else window, self.nseg)
        self.scale = dt / np.sum(self.win**2)
        norm = np.sum(self.win**2)
        rho = [np.dot(self.win[k:], self.win[:self.nseg - k]) / norm for k in range(self.hop, self.nseg, self.hop)]
        self.overlap_factor = 1.0 + 2.0 * float(np.sum(np.square(rho)))
        self.buf = np.empty(0)
        self.count = 0
        self.sum = np.zeros(self.nseg // 2 + 1)
        self.sumsq = np.zeros_like(self.sum)

    def update(self, x):
        buf = np.concatenate((self.buf, np.asarray(x, dtype=float)))
        n_full = (buf.size - self.nseg) // self.hop + 1 if buf.size >= self.nseg else 0
        for k in range(n_full):
            seg = buf[k * self.hop:k * self.hop + self.nseg]
            p = self.scale * np.abs(sfft.rfft(seg * self.win)) ** 2
            self.sum += p
            self.sumsq += p * p
        self.count += n_full
        self.buf = buf[n_full * self.hop:]

    def reset_stream(self):
        """Drop buffered samples so the next update starts an independent record."""
        self.buf = np.empty(0)

    def result(self, kind=SpectrumKind.LIGHT_QUADRATURE, meta=None) -> Spectrum:
        if self.count < 2:
            raise ValueError(f"need at least 2 segments for a PSD estimate, got {self.count}")
        mean = self.sum / self.count
        var = np.clip(self.sumsq / self.count - mean**2, 0.0, None)
        # neighbouring overlapped segments are correlated; inflate the naive error accordingly
        stderr = np.sqrt(var * self.overlap_factor / (self.count - 1))
        grid = TWO_PI * np.arange(mean.size) / (self.nseg * self.dt)
        m = dict(meta or {})
        m["n_segments"] = self.count
        return Spectrum(grid, mean, kind, stderr=stderr, meta=m)


def estimate_psd(ts: TimeSeries, channel, segment_length, overlap=0.5, window="hann") -> Spectrum:
    """Averaged, windowed periodogram of one channel, pooled over trajectories."""
    name = channel_name(_normalize_channel(channel)) if not isinstance(channel, str) or channel.startswith("D") else channel
    if name not in ts.channels:
        raise KeyError(f"channel {name!r} not recorded; available {sorted(ts.channels)}")
    data = np.atleast_2d(ts.channels[name])
    if segment_length > data.shape[-1]:
        raise ValueError(f"segment_length {segment_length} exceeds the {data.shape[-1]} recorded samples")
    acc = WelchAccumulator(ts.dt, segment_length, overlap, window)
    for row in data:
        acc.reset_stream()
        acc.update(row)
    kind = SpectrumKind.LIGHT_QUADRATURE if name.startswith("D") else SpectrumKind.OSCILLATOR_DISPLACEMENT
    return acc.result(kind, {"channel": name, "seed": ts.seed})


def simulate_psd(osc: OscillatorParams, cpl: CouplingConfig, cfg: TrajectoryConfig, segment_length,
                 overlap=0.5, window="hann", keep_samples=0):
    """Stream the simulation straight into PSD estimators without storing samples.

    Returns ``(spectra, prefix)``: a dict mapping channel names to
    :class:`Spectrum` estimates (equal to :func:`simulate` followed by
    :func:`estimate_psd`) and a :class:`TimeSeries` with the first
    ``keep_samples`` samples of trajectory 0 (None when zero).
    """
    _validate(osc, cfg)
    accs = {c: WelchAccumulator(cfg.dt, segment_length, overlap, window) for c in cfg.record}
    keep = min(int(keep_samples), cfg.n_steps)
    kept = {channel_name(c): [] for c in cfg.record}
    for t in range(cfg.n_traj):
        for acc in accs.values():
            acc.reset_stream()
        stored = 0
        for blk in _blocks(osc, cpl, cfg, t):
            for c, v in blk.items():
                accs[c].update(v)
                if t == 0 and stored < keep:
                    kept[channel_name(c)].append(v[: keep - stored])
            stored += next(iter(blk.values())).size
    out = {}
    for c, acc in accs.items():
        kind = SpectrumKind.LIGHT_QUADRATURE if c not in ("X", "P") else SpectrumKind.OSCILLATOR_DISPLACEMENT
        out[channel_name(c)] = acc.result(kind, {"channel": channel_name(c), "seed": cfg.seed})
    prefix = None
    if keep:
        prefix = TimeSeries(cfg.dt, {k: np.concatenate(v)[None, :] for k, v in kept.items()}, cfg.seed, 1)
    return out, prefix


def sample_variance(ts: TimeSeries, channel, n_blocks=10):
    """Mean square of a zero-mean channel with a standard error from block scatter.

    Each trajectory is cut into ``n_blocks`` contiguous blocks; blocks should
    be long compared to the correlation time for the error to be meaningful.
    """
    data = np.atleast_2d(ts.channels[channel])
    m = data.shape[-1] // n_blocks * n_blocks
    v = np.mean(data[:, :m].reshape(-1, m // n_blocks) ** 2, axis=-1)
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def write_timeseries_csv(ts: TimeSeries, path, header_lines=()):
    """Write trajectory 0 of every channel; header records dt, channels and seed."""
    names = list(ts.channels)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(f"# dt={ts.dt!r}\n# seed={ts.seed}\n# channels={','.join(names)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", *names])
        cols = [ts.channels[n][0] for n in names]
        for i in range(ts.n_samples):
            w.writerow([repr(i * ts.dt), *(repr(float(c[i])) for c in cols)])


__all__ = [
    "SimulationError",
    "TimeSeries",
    "TrajectoryConfig",
    "WelchAccumulator",
    "channel_name",
    "check_step",
    "discretize",
    "estimate_psd",
    "sample_variance",
    "simulate",
    "simulate_psd",
    "write_timeseries_csv",
]
