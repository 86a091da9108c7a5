import warnings

import numpy as np
import pytest
from scipy import linalg

from sqzlight.core import (
    TWO_PI,
    CouplingConfig,
    DetectionConfig,
    OscillatorParams,
    apply_detection_loss,
    s_output_quadrature,
)
from sqzlight.oracle import (
    TrajectoryConfig,
    WelchAccumulator,
    check_step,
    discretize,
    estimate_psd,
    sample_variance,
    simulate,
    simulate_psd,
    write_timeseries_csv,
)

pytestmark = pytest.mark.filterwarnings("ignore:total simulated time:UserWarning")

# scaled spin-like point: Omega/gamma = 30, rate and occupation of the squeezing point
OSC = OscillatorParams(TWO_PI * 1e3, TWO_PI * 1e3 / 30, 0.03)
CPL = CouplingConfig.from_rate(OSC.gamma * 812 / 1410)
DT = 0.01 * TWO_PI / OSC.omega


def band(spec, osc=OSC, half=10.0):
    return (spec.grid > osc.omega - half * osc.gamma) & (spec.grid < osc.omega + half * osc.gamma)


def test_discretize_transition_is_matrix_exponential():
    Phi, Q = discretize(OSC, CPL, DT)
    A = np.array([[0, OSC.omega], [-OSC.omega, -OSC.gamma]])
    assert np.allclose(Phi[:2, :2], linalg.expm(A * DT), rtol=1e-12, atol=1e-14)
    assert np.all(np.linalg.eigvalsh(Q) > -1e-15)


def test_discretize_noise_small_step_limit():
    dt = 1e-4 * TWO_PI / OSC.omega
    _, Q = discretize(OSC, CPL, dt)
    # to leading order in dt the momentum noise is 2 gamma_th dt + g^2 dt / 2
    assert Q[1, 1] == pytest.approx((2 * OSC.gamma_th + CPL.g**2 / 2) * dt, rel=1e-3)
    assert Q[3, 3] == pytest.approx(0.5 * dt, rel=1e-12)


def test_step_bound_enforced():
    check_step(OSC, DT)
    with pytest.raises(ValueError, match="stability bound"):
        check_step(OSC, 1.1 * DT)
    with pytest.raises(ValueError):
        simulate(OSC, CPL, TrajectoryConfig(2 * DT, 2000 * DT))


def test_same_seed_same_output_and_seed_sensitivity():
    cfg = TrajectoryConfig(DT, 5000 * DT, seed=11, record=("X", ("D", 0.6)))
    a = simulate(OSC, CPL, cfg)
    b = simulate(OSC, CPL, cfg)
    for k in a.channels:
        assert np.array_equal(a.channels[k], b.channels[k])
    c = simulate(OSC, CPL, TrajectoryConfig(DT, 5000 * DT, seed=12, record=("X", ("D", 0.6))))
    assert not np.array_equal(a.channels["X"], c.channels["X"])


def test_trajectories_do_not_depend_on_batch_size():
    one = simulate(OSC, CPL, TrajectoryConfig(DT, 3000 * DT, n_traj=1, seed=5, record=("X",)))
    three = simulate(OSC, CPL, TrajectoryConfig(DT, 3000 * DT, n_traj=3, seed=5, record=("X",)))
    assert np.array_equal(one.channels["X"][0], three.channels["X"][0])
    assert not np.array_equal(three.channels["X"][1], three.channels["X"][2])


def test_streaming_psd_equals_stored_psd():
    cfg = TrajectoryConfig(DT, 40000 * DT, n_traj=2, seed=3, record=(("D", 0.19 * np.pi),))
    ts = simulate(OSC, CPL, cfg)
    ref = estimate_psd(ts, ("D", 0.19 * np.pi), 4096)
    spectra, prefix = simulate_psd(OSC, CPL, cfg, 4096, keep_samples=100)
    got = spectra["D(%.12g)" % (0.19 * np.pi)]
    assert np.allclose(got.values, ref.values, rtol=1e-12)
    assert np.array_equal(prefix.channels["D(%.12g)" % (0.19 * np.pi)][0], ts.channels["D(%.12g)" % (0.19 * np.pi)][0, :100])


def test_stationary_oscillator_variance():
    # free oscillator: <X^2> = n_th + 1/2 from the first sample on
    osc = OscillatorParams(TWO_PI * 1e3, TWO_PI * 1e3 / 30, 5.0)
    cfg = TrajectoryConfig(0.01 * TWO_PI / osc.omega, 2e3 / osc.gamma, n_traj=8, seed=1, record=("X",))
    ts = simulate(osc, CouplingConfig(0.0), cfg)
    v, err = sample_variance(ts, "X", n_blocks=10)
    assert abs(v - 5.5) < 4 * err
    assert err < 0.05 * 5.5


def test_signal_free_channel_is_vacuum():
    cfg = TrajectoryConfig(DT, 2e3 / OSC.gamma, seed=2, record=(("D", 0.0),))
    spec, _ = simulate_psd(OSC, CPL, cfg, 8192)
    s = spec["D(0)"]
    m = band(s)
    assert np.mean(s.values[m]) == pytest.approx(0.5, rel=0.01)


def test_welch_normalization_white_noise():
    rng = np.random.default_rng(0)
    dt = 1e-3
    x = rng.standard_normal(1 << 18) * np.sqrt(0.5 / dt)
    for win in ("hann", "rectangular"):
        acc = WelchAccumulator(dt, 4096, window=win)
        acc.update(x[:100000])
        acc.update(x[100000:])
        s = acc.result()
        assert np.mean(s.values[1:-1]) == pytest.approx(0.5, rel=0.01)
        # standard errors describe the scatter of the averaged bins
        z = (s.values[1:-1] - 0.5) / s.stderr[1:-1]
        assert np.std(z) == pytest.approx(1.0, rel=0.15)


def test_welch_grid_and_errors():
    acc = WelchAccumulator(0.01, 128)
    with pytest.raises(ValueError, match="2 segments"):
        acc.result()
    acc.update(np.zeros(1000))
    s = acc.result()
    assert s.grid[1] == pytest.approx(TWO_PI / (128 * 0.01))
    with pytest.raises(ValueError):
        WelchAccumulator(0.01, 128, overlap=1.0)
    with pytest.raises(ValueError):
        WelchAccumulator(0.01, 128, window="kaiser")


def test_short_run_warns():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        simulate(OSC, CPL, TrajectoryConfig(DT, 10 / OSC.gamma, seed=0))
    assert any("1000/gamma" in str(x.message) for x in w)


def test_detection_loss_in_time_domain_matches_loss_map():
    th = 0.19 * np.pi
    cfg = TrajectoryConfig(DT, 1e4 / OSC.gamma, seed=4, record=(("D", th),), eta_det=0.5)
    spec, _ = simulate_psd(OSC, CPL, cfg, 16384)
    s = spec["D(%.12g)" % th]
    m = band(s)
    model = apply_detection_loss(s_output_quadrature(s.grid[m], OSC, CPL, DetectionConfig(th)), 0.5)
    rms = np.sqrt(np.mean((s.values[m] / model - 1) ** 2))
    assert rms < 0.05


def test_psd_matches_analytic_spectrum_at_scaled_point():
    th = 0.19 * np.pi
    cfg = TrajectoryConfig(DT, 2e4 / OSC.gamma, seed=0, record=(("D", th),))
    spec, _ = simulate_psd(OSC, CPL, cfg, 16384)
    s = spec["D(%.12g)" % th]
    m = band(s)
    model = s_output_quadrature(s.grid[m], OSC, CPL, DetectionConfig(th))
    r = s.values[m] / model - 1
    assert np.sqrt(np.mean(r**2)) < 0.05
    assert s.values[m].min() < 0.5  # squeezing is visible in the simulated record


def test_timeseries_csv(tmp_path):
    ts = simulate(OSC, CPL, TrajectoryConfig(DT, 50 * DT, seed=9, record=("X", ("D", 1.0))))
    p = tmp_path / "ts.csv"
    write_timeseries_csv(ts, p, ["convention: two-sided symmetrized"])
    lines = p.read_text().splitlines()
    assert lines[0] == "# convention: two-sided symmetrized"
    assert "t_s,X,D(1)" in lines
    body = lines[lines.index("t_s,X,D(1)") + 1:]
    assert len(body) == 50
    assert float(body[3].split(",")[1]) == ts.channels["X"][0, 3]
