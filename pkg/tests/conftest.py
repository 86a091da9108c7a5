import numpy as np
import pytest

from sqzlight.core import TWO_PI, CouplingConfig, DetectionConfig, OscillatorParams


@pytest.fixture
def spin_point():
    """Spin-ensemble squeezing point (rates in rad/s)."""
    return dict(Omega=TWO_PI * 1.958e6, gamma=TWO_PI * 1.41e3, n_th=0.03, Gamma=TWO_PI * 812.0,
                theta=0.19 * np.pi, eta_det=0.83)


@pytest.fixture
def generic():
    osc = OscillatorParams(TWO_PI * 1e6, TWO_PI * 1e3, 2.0)
    cpl = CouplingConfig.from_rate(TWO_PI * 700.0)
    return osc, cpl


def grid_around(osc, span=20.0, n=801):
    return np.linspace(osc.omega - span * osc.gamma, osc.omega + span * osc.gamma, n)


def det_at(theta, eta=1.0):
    return DetectionConfig(theta, eta)


_LINES = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_LINES] = {}


@pytest.fixture
def acceptance_log(request, capsys):
    """Record a criterion result line; it is printed now and again in the summary."""
    def log(n, line):
        request.config.stash[_LINES][n] = line
        with capsys.disabled():
            print("\n" + line)
    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
