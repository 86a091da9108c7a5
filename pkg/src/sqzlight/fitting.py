"""Weighted nonlinear least-squares fits of the analytic spectral models.

The optimizer is a bounded Levenberg-Marquardt iteration on weighted
residuals ``(data - model) / sigma`` with central finite-difference
Jacobians.  Parameter uncertainties come from the inverse curvature
``(J^T J)^-1`` at the optimum, i.e. the per-bin sigmas are taken as absolute.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import optomech as om
from .core import (
    SHOT_NOISE,
    CouplingConfig,
    DetectionConfig,
    Geometry,
    OscillatorParams,
    Spectrum,
    apply_detection_loss,
    min_quadrature,
    output_spectral_matrix,
    s_output_quadrature,
)


class FitError(ValueError):
    pass


# ---------------------------------------------------------------- models


class SpectralModel:
    """Base class: an ordered parameter list, defaults and an evaluator."""

    name = ""
    params: tuple = ()
    defaults: dict = {}
    rate_key = ""
    linewidth_key = ""

    def evaluate(self, omega, p: dict):
        raise NotImplementedError

    def matrix(self, omega, p: dict):
        """Lossless output spectral matrix ``(s_a, s_b, s_ab)`` or None."""
        return None

    def decoherence(self, p: dict):
        raise NotImplementedError

    def resolve(self, values: dict) -> dict:
        unknown = set(values) - set(self.params)
        if unknown:
            raise FitError(f"unknown parameters for {self.name}: {sorted(unknown)}")
        out = dict(self.defaults)
        out.update(values)
        missing = [k for k in self.params if k not in out]
        if missing:
            raise FitError(f"missing parameters for {self.name}: {missing}")
        return out


class CoreSqueezing(SpectralModel):
    """Single-oscillator output spectrum; ``theta`` counts from the signal-free quadrature."""

    name = "CoreSqueezing"
    params = ("Omega", "gamma", "n_th", "Gamma", "theta", "eta_det")
    defaults = {"n_th": 0.0, "eta_det": 1.0}
    rate_key, linewidth_key = "Gamma", "gamma"
    geometry = Geometry.DRIVE_AMPLITUDE_SIGNAL_PHASE

    def _parts(self, p):
        return OscillatorParams(p[self.params[0]], p[self.params[1]], p["n_th"]), CouplingConfig.from_rate(
            max(p[self.rate_key], 0.0), self.geometry)

    def evaluate(self, omega, p):
        osc, cpl = self._parts(p)
        return s_output_quadrature(omega, osc, cpl, DetectionConfig(p["theta"], p["eta_det"]))

    def matrix(self, omega, p):
        return output_spectral_matrix(omega, *self._parts(p))

    def decoherence(self, p):
        return p[self.linewidth_key] * (p["n_th"] + 0.5)


class SpinSqueezing(CoreSqueezing):
    """Faraday-interface spectrum near the Larmor frequency (same angle convention)."""

    name = "SpinSqueezing"
    params = ("Omega_s", "gamma_s", "n_th", "Gamma_eff", "theta", "eta_det")
    defaults = {"n_th": 0.03, "eta_det": 1.0}
    rate_key, linewidth_key = "Gamma_eff", "gamma_s"
    geometry = Geometry.DRIVE_PHASE_SIGNAL_AMPLITUDE


class OptomechFull(SpectralModel):
    """Cavity-filtered homodyne spectrum; ``theta`` is the angle of ``X_L cos + P_L sin``.

    ``gamma_opt`` is the total optical damping; NaN selects the closed form.
    """

    name = "OptomechFull"
    params = ("Omega_m", "gamma_m", "n_th", "kappa", "delta_c", "eta_in", "Gamma_m", "gamma_opt", "theta", "eta_det")
    defaults = {"eta_in": 1.0, "eta_det": 1.0, "gamma_opt": float("nan"), "delta_c": 0.0}
    rate_key, linewidth_key = "Gamma_m", "gamma_m"

    def _parts(self, p):
        osc = OscillatorParams(p["Omega_m"], p["gamma_m"], p["n_th"])
        cav = om.CavityParams(p["kappa"], p["delta_c"], p["eta_in"])
        g_opt = None if np.isnan(p["gamma_opt"]) else p["gamma_opt"]
        return osc, cav, om.derive_from_rate(max(p["Gamma_m"], 0.0), osc, cav, g_opt)

    def evaluate(self, omega, p):
        osc, cav, d = self._parts(p)
        return om.s_dd_full(omega, p["theta"], osc, cav, d, p["eta_det"])

    def matrix(self, omega, p):
        return om.full_spectral_matrix(omega, *self._parts(p))

    def decoherence(self, p):
        return p["gamma_m"] * p["n_th"]


MODELS = {m.name: m for m in (CoreSqueezing(), SpinSqueezing(), OptomechFull())}


def get_model(model) -> SpectralModel:
    if isinstance(model, SpectralModel):
        return model
    try:
        return MODELS[model]
    except KeyError:
        raise FitError(f"unknown model {model!r}; choose from {sorted(MODELS)}") from None


# ---------------------------------------------------------------- problem / result


@dataclass
class FitProblem:
    """Data, model and the split of parameters into free and fixed.

    ``free`` maps names to ``(initial, lower, upper)`` (bounds may be
    ``None``).  ``weighting`` is ``"data"`` (per-bin ``stderr``, the default
    when available), ``"uniform"``, or ``"model"``: a constant relative error
    (median of ``stderr / values``) times the model evaluated at a first-pass
    optimum, which avoids the bias of weighting by noisy data.
    """

    data: Spectrum
    model: object
    free: dict
    fixed: dict = field(default_factory=dict)
    weighting: str | None = None

    def __post_init__(self):
        self.model = get_model(self.model)
        both = set(self.free) & set(self.fixed)
        if both:
            raise FitError(f"parameters both free and fixed: {sorted(both)}")
        self.fixed = self.model.resolve({**{k: v[0] for k, v in self.free.items()}, **self.fixed})
        for k in self.free:
            self.fixed.pop(k)
        bounds = {}
        for k, spec in self.free.items():
            init, lo, hi = (tuple(spec) + (None, None))[:3]
            lo = -np.inf if lo is None else float(lo)
            hi = np.inf if hi is None else float(hi)
            if not lo <= init <= hi:
                raise FitError(f"initial value of {k} = {init} lies outside [{lo}, {hi}]")
            bounds[k] = (float(init), lo, hi)
        self.free = bounds
        if self.weighting is None:
            self.weighting = "data" if self.data.stderr is not None else "uniform"
        if self.weighting not in ("data", "uniform", "model"):
            raise FitError(f"unknown weighting {self.weighting!r}")
        if self.weighting in ("data", "model") and self.data.stderr is None:
            raise FitError(f"weighting {self.weighting!r} needs per-bin stderr in the data")
        if len(self.data) < len(self.free) + 5:
            raise FitError(f"need at least {len(self.free) + 5} data points for {len(self.free)} free parameters")

    @property
    def names(self):
        return list(self.free)

    def full_params(self, x):
        p = dict(self.fixed)
        p.update(zip(self.names, x))
        return p


@dataclass
class FitResult:
    names: list
    values: dict
    errors: dict
    covariance: np.ndarray
    chi2: float
    dof: int
    iterations: int
    grad_norm: float
    converged: bool
    message: str
    model: str
    fixed: dict
    sigma: np.ndarray | None = None

    @property
    def reduced_chi2(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else float("nan")

    def params(self) -> dict:
        return {**self.fixed, **self.values}


@dataclass
class LMOptions:
    max_iter: int = 200
    ftol: float = 1e-10
    gtol: float = 1e-8
    patience: int = 3
    rel_step: float = 1e-6
    lambda0: float = 1e-3


# ---------------------------------------------------------------- optimizer


def _jacobian(fun, x, lo, hi, rel_step, scale):
    f0 = fun(x)
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        h = rel_step * (abs(x[j]) if x[j] != 0 else scale[j])
        xp, xm = x.copy(), x.copy()
        xp[j] = min(x[j] + h, hi[j])
        xm[j] = max(x[j] - h, lo[j])
        fp, fm = fun(xp), fun(xm)
        # fall back to a one-sided difference where the model rejects one of the points
        if not np.all(np.isfinite(fm)):
            xm, fm = x, f0
        if not np.all(np.isfinite(fp)):
            xp, fp = x, f0
        J[:, j] = (fp - fm) / (xp[j] - xm[j])
    return J


def _active(x, g, lo, hi):
    # descent direction is -g: blocked at a lower bound when g > 0, at an upper bound when g < 0
    return ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))


def levenberg_marquardt(fun, x0, lo, hi, opts: LMOptions | None = None):
    """Minimize ``||fun(x)||^2 / 2`` within box bounds.

    Steps solve ``(J^T J + lam diag(J^T J)) dx = -J^T r`` in variables scaled
    by the initial magnitudes and are projected onto the bounds.  Parameters
    sitting on a bound with the gradient pointing outward are held there for
    the step (active set), and the gradient test uses the remaining ones.
    Stops after ``patience`` consecutive iterations with relative cost
    decrease below ``ftol`` or projected gradient norm below ``gtol``.
    Returns ``(x, J, iterations, grad_norm, converged, message)``.
    """
    opts = opts or LMOptions()
    x = np.asarray(x0, dtype=float).copy()
    scale = np.where(x != 0, np.abs(x), 1.0)
    r = fun(x)
    cost = 0.5 * r @ r
    lam = None
    quiet = 0
    gnorm = np.inf
    J = _jacobian(fun, x, lo, hi, opts.rel_step, scale)
    for it in range(1, opts.max_iter + 1):
        Js = J * scale
        g = Js.T @ r
        free = ~_active(x, g, lo, hi)
        A = (Js.T @ Js)[np.ix_(free, free)]
        diag = np.maximum(np.diag(A), 1e-30)
        if lam is None:
            lam = opts.lambda0
        new_cost, accepted = cost, False
        for _ in range(40):
            step = np.zeros_like(x)
            try:
                step[free] = np.linalg.solve(A + lam * np.diag(diag), -g[free])
            except np.linalg.LinAlgError:
                step[free] = -np.linalg.pinv(A + lam * np.diag(diag)) @ g[free]
            xt = np.clip(x + step * scale, lo, hi)
            rt = fun(xt)
            ct = 0.5 * rt @ rt
            if np.isfinite(ct) and ct < cost:
                accepted = True
                lam = max(lam / 3.0, 1e-15)
                break
            lam *= 4.0
        rel = (cost - ct) / cost if accepted and cost > 0 else 0.0
        if accepted:
            x, r, new_cost = xt, rt, ct
            J = _jacobian(fun, x, lo, hi, opts.rel_step, scale)
        cost = new_cost
        g = (J * scale).T @ r
        gnorm = float(np.linalg.norm(g[~_active(x, g, lo, hi)]))
        quiet = quiet + 1 if (rel < opts.ftol or gnorm < opts.gtol) else 0
        if quiet >= opts.patience:
            return x, J, it, gnorm, True, "converged"
        if cost == 0.0:
            return x, J, it, 0.0, True, "zero residual"
    return x, J, opts.max_iter, gnorm, False, f"no convergence after {opts.max_iter} iterations"


def _covariance(J):
    A = J.T @ J
    try:
        cov = np.linalg.inv(A)
        if not np.all(np.isfinite(cov)) or np.linalg.cond(A) > 1e14:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        warnings.warn("singular curvature matrix; covariance from pseudo-inverse", RuntimeWarning, stacklevel=3)
        cov = np.linalg.pinv(A)
    return 0.5 * (cov + cov.T)


def _solve(problem: FitProblem, sigma, x0, opts):
    omega, y = problem.data.grid, problem.data.values
    model = problem.model

    def fun(x):
        try:
            return (y - model.evaluate(omega, problem.full_params(x))) / sigma
        except ValueError:  # parameters outside the model's domain, e.g. a zero linewidth
            return np.full(y.shape, np.inf)

    lo = np.array([problem.free[k][1] for k in problem.names])
    hi = np.array([problem.free[k][2] for k in problem.names])
    return fun, levenberg_marquardt(fun, x0, lo, hi, opts)


def fit(problem: FitProblem, options: LMOptions | None = None) -> FitResult:
    """Fit the free parameters of ``problem`` and estimate their covariance."""
    opts = options or LMOptions()
    data = problem.data
    x0 = np.array([problem.free[k][0] for k in problem.names])
    if problem.weighting == "uniform":
        sigma = np.ones(len(data))
    else:
        sigma = np.asarray(data.stderr, dtype=float)
        if np.any(sigma <= 0):
            raise FitError("per-bin stderr must be > 0")
    fun, (x, J, it, gnorm, ok, msg) = _solve(problem, sigma, x0, opts)
    if problem.weighting == "model":
        rel = float(np.median(data.stderr / data.values))
        sigma = rel * problem.model.evaluate(data.grid, problem.full_params(x))
        fun, (x, J, it2, gnorm, ok, msg) = _solve(problem, sigma, x, opts)
        it += it2
    r = fun(x)
    cov = _covariance(J)
    names = problem.names
    if not ok:
        warnings.warn(f"fit did not converge: {msg}", RuntimeWarning, stacklevel=2)
    return FitResult(
        names=names,
        values=dict(zip(names, map(float, x))),
        errors=dict(zip(names, map(float, np.sqrt(np.clip(np.diag(cov), 0.0, None))))),
        covariance=cov,
        chi2=float(r @ r),
        dof=len(data) - len(names),
        iterations=it,
        grad_norm=gnorm,
        converged=ok,
        message=msg,
        model=problem.model.name,
        fixed=dict(problem.fixed),
        sigma=sigma,
    )


def fit_scipy(problem: FitProblem):
    """Reference solution with :func:`scipy.optimize.least_squares` (uniform or data weights)."""
    sigma = np.ones(len(problem.data)) if problem.weighting == "uniform" else problem.data.stderr
    x0 = np.array([problem.free[k][0] for k in problem.names])
    lo = [problem.free[k][1] for k in problem.names]
    hi = [problem.free[k][2] for k in problem.names]

    def fun(x):
        return (problem.data.values - problem.model.evaluate(problem.data.grid, problem.full_params(x))) / sigma

    res = optimize.least_squares(fun, x0, bounds=(lo, hi), x_scale="jac", xtol=1e-14, ftol=1e-14, gtol=1e-14)
    return dict(zip(problem.names, res.x))


def decimate_bins(spec: Spectrum, stride=2, lo=None, hi=None) -> Spectrum:
    """Keep every ``stride``-th bin in ``[lo, hi]``; windowed periodogram neighbours are correlated."""
    m = np.ones(len(spec), dtype=bool)
    if lo is not None:
        m &= spec.grid >= lo
    if hi is not None:
        m &= spec.grid <= hi
    idx = np.flatnonzero(m)[::stride]
    err = None if spec.stderr is None else spec.stderr[idx]
    return Spectrum(spec.grid[idx], spec.values[idx], spec.kind, spec.convention, err, dict(spec.meta))


# ---------------------------------------------------------------- helpers


def initial_guess(spec: Spectrum, model, theta, n_th=None, eta_det=1.0, shot_level=SHOT_NOISE):
    """Heuristic start values for resonance, linewidth and rate.

    The resonance is the frequency of the largest deviation from shot noise,
    the linewidth the full width at half of that deviation, and the rate is
    obtained by inverting the on-resonance excess
    ``4 Gamma S_XX(Omega) sin^2(theta)`` for the given ``theta``.
    """
    model = get_model(model)
    if n_th is None:
        n_th = model.defaults.get("n_th", 0.0)
    dev = np.abs(spec.values - shot_level)
    k = int(np.argmax(dev))
    half = dev[k] / 2.0
    left = k
    while left > 0 and dev[left] > half:
        left -= 1
    right = k
    while right < len(spec) - 1 and dev[right] > half:
        right += 1
    width = max(spec.grid[right] - spec.grid[left], spec.grid[1] - spec.grid[0])
    omega0 = spec.grid[k]
    excess = max(spec.values[k] - shot_level, 0.0) / eta_det
    s2 = np.sin(theta) ** 2
    gth = width * (n_th + 0.5)
    # 8 Gamma (gth + Gamma) / width^2 * s2 = excess
    if s2 > 1e-12 and excess > 0:
        rate = 0.5 * (-gth + np.sqrt(gth**2 + excess * width**2 / (2.0 * s2)))
    else:
        rate = 0.0
    keys = model.params
    return {keys[0]: float(omega0), model.linewidth_key: float(width), model.rate_key: float(rate)}


@dataclass(frozen=True)
class SqueezingReport:
    min_ratio_dB: float
    omega_at_min: float
    theta_at_min: float | None = None


def _refine(f, grid, i):
    if 0 < i < len(grid) - 1:
        a, m, b = grid[i - 1], grid[i], grid[i + 1]
        if f(m) < f(a) and f(m) < f(b):
            res = optimize.minimize_scalar(f, bracket=(a, m, b), method="golden", tol=1e-10)
            if a <= res.x <= b and res.fun <= f(m):
                return float(res.x), float(res.fun)
    return float(grid[i]), float(f(grid[i]))


def squeezing_report(source, shot_level=SHOT_NOISE, grid=None, *, model=None, optimize_theta=False):
    """Minimum of ``10 log10(S / shot_level)`` and where it occurs.

    ``source`` is a :class:`Spectrum` (grid minimum, ties resolved to the
    smallest frequency), a callable ``S(omega)`` evaluated on ``grid`` and
    refined by golden-section search, or a parameter dict for ``model``.  With
    ``optimize_theta`` the minimum is also taken over the homodyne angle via
    the smallest eigenvalue of the model's spectral matrix.
    """
    if not shot_level > 0:
        raise ValueError("shot_level must be > 0")
    if isinstance(source, Spectrum):
        i = int(np.argmin(source.values))
        return SqueezingReport(10.0 * np.log10(source.values[i] / shot_level), float(source.grid[i]))
    if grid is None:
        raise ValueError("grid is required for analytic models")
    grid = np.asarray(grid, dtype=float)
    theta_fn = None
    if model is not None:
        m, p = get_model(model), dict(source)
        p = m.resolve({"theta": 0.0, **p}) if optimize_theta else m.resolve(p)
        if optimize_theta:
            def f(w):
                smin, _ = min_quadrature(m.matrix(w, p))
                return apply_detection_loss(smin, p["eta_det"])

            def theta_fn(w):
                return float(np.mod(min_quadrature(m.matrix(w, p))[1], np.pi))
        else:
            def f(w):
                return m.evaluate(w, p)
    else:
        f = source
    vals = np.asarray(f(grid), dtype=float)
    i = int(np.argmin(vals))
    w_min, s_min = _refine(lambda w: float(np.ravel(f(np.float64(w)))[0]), grid, i)
    theta = theta_fn(w_min) if theta_fn else None
    return SqueezingReport(10.0 * np.log10(s_min / shot_level), w_min, theta)


@dataclass(frozen=True)
class CooperativityEstimate:
    value: float
    error: float


def cooperativity_from_fit(result: FitResult, model=None) -> CooperativityEstimate:
    """Quantum cooperativity ``Gamma / gamma_th`` with first-order error propagation.

    Spin and core models use ``gamma_th = gamma (n_th + 1/2)``; the membrane
    model uses ``gamma_th = gamma_m n_th``.  Parameters held fixed carry no
    uncertainty.
    """
    m = get_model(model or result.model)
    p = result.params()
    needed = [m.rate_key, m.linewidth_key, "n_th"]
    missing = [k for k in needed if k not in p]
    if missing:
        raise FitError(f"cannot compute cooperativity, missing parameters: {missing}")
    if not result.converged:
        raise FitError("fit did not converge")

    def coop(vals):
        q = dict(p)
        q.update(vals)
        return q[m.rate_key] / m.decoherence(q)

    base = coop({})
    grad = np.zeros(len(result.names))
    for j, k in enumerate(result.names):
        if k in needed:
            h = 1e-6 * abs(p[k]) if p[k] != 0 else 1e-9
            grad[j] = (coop({k: p[k] + h}) - coop({k: p[k] - h})) / (2 * h)
    err = float(np.sqrt(max(grad @ result.covariance @ grad, 0.0)))
    return CooperativityEstimate(float(base), err)


def cooperativity_with_errors(Gamma, sigma_Gamma, gamma_th, sigma_gamma_th):
    """Propagated ``Gamma / gamma_th`` for uncorrelated inputs."""
    c = Gamma / gamma_th
    return CooperativityEstimate(c, c * float(np.hypot(sigma_Gamma / Gamma, sigma_gamma_th / gamma_th)))


def mahalanobis(result: FitResult, truth: dict, names=None) -> float:
    """Squared Mahalanobis distance of ``truth`` from the estimates (selected names)."""
    names = list(names or result.names)
    idx = [result.names.index(k) for k in names]
    d = np.array([result.values[k] - truth[k] for k in names])
    cov = result.covariance[np.ix_(idx, idx)]
    return float(d @ np.linalg.solve(cov, d))


__all__ = [
    "CooperativityEstimate",
    "CoreSqueezing",
    "FitError",
    "FitProblem",
    "FitResult",
    "LMOptions",
    "MODELS",
    "OptomechFull",
    "SpectralModel",
    "SpinSqueezing",
    "SqueezingReport",
    "cooperativity_from_fit",
    "cooperativity_with_errors",
    "decimate_bins",
    "fit",
    "fit_scipy",
    "get_model",
    "initial_guess",
    "levenberg_marquardt",
    "mahalanobis",
    "squeezing_report",
]
