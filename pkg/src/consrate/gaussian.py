"""Closed-form Vasicek analytics.

Joint Gaussian law of (r_t, h_t) with h_t the running rate integral, the
weighted transition kernel and semigroup P_t phi(r) = E^r[phi(r_t) e^{alpha h_t}],
the integral supersolution N, and the feasibility thresholds gamma_1/gamma_2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleProblem
from .grids import GridFunction
from .models import Constant, InvariantInterval, ProblemSpec, Vasicek

SQRT_TWO_PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class JointMoments:
    """First and second moments of (r_t, h_t) started at r, h_0 = 0."""

    mean_r: np.ndarray
    var_r: np.ndarray
    mean_h: np.ndarray
    var_h: np.ndarray
    cov_rh: np.ndarray


def _var_h_shape(x):
    """(b^3/sigma^2) var_h as a function of x = b t, cancellation-safe."""
    x = np.asarray(x, dtype=float)
    exact = x - 1.5 + 2.0 * np.exp(-x) - 0.5 * np.exp(-2.0 * x)
    series = x**3 / 3.0 - x**4 / 4.0 + 7.0 * x**5 / 60.0 - x**6 / 24.0
    return np.where(x < 1e-2, series, exact)


def _cov_shape(x):
    """(b^2/sigma^2) cov_rh as a function of x = b t, cancellation-safe."""
    x = np.asarray(x, dtype=float)
    exact = -np.expm1(-x) + 0.5 * np.expm1(-2.0 * x)
    series = x**2 / 2.0 - x**3 / 2.0 + 7.0 * x**4 / 24.0 - x**5 / 8.0
    return np.where(x < 1e-2, series, exact)


def _int_decay_shape(x):
    """b*(t - (1 - e^{-bt})/b) as a function of x = b t, cancellation-safe."""
    x = np.asarray(x, dtype=float)
    exact = x + np.expm1(-x)
    series = x**2 / 2.0 - x**3 / 6.0 + x**4 / 24.0
    return np.where(x < 1e-4, series, exact)


def ou_moments(model: Vasicek, r, t) -> JointMoments:
    """Exact joint moments of (r_t, h_t) for the Vasicek rate started at r.

    The covariance between r_t and h_t is not printed in the source law; it
    follows from the Ito isometry of the two stochastic integrals and is
    cross-validated against a path-simulation oracle in the test suite.
    """
    if not isinstance(model, Vasicek):
        raise ValueError("ou_moments requires the Vasicek model")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    r = np.asarray(r, dtype=float)
    a, b, sig = model.a, model.b, model.sigma
    x = b * t
    e1 = np.exp(-x)
    one_m_e1 = -np.expm1(-x)
    mean_r = r * e1 + (a / b) * one_m_e1
    var_r = sig**2 * -np.expm1(-2.0 * x) / (2.0 * b)
    mean_h = r * one_m_e1 / b + (a / b**2) * _int_decay_shape(x)
    var_h = (sig**2 / b**3) * _var_h_shape(x)
    cov_rh = (sig**2 / b**2) * _cov_shape(x)
    return JointMoments(
        mean_r=mean_r,
        var_r=var_r * np.ones_like(mean_r),
        mean_h=mean_h,
        var_h=var_h * np.ones_like(mean_h),
        cov_rh=cov_rh * np.ones_like(mean_h),
    )


def exp_h_moment(spec: ProblemSpec, r, t):
    """E^r e^{alpha h_t} = exp(alpha mean_h + alpha^2 var_h / 2)."""
    mom = ou_moments(spec.model, r, t)
    return np.exp(spec.alpha * mom.mean_h + 0.5 * spec.alpha**2 * mom.var_h)


def fk_kernel_weight(spec: ProblemSpec, t, r, y):
    """Weighted transition kernel w(t, r, y).

    w is the Gaussian transition density of r_t times the conditional
    exponential moment of h_t given r_t = y, so that
    int phi(y) w(t, r, y) dy = E^r[phi(r_t) e^{alpha h_t}].
    The kernel is singular at t = 0 and rejects t <= 0.
    """
    if not np.all(np.asarray(t) > 0):
        raise ValueError("the kernel requires t > 0")
    mom = ou_moments(spec.model, r, t)
    y = np.asarray(y, dtype=float)
    dev = y - mom.mean_r
    beta = mom.cov_rh / mom.var_r
    mu_cond = mom.mean_h + beta * dev
    var_cond = np.maximum(mom.var_h - mom.cov_rh**2 / mom.var_r, 0.0)
    density = np.exp(-0.5 * dev**2 / mom.var_r) / np.sqrt(mom.var_r) / SQRT_TWO_PI
    return density * np.exp(spec.alpha * mu_cond + 0.5 * spec.alpha**2 * var_cond)


def envelope_rate(spec: ProblemSpec) -> float:
    """Growth rate alpha/b of the weighted function class for the Vasicek model."""
    if not isinstance(spec.model, Vasicek):
        raise ValueError("the exponential envelope is defined for the Vasicek model")
    return spec.alpha / spec.model.b


def extend_with_envelope(phi: GridFunction, rate: float, y):
    """Evaluate phi at y, continuing beyond the grid with the frozen edge value
    scaled by the envelope e^{rate |y|}."""
    y = np.asarray(y, dtype=float)
    vals = phi(y)
    lo, hi = phi.r_min, phi.r_max
    below = y < lo
    above = y > hi
    if np.any(below):
        vals = np.where(below, phi.values[0] * np.exp(rate * (np.abs(y) - abs(lo))), vals)
    if np.any(above):
        vals = np.where(above, phi.values[-1] * np.exp(rate * (np.abs(y) - abs(hi))), vals)
    return vals


def envelope_norm(spec: ProblemSpec, phi: GridFunction) -> float:
    """sup over the grid of |phi(r)| e^{-(alpha/b)|r|}."""
    rate = envelope_rate(spec)
    return float(np.max(np.abs(phi.values) * np.exp(-rate * np.abs(phi.nodes))))


def semigroup_apply(
    spec: ProblemSpec,
    phi: GridFunction,
    t: float,
    *,
    dy: float | None = None,
    pad_sigmas: float = 6.0,
) -> GridFunction:
    """Apply the weighted semigroup P_t to a grid function by trapezoid in y.

    Beyond the grid, phi is continued by its edge value times the exponential
    envelope frozen at the edge.
    """
    if t <= 0:
        raise ValueError("semigroup_apply requires t > 0")
    model = spec.model
    if not isinstance(model, Vasicek):
        raise ValueError("semigroup_apply requires the Vasicek model")
    if dy is None:
        dy = phi.step
    r = phi.nodes
    mom = ou_moments(model, np.array([phi.r_min, phi.r_max]), t)
    sd = math.sqrt(float(mom.var_r[0]))
    dy = min(dy, sd)  # the y mesh must resolve the kernel width
    y_lo = min(phi.r_min, float(mom.mean_r[0])) - pad_sigmas * sd
    y_hi = max(phi.r_max, float(mom.mean_r[1])) + pad_sigmas * sd
    n_y = int(math.ceil((y_hi - y_lo) / dy)) + 1
    y = np.linspace(y_lo, y_hi, n_y)
    phi_y = extend_with_envelope(phi, envelope_rate(spec), y)
    w = fk_kernel_weight(spec, t, r[:, None], y[None, :])
    weights = np.full(n_y, y[1] - y[0])
    weights[0] *= 0.5
    weights[-1] *= 0.5
    return phi.with_values(w @ (phi_y * weights))


def gamma_thresholds(spec: ProblemSpec) -> tuple[float, float]:
    """Sufficient discount thresholds (gamma_1, gamma_2) for the Vasicek model.

    gamma > gamma_1 makes the supersolution N finite; gamma > gamma_2 is the
    extra uniform-integrability margin.
    """
    model = spec.model
    if not isinstance(model, Vasicek):
        raise ValueError("gamma thresholds are defined for the Vasicek model")
    a, b, sig, al = model.a, model.b, model.sigma, spec.alpha
    g1 = al * a / b + al**2 * sig**2 / ((1.0 - al) * b**2)
    g2 = al * a / b + 3.0 * al**2 * sig**2 / (2.0 * math.sqrt(1.0 - al) * b**2) + al * sig * (b + 1.0) / b
    return g1, g2


def theta_growth(spec: ProblemSpec) -> float:
    """Growth exponent of the weighted semigroup norm bound:
    ||P_t phi|| <= 2 e^{theta t} ||phi|| with theta = alpha^2 sigma^2/(2 b^2) + alpha a / b."""
    model = spec.model
    if not isinstance(model, Vasicek):
        raise ValueError("the semigroup growth bound is defined for the Vasicek model")
    return spec.alpha**2 * model.sigma**2 / (2.0 * model.b**2) + spec.alpha * model.a / model.b


def rho_decay(spec: ProblemSpec) -> float:
    """Exponential tail decay rate of the N integrand for the Vasicek model."""
    model = spec.model
    if not isinstance(model, Vasicek):
        raise ValueError("rho is defined for the Vasicek model")
    a, b, sig, al = model.a, model.b, model.sigma, spec.alpha
    return (spec.gamma - al * a / b - al**2 * sig**2 / (2.0 * (1.0 - al) * b**2)) / (1.0 - al)


def _n_integrand(spec: ProblemSpec, r: np.ndarray, t: np.ndarray) -> np.ndarray:
    """exp((-gamma t + alpha mean_h)/(1-alpha) + alpha^2 var_h / (2 (1-alpha)^2)),
    shaped (len(t), len(r))."""
    al, g = spec.alpha, spec.gamma
    mom = ou_moments(spec.model, r[None, :], t[:, None])
    expo = (-g * t[:, None] + al * mom.mean_h) / (1.0 - al) + 0.5 * (al / (1.0 - al)) ** 2 * mom.var_h
    return np.exp(expo)


def supersolution_N(spec: ProblemSpec, r, *, dt: float = 1e-3, cutoff: float = 1e-14, n_nodes: int = 2001):
    """The integral supersolution N(r) = E^r int_0^inf e^{(-gamma t + alpha h_t)/(1-alpha)} dt.

    Vasicek: adaptive trapezoid in t using the closed-form Gaussian exponent,
    truncated once the integrand falls below ``cutoff`` times its running
    maximum at every node (the tail decays like e^{-rho t}). Constant: exact
    closed form. Invariant interval: finite-difference solution of the linear
    equation Q N + ((alpha r - gamma)/(1-alpha)) N + 1 = 0.
    """
    model = spec.model
    al, g = spec.alpha, spec.gamma
    if isinstance(model, Constant):
        if g - al * model.r <= 0:
            raise InfeasibleProblem("supersolution not guaranteed finite: gamma <= alpha * r")
        out = (1.0 - al) / (g - al * model.r) * np.ones_like(np.asarray(r, dtype=float))
        return float(out) if np.ndim(r) == 0 else out
    if isinstance(model, InvariantInterval):
        if model.b >= g / al:
            raise InfeasibleProblem("supersolution not guaranteed finite: need b < gamma/alpha")
        from .resolvent import solve_linear_fk_ode

        n_grid = solve_linear_fk_ode(spec, n_nodes=n_nodes)
        out = n_grid(np.asarray(r, dtype=float))
        return float(out) if np.ndim(r) == 0 else out
    if not isinstance(model, Vasicek):
        raise InfeasibleProblem("supersolution not guaranteed finite for this model")
    g1, _ = gamma_thresholds(spec)
    if g <= g1:
        raise InfeasibleProblem(
            f"supersolution not guaranteed finite: gamma={g} must exceed gamma_1={g1:.6g}"
        )
    rho = rho_decay(spec)
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    t_end = max(80.0 / rho, 10.0 / model.b)
    chunk = 4096
    total = np.zeros_like(r_arr)
    gmax = np.zeros_like(r_arr)
    t0 = 0.0
    g_prev = _n_integrand(spec, r_arr, np.array([0.0]))[0]
    while t0 < t_end:
        ts = t0 + dt * np.arange(1, chunk + 1)
        vals = _n_integrand(spec, r_arr, ts)
        block = np.vstack([g_prev, vals])
        total += np.trapezoid(block, dx=dt, axis=0)
        gmax = np.maximum(gmax, block.max(axis=0))
        g_prev = vals[-1]
        t0 = float(ts[-1])
        if np.all(g_prev <= cutoff * gmax):
            break
    out = total
    return float(out[0]) if np.ndim(r) == 0 else out


def supersolution_N_grid(spec: ProblemSpec, grid: GridFunction, **kwargs) -> GridFunction:
    """N sampled on an existing grid."""
    return grid.with_values(supersolution_N(spec, grid.nodes, **kwargs))
