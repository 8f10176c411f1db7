"""One resolvent step u = (lambda + gamma - A)^{-1} psi, three ways.

A is the weighted generator Q + alpha r. The quadrature backend integrates the
closed-form Gaussian kernel in time and rate (the primary method), the
finite-difference backend solves the equivalent linear ODE on the window, and
the Monte Carlo backend averages the probabilistic representation. The three
routes cross-validate each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.linalg
import scipy.signal

from .errors import InfeasibleProblem
from .gaussian import (
    _cov_shape,
    _int_decay_shape,
    _var_h_shape,
    envelope_rate,
    extend_with_envelope,
    fk_kernel_weight,
    gamma_thresholds,
    ou_moments,
    theta_growth,
)
from .grids import GridFunction
from .models import Constant, InvariantInterval, ProblemSpec, Vasicek, diffusion, drift, state_rate


@dataclass(frozen=True)
class Quadrature:
    """Time-rate trapezoid quadrature of the Gaussian kernel (Vasicek only)."""

    dt: float = 0.01
    t_max: float = 12.0
    dy: float = 0.002
    y_halfwidth: float | None = None
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.dt <= 0 or self.t_max < self.dt or self.dy <= 0:
            raise ValueError("quadrature steps and horizon must be positive")


@dataclass(frozen=True)
class FiniteDifference:
    """Central-difference boundary-value solve of the resolvent ODE."""

    boundary: str = "auto"
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.boundary != "auto":
            raise ValueError("only the 'auto' boundary rule is implemented")


@dataclass(frozen=True)
class MonteCarlo:
    """Path average of int e^{-(lambda+gamma)t} psi(r_t) e^{alpha h_t} dt."""

    paths: int
    dt: float
    t_max: float
    seed: int
    tolerance: float = 1e-2

    def __post_init__(self):
        if self.paths < 100:
            raise ValueError("Monte Carlo backend needs at least 100 paths")
        if self.dt <= 0 or self.t_max < self.dt:
            raise ValueError("Monte Carlo step and horizon must be positive")


ResolventBackend = Union[Quadrature, FiniteDifference, MonteCarlo]


def robin_rate(spec: ProblemSpec) -> float:
    """Envelope growth rate alpha/((1-alpha) b) used as the Robin boundary slope
    on truncated Vasicek windows."""
    if not isinstance(spec.model, Vasicek):
        raise ValueError("the Robin rule is defined for the Vasicek model")
    return spec.alpha / ((1.0 - spec.alpha) * spec.model.b)


def _check_laplace_convergence(spec: ProblemSpec, lam: float) -> None:
    theta = theta_growth(spec)
    if lam + spec.gamma <= theta:
        raise ValueError(
            f"lambda + gamma = {lam + spec.gamma:.6g} does not exceed the weighted-semigroup "
            f"growth rate {theta:.6g}; the time integral diverges"
        )


def _frozen_cell(spec: ProblemSpec, lam: float, r: np.ndarray, dt: float) -> np.ndarray:
    """Analytic weight of the first time cell [0, dt] with the state frozen:
    int_0^dt e^{-(lambda+gamma-alpha r) t} dt."""
    s = lam + spec.gamma - spec.alpha * r
    z = s * dt
    small = np.abs(z) < 1e-8
    s_safe = np.where(small, 1.0, s)
    exact = -np.expm1(-z) / s_safe
    series = dt * (1.0 - z / 2.0 + z**2 / 6.0)
    return np.where(small, series, exact)


def _cell_weights(s: float, h: float) -> tuple[float, float]:
    """Exact weights for e^{-s t} against the linear hat on one cell of width h:
    contribution = e^{-s t_left} (A * g_left + B * g_right)."""
    z = s * h
    if z < 1e-4:
        a = h / 2.0 - s * h**2 / 6.0 + s**2 * h**3 / 24.0
        b = h / 2.0 - s * h**2 / 3.0 + s**2 * h**3 / 8.0
        return a, b
    q = math.exp(-z)
    b = (1.0 - q - z * q) / (s**2 * h)
    a = (1.0 - q) / s - b
    return a, b


class QuadratureOperator:
    """Precomputed kernel propagators on a grid, reusable across lambdas.

    The time integral uses exponentially weighted trapezoid coefficients
    (exact integration of e^{-(lambda+gamma)t} against the piecewise-linear
    interpolant of P_t psi) plus the analytic frozen-state correction on the
    singular first cell [0, dt].
    """

    def __init__(
        self,
        spec: ProblemSpec,
        grid: GridFunction,
        backend: Quadrature,
        *,
        max_cache_floats: float = 8e7,
    ):
        if not isinstance(spec.model, Vasicek):
            raise ValueError("the quadrature resolvent requires the Vasicek model")
        self.spec = spec
        self.backend = backend
        self.nodes = grid.nodes
        model = spec.model
        n_steps = int(round(backend.t_max / backend.dt))
        if n_steps < 2:
            raise ValueError("t_max must cover at least two time cells")
        self.n_steps = n_steps
        self.times = backend.dt * np.arange(1, n_steps + 1)

        first_width = math.sqrt(float(ou_moments(model, 0.0, backend.dt).var_r))
        if backend.dy > 1.3 * first_width:
            raise ValueError(
                f"dy={backend.dy:g} cannot resolve the kernel width {first_width:.3g} at t=dt; "
                "shrink dy (roughly dy <= sigma*sqrt(dt)) or enlarge dt"
            )
        stat_sd = math.sqrt(float(ou_moments(model, 0.0, backend.t_max).var_r))
        hw = backend.y_halfwidth if backend.y_halfwidth is not None else 6.0 * stat_sd
        long_mean = model.a / model.b
        y_lo = min(grid.r_min, long_mean) - hw
        y_hi = max(grid.r_max, long_mean) + hw
        n_y = int(math.ceil((y_hi - y_lo) / backend.dy)) + 1
        self.y = np.linspace(y_lo, y_hi, n_y)
        dy = self.y[1] - self.y[0]
        self._trap_y = np.full(n_y, dy)
        self._trap_y[0] *= 0.5
        self._trap_y[-1] *= 0.5

        # extension of a grid function onto the y mesh: linear interpolation
        # inside the window, frozen edge value times the envelope outside
        rate = envelope_rate(spec)
        n_r = self.nodes.size
        ext = np.zeros((n_y, n_r))
        h = grid.step
        for k, yk in enumerate(self.y):
            if yk < grid.r_min:
                ext[k, 0] = math.exp(rate * (abs(yk) - abs(grid.r_min)))
            elif yk > grid.r_max:
                ext[k, -1] = math.exp(rate * (abs(yk) - abs(grid.r_max)))
            else:
                pos = (yk - grid.r_min) / h
                i = min(int(pos), n_r - 2)
                frac = pos - i
                ext[k, i] = 1.0 - frac
                ext[k, i + 1] = frac
        self._ext = ext

        self._stack = None
        if n_steps * n_r * n_r <= max_cache_floats:
            stack = np.empty((n_steps, n_r, n_r))
            for j, t in enumerate(self.times):
                stack[j] = self._propagator(t) @ ext
            self._stack = stack
        self._cached = (None, None, None)

    def _propagator(self, t: float) -> np.ndarray:
        """Kernel matrix (n_r, n_y) including the y trapezoid weights."""
        w = fk_kernel_weight(self.spec, t, self.nodes[:, None], self.y[None, :])
        return w * self._trap_y[None, :]

    def _coefficients(self, lam: float) -> np.ndarray:
        s = lam + self.spec.gamma
        dt = self.backend.dt
        a, b = _cell_weights(s, dt)
        decay = np.exp(-s * self.times)
        c = np.zeros(self.n_steps)
        c[:-1] += decay[:-1] * a
        c[1:] += decay[:-1] * b
        return c

    def resolvent_matrix(self, lam: float) -> tuple[np.ndarray, np.ndarray]:
        """(R, d) with u = R @ psi + d * psi."""
        _check_laplace_convergence(self.spec, lam)
        if self._cached[0] == lam:
            return self._cached[1], self._cached[2]
        c = self._coefficients(lam)
        if self._stack is not None:
            mat = np.tensordot(c, self._stack, axes=(0, 0))
        else:
            mat = np.zeros((self.nodes.size, self.nodes.size))
            for j, t in enumerate(self.times):
                if c[j] == 0.0:
                    continue
                mat += c[j] * (self._propagator(t) @ self._ext)
        d = _frozen_cell(self.spec, lam, self.nodes, self.backend.dt)
        self._cached = (lam, mat, d)
        return mat, d

    def apply(self, lam: float, psi_values: np.ndarray) -> np.ndarray:
        mat, d = self.resolvent_matrix(lam)
        return mat @ psi_values + d * psi_values


def resolvent_quadrature(
    spec: ProblemSpec, psi: GridFunction, lam: float, backend: Quadrature
) -> GridFunction:
    """Quadrature evaluation of u = (lambda + gamma - A)^{-1} psi (Vasicek)."""
    op = QuadratureOperator(spec, psi, backend)
    return psi.with_values(op.apply(lam, psi.values))


# ---------------------------------------------------------------------------
# finite differences


@dataclass
class TridiagSystem:
    """Tridiagonal operator rows c0 u - c2 u'' - c1 u' = rhs with boundary rows
    already folded in. Dirichlet rows carry fixed right-hand sides."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    dirichlet_left: float | None = None
    dirichlet_right: float | None = None

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float).copy()
        if self.dirichlet_left is not None:
            rhs[0] = self.dirichlet_left
        if self.dirichlet_right is not None:
            rhs[-1] = self.dirichlet_right
        n = self.diag.size
        ab = np.zeros((3, n))
        ab[0, 1:] = self.sup[:-1]
        ab[1, :] = self.diag
        ab[2, :-1] = self.sub[1:]
        return scipy.linalg.solve_banded((1, 1), ab, rhs)

    def matvec(self, u: np.ndarray) -> np.ndarray:
        out = self.diag * u
        out[:-1] += self.sup[:-1] * u[1:]
        out[1:] += self.sub[1:] * u[:-1]
        return out


def fd_system(
    spec: ProblemSpec,
    nodes: np.ndarray,
    c0: np.ndarray,
    left_bc: tuple,
    right_bc: tuple,
) -> TridiagSystem:
    """Assemble c0 u - Q u (model drift/volatility) on a uniform grid.

    Interior rows use central differences, switching the drift term to the
    upwind side wherever the cell Peclet number |mu| h / sigma^2 exceeds 1
    (inevitable near the degenerate endpoints of the interval model); this
    keeps the matrix an M-matrix. Refuses non-M-matrix assemblies.
    """
    nodes = np.asarray(nodes, dtype=float)
    h = nodes[1] - nodes[0]
    mu = np.asarray(drift(spec.model, nodes), dtype=float)
    c2 = 0.5 * np.asarray(diffusion(spec.model, nodes), dtype=float) ** 2
    n = nodes.size
    sub = np.zeros(n)
    diag = np.asarray(c0, dtype=float).copy()
    sup = np.zeros(n)

    # interior rows
    c1 = mu[1:-1]
    d2 = c2[1:-1]
    central = np.abs(c1) * h <= 2.0 * d2
    central &= d2 > 0
    sub_i = -d2 / h**2 + np.where(central, c1 / (2.0 * h), np.where(c1 < 0, c1 / h, 0.0))
    sup_i = -d2 / h**2 - np.where(central, c1 / (2.0 * h), np.where(c1 > 0, c1 / h, 0.0))
    diag_i = 2.0 * d2 / h**2 + np.where(central, 0.0, np.abs(c1) / h)
    sub[1:-1] = sub_i
    sup[1:-1] = sup_i
    diag[1:-1] += diag_i

    def _fold(side: int, bc: tuple):
        i = 0 if side < 0 else n - 1
        kind = bc[0]
        if kind == "dirichlet":
            diag[i] = 1.0
            (sup if side < 0 else sub)[i] = 0.0
            return bc[1]
        if kind == "robin":
            rate = bc[1]
            off = -2.0 * c2[i] / h**2
            diag[i] += 2.0 * c2[i] / h**2 - side * 2.0 * c2[i] * rate / h - mu[i] * rate
            (sup if side < 0 else sub)[i] = off
            return None
        if kind == "degenerate":
            # sigma vanishes here; the equation is first order with inward drift
            if side < 0:
                diag[i] += mu[i] / h
                sup[i] = -mu[i] / h
            else:
                diag[i] += -mu[i] / h
                sub[i] = mu[i] / h
            return None
        if kind == "diagonal":
            return None
        raise ValueError(f"unknown boundary rule {bc!r}")

    dl = _fold(-1, left_bc)
    dr = _fold(+1, right_bc)

    tol = 1e-12 * max(1.0, float(np.max(np.abs(diag))))
    if np.any(sub[1:] > tol) or np.any(sup[:-1] > tol):
        raise ValueError(
            "finite-difference assembly is not an M-matrix (drift-dominated stencil); "
            "refine the grid"
        )
    if np.any(diag <= 0):
        raise ValueError(
            "finite-difference diagonal is not positive; increase lambda/gamma or shrink the window"
        )
    return TridiagSystem(sub=sub, diag=diag, sup=sup, dirichlet_left=dl, dirichlet_right=dr)


def _auto_bcs(spec: ProblemSpec, nodes: np.ndarray) -> tuple[tuple, tuple]:
    model = spec.model
    if isinstance(model, Vasicek):
        rate = robin_rate(spec)
        left_rate = rate if nodes[0] >= 0 else -rate
        return ("robin", left_rate), ("robin", rate)
    if isinstance(model, InvariantInterval):
        if abs(nodes[0] - model.a) > 1e-9 or abs(nodes[-1] - model.b) > 1e-9:
            raise ValueError("interval-model FD grids must span [a, b] where the volatility degenerates")
        return ("degenerate",), ("degenerate",)
    if isinstance(model, Constant):
        return ("diagonal",), ("diagonal",)
    raise ValueError(f"no truncation boundary rule for {type(model).__name__}")


def resolvent_fd(
    spec: ProblemSpec, psi: GridFunction, lam: float, backend: FiniteDifference
) -> GridFunction:
    """Finite-difference solve of (lambda + gamma - A) u = psi on the grid."""
    del backend
    nodes = psi.nodes
    c0 = lam + spec.gamma - spec.alpha * state_rate(spec.model, nodes)
    if np.any(c0 <= 0):
        raise ValueError(
            "lambda + gamma - alpha r must stay positive on the window; "
            "increase lambda or shrink the window"
        )
    left, right = _auto_bcs(spec, nodes)
    sys = fd_system(spec, nodes, c0, left, right)
    return psi.with_values(sys.solve(psi.values))


def solve_linear_fk_ode(
    spec: ProblemSpec,
    grid: GridFunction | None = None,
    *,
    n_nodes: int = 2001,
) -> GridFunction:
    """FD solution of Q N + ((alpha r - gamma)/(1 - alpha)) N + 1 = 0.

    Serves as the supersolution N for the interval model (no closed-form
    transition density exists there) and as a cross-check of the Vasicek
    quadrature N. Boundary rules match resolvent_fd.
    """
    model = spec.model
    al, g = spec.alpha, spec.gamma
    if isinstance(model, Constant) and g <= al * model.r:
        raise InfeasibleProblem("need gamma > alpha * r")
    if isinstance(model, InvariantInterval) and g <= al * model.b:
        raise InfeasibleProblem("need gamma > alpha * b for the interval model")
    if isinstance(model, Vasicek) and spec.gamma <= gamma_thresholds(spec)[0]:
        raise InfeasibleProblem("need gamma > gamma_1 for the Vasicek model")
    if grid is None:
        if isinstance(model, InvariantInterval):
            grid = GridFunction.zeros(model.a, model.b, n_nodes)
        else:
            raise ValueError("a grid is required for models without a bounded state space")
    nodes = grid.nodes
    c0 = (g - al * state_rate(model, nodes)) / (1.0 - al)
    left, right = _auto_bcs(spec, nodes)
    sys = fd_system(spec, nodes, c0, left, right)
    return grid.with_values(sys.solve(np.ones(nodes.size)))


# ---------------------------------------------------------------------------
# Monte Carlo


def _unit_noise_chol(b: float, dt: float) -> np.ndarray:
    """Cholesky factor of the unit-volatility (X, Y) increment covariance."""
    x = b * dt
    var_x = -np.expm1(-2.0 * x) / (2.0 * b)
    var_y = float(_var_h_shape(x)) / b**3
    cov = float(_cov_shape(x)) / b**2
    cov_mat = np.array([[var_x, cov], [cov, var_y]])
    return np.linalg.cholesky(cov_mat)


def resolvent_mc(
    spec: ProblemSpec, psi: GridFunction, lam: float, backend: MonteCarlo
) -> tuple[GridFunction, GridFunction]:
    """Monte Carlo resolvent with per-node standard errors.

    Vasicek paths share one (X_t, Y_t) noise stream per path across all grid
    nodes (the OU map from the initial rate is affine, so common random
    numbers are exact and make node-to-node noise smooth); other models step
    all nodes with a common Euler shock. Path k draws from seed + k.
    lambda + gamma must be large enough that the discarded tail beyond t_max
    is below the intended tolerance.
    """
    _check_mc_applicable(spec)
    s = lam + spec.gamma
    if s <= 0:
        raise ValueError("lambda + gamma must be positive")
    nodes = psi.nodes
    n_steps = int(round(backend.t_max / backend.dt))
    dt = backend.dt
    times = dt * np.arange(0, n_steps + 1)
    trap_t = np.full(n_steps + 1, dt)
    trap_t[0] *= 0.5
    trap_t[-1] *= 0.5
    disc = np.exp(-s * times)

    if isinstance(spec.model, Vasicek):
        ext_rate = envelope_rate(spec)

        def psi_at(r):
            return extend_with_envelope(psi, ext_rate, r)

    else:

        def psi_at(r):
            return psi(r)

    total = np.zeros(nodes.size)
    total_sq = np.zeros(nodes.size)
    for k in range(backend.paths):
        rng = np.random.default_rng(backend.seed + k)
        if isinstance(spec.model, Vasicek):
            r_mat, h_mat = _vasicek_node_paths(spec.model, nodes, dt, n_steps, rng)
        else:
            r_mat, h_mat = _euler_node_paths(spec.model, nodes, dt, n_steps, rng)
        g = psi_at(r_mat) * np.exp(spec.alpha * h_mat) * disc[:, None]
        path_integral = trap_t @ g
        total += path_integral
        total_sq += path_integral**2
    n = backend.paths
    mean = total / n
    var = np.maximum(total_sq / n - mean**2, 0.0) * n / (n - 1)
    se = np.sqrt(var / n)
    return psi.with_values(mean), psi.with_values(se)


def _vasicek_node_paths(
    model: Vasicek, nodes: np.ndarray, dt: float, n_steps: int, rng
) -> tuple[np.ndarray, np.ndarray]:
    """Exact (r, h) paths from every node under one shared noise stream.

    Returns arrays of shape (n_steps + 1, n_nodes)."""
    a, b, sig = model.a, model.b, model.sigma
    chol = _unit_noise_chol(b, dt)
    z = rng.standard_normal((n_steps, 2)) @ chol.T
    phi = math.exp(-b * dt)
    x = scipy.signal.lfilter([1.0], [1.0, -phi], z[:, 0])
    x_prev = np.concatenate(([0.0], x[:-1]))
    y = np.cumsum(x_prev * (-math.expm1(-b * dt)) / b + z[:, 1])
    x = np.concatenate(([0.0], x))
    y = np.concatenate(([0.0], y))
    t = dt * np.arange(0, n_steps + 1)
    e1 = np.exp(-b * t)
    one_m = -np.expm1(-b * t)
    r_mat = nodes[None, :] * e1[:, None] + (a / b) * one_m[:, None] + sig * x[:, None]
    h_det = nodes[None, :] * (one_m / b)[:, None] + (a / b**2) * _int_decay_shape(b * t)[:, None]
    h_mat = h_det + sig * y[:, None]
    return r_mat, h_mat


def _euler_node_paths(
    model, nodes: np.ndarray, dt: float, n_steps: int, rng
) -> tuple[np.ndarray, np.ndarray]:
    """Euler (r, h) paths from every node sharing one shock stream."""
    from .models import domain, state_rate

    dom = domain(model)
    z = rng.standard_normal(n_steps)
    r = np.empty((n_steps + 1, nodes.size))
    h = np.empty_like(r)
    r[0] = state_rate(model, nodes)
    h[0] = 0.0
    sqdt = math.sqrt(dt)
    clamp = isinstance(model, InvariantInterval)
    for i in range(n_steps):
        cur = r[i]
        nxt = cur + drift(model, cur) * dt + diffusion(model, cur) * sqdt * z[i]
        if clamp:
            nxt = np.clip(nxt, dom.lo + 1e-12, dom.hi - 1e-12)
        r[i + 1] = nxt
        h[i + 1] = h[i] + 0.5 * (cur + nxt) * dt
    return r, h


def _check_mc_applicable(spec: ProblemSpec) -> None:
    if isinstance(spec.model, (Vasicek, InvariantInterval, Constant)):
        return
    raise ValueError(f"Monte Carlo resolvent not defined for {type(spec.model).__name__}")
