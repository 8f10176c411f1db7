"""The monotone double iteration for the consumption HJB equation.

Builds K(r) (value profile Phi = K v^alpha) for Problems A and B as the limit
of K^m_n, where each inner step is one resolvent application of the
Lipschitz-clamped nonlinearity, and audits the result: monotonicity in n and
m, domination by the supersolution profile, and the pointwise HJB residual.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import HorizonError, InfeasibleProblem, MonotonicityError
from .feasibility import Feasibility, classify
from .gaussian import supersolution_N
from .grids import GridFunction
from .models import Constant, ProblemSpec, Vasicek, domain, generator_apply, state_rate
from .resolvent import (
    FiniteDifference,
    MonteCarlo,
    Quadrature,
    QuadratureOperator,
    ResolventBackend,
    _auto_bcs,
    fd_system,
    resolvent_mc,
    robin_rate,
)


@dataclass(frozen=True)
class SolverConfig:
    """Iteration caps, lambda schedule, tolerances, and the resolvent backend.

    ``grid`` is the reporting grid of the solution. The solver works on a
    window padded by ``pad`` on each side (clipped to the model domain) and
    returns the restriction, so edge effects of the truncation rules stay out
    of the delivered values.
    """

    grid: GridFunction
    backend: ResolventBackend
    m_max: int = 16
    n_max: int = 10
    eps1: float = 1e-3
    eps2: float = 1e-5
    theta_bound: float | None = None
    tol_n: float = 1e-6
    tol_m: float = 1e-4
    pad: float = 0.05

    def __post_init__(self):
        if self.m_max < 1 or self.n_max < 1:
            raise ValueError("m_max and n_max must be at least 1")
        if self.tol_n <= 0 or self.tol_m <= 0:
            raise ValueError("tolerances must be positive")
        if self.pad < 0:
            raise ValueError("pad must be nonnegative")


@dataclass(frozen=True)
class TraceStep:
    m: int
    n: int
    sup_increment: float
    min_increment: float
    max_bound_violation: float
    seconds: float


@dataclass
class IterationTrace:
    steps: list[TraceStep] = field(default_factory=list)

    def append(self, step: TraceStep) -> None:
        self.steps.append(step)

    @property
    def worst_min_increment(self) -> float:
        return min((s.min_increment for s in self.steps), default=0.0)

    @property
    def worst_bound_violation(self) -> float:
        return max((s.max_bound_violation for s in self.steps), default=0.0)

    def rows(self) -> list[tuple]:
        return [
            (s.m, s.n, s.sup_increment, s.min_increment, s.max_bound_violation, s.seconds)
            for s in self.steps
        ]


@dataclass
class Solution:
    """Converged value profile and its audit trail.

    ``iterates`` holds the profile after every resolvent step (the rising fan
    of curves under the supersolution); for problem B, ``N_pow`` carries the
    upper bracket K_L + Ntilde^{1-alpha} instead of N^{1-alpha}."""

    K: GridFunction
    N_pow: GridFunction | None
    policy_c: GridFunction
    trace: IterationTrace
    spec: ProblemSpec
    iterates: list[GridFunction]


def clamp_F(m: float, alpha: float, x):
    """Lipschitz clamp of the consumption nonlinearity (1-alpha) x^{alpha/(alpha-1)}.

    Below the branch point m^{alpha-1} the function continues as its tangent
    line m^alpha - alpha m x, so the whole map is Lipschitz with constant
    alpha m; this caps the relative consumption rate at m.
    """
    if m <= 0:
        raise ValueError("the clamp level m must be positive")
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0):
        raise ValueError("the clamp is defined for x >= 0")
    xc = m ** (alpha - 1.0)
    upper = (1.0 - alpha) * np.power(np.maximum(x_arr, xc), alpha / (alpha - 1.0))
    lower = m**alpha - alpha * m * x_arr
    out = np.where(x_arr > xc, upper, lower)
    return float(out) if np.ndim(x) == 0 else out


def lambda_schedule(spec: ProblemSpec, config: SolverConfig, m: int) -> float:
    """lambda_m = max(theta - gamma + eps1, alpha m + eps2); the first branch
    drops out when no semigroup growth bound is supplied (valid when gamma
    exceeds the growth rate, as in the reference runs)."""
    if m < 1:
        raise ValueError("m must be at least 1")
    lam = spec.alpha * m + config.eps2
    if config.theta_bound is not None:
        lam = max(config.theta_bound - spec.gamma + config.eps1, lam)
    return lam


def _extended_nodes(spec: ProblemSpec, grid: GridFunction, pad: float):
    """Reporting grid extended by ~pad on each side, clipped to the model domain.

    Returns (nodes, i0, i1) with the reporting window at [i0, i1]."""
    h = grid.step
    dom = domain(spec.model)
    if isinstance(spec.model, Constant) or pad == 0.0:
        k_lo = k_hi = 0
    else:
        k = int(round(pad / h))
        k_lo = k
        k_hi = k
        if np.isfinite(dom.lo):
            k_lo = min(k, max(int(np.floor((grid.r_min - dom.lo) / h + 1e-9)), 0))
        if np.isfinite(dom.hi):
            k_hi = min(k, max(int(np.floor((dom.hi - grid.r_max) / h + 1e-9)), 0))
    n = grid.n_nodes + k_lo + k_hi
    nodes = grid.r_min - k_lo * h + h * np.arange(n)
    return nodes, k_lo, k_lo + grid.n_nodes - 1


def _upper_profile(spec: ProblemSpec, nodes: np.ndarray, force: bool):
    """N^{1-alpha} on the nodes, or None when unavailable under --force."""
    try:
        n_vals = supersolution_N(spec, nodes)
    except InfeasibleProblem:
        if force:
            return None
        raise
    return np.power(n_vals, 1.0 - spec.alpha)


class _Resolver:
    """Per-backend factory of resolvent applications on a fixed node set."""

    def __init__(self, spec: ProblemSpec, nodes: np.ndarray, backend: ResolventBackend):
        self.spec = spec
        self.nodes = nodes
        self.backend = backend
        self._grid = GridFunction(nodes[0], nodes[-1], np.zeros(nodes.size))
        if isinstance(backend, Quadrature):
            self._op = QuadratureOperator(spec, self._grid, backend)
        elif isinstance(backend, FiniteDifference):
            self._op = None
            self._cache: tuple[float, object] | None = None
        elif isinstance(backend, MonteCarlo):
            self._op = None
        else:
            raise ValueError(f"unknown backend {backend!r}")

    def apply(self, lam: float, psi_values: np.ndarray) -> np.ndarray:
        if isinstance(self.backend, Quadrature):
            return self._op.apply(lam, psi_values)
        if isinstance(self.backend, FiniteDifference):
            if self._cache is None or self._cache[0] != lam:
                c0 = lam + self.spec.gamma - self.spec.alpha * state_rate(self.spec.model, self.nodes)
                if np.any(c0 <= 0):
                    raise ValueError(
                        "lambda + gamma - alpha r must stay positive on the window"
                    )
                left, right = _auto_bcs(self.spec, self.nodes)
                self._cache = (lam, fd_system(self.spec, self.nodes, c0, left, right))
            return self._cache[1].solve(psi_values)
        u, _ = resolvent_mc(self.spec, self._grid.with_values(psi_values), lam, self.backend)
        return u.values


def _iterate(
    spec: ProblemSpec,
    config: SolverConfig,
    apply_resolvent,
    k0: np.ndarray,
    window: slice,
    upper: np.ndarray | None,
    lower: np.ndarray | None,
    post_step=None,
) -> tuple[np.ndarray, IterationTrace, list[np.ndarray]]:
    """Run the double monotone loop from k0; all audit statistics are taken on
    the reporting window slice."""
    trace = IterationTrace()
    snapshots: list[np.ndarray] = []
    tol_backend = config.backend.tolerance
    k = k0.copy()
    for m in range(1, config.m_max + 1):
        lam = lambda_schedule(spec, config, m)
        k_outer = k.copy()
        for n in range(1, config.n_max + 1):
            t0 = time.perf_counter()
            psi = clamp_F(m, spec.alpha, np.maximum(k, 0.0)) + lam * k
            k_new = apply_resolvent(lam, psi)
            if post_step is not None:
                post_step(k_new)
            dt_step = time.perf_counter() - t0
            delta = k_new[window] - k[window]
            sup_inc = float(np.max(np.abs(delta)))
            min_inc = float(np.min(delta))
            viol = 0.0
            if upper is not None:
                viol = max(viol, float(np.max(k_new[window] - upper[window])))
            if lower is not None:
                viol = max(viol, float(np.max(lower[window] - k_new[window])))
            viol = max(viol, 0.0)
            trace.append(TraceStep(m, n, sup_inc, min_inc, viol, dt_step))
            if min_inc < -10.0 * tol_backend:
                raise MonotonicityError(
                    f"iterate decreased by {-min_inc:.3g} at m={m}, n={n} "
                    f"(beyond 10x backend tolerance {tol_backend:.1g}); "
                    "check the resolvent configuration and lambda schedule",
                    trace=trace,
                )
            if viol > 10.0 * tol_backend:
                raise MonotonicityError(
                    f"iterate escaped its bracketing profile by {viol:.3g} at m={m}, n={n}",
                    trace=trace,
                )
            k = k_new
            snapshots.append(k.copy())
            if sup_inc < config.tol_n:
                break
        outer_inc = float(np.max(np.abs(k[window] - k_outer[window])))
        if m >= 2 and outer_inc < config.tol_m:
            break
    return k, trace, snapshots


def solve_problem_a(spec: ProblemSpec, config: SolverConfig, *, force: bool = False) -> Solution:
    """Problem A: the double monotone iteration K^m_n from K^m_0 = 0.

    The m loop warm-starts from the previous clamp level (a valid subsolution
    since the clamps increase with m), so monotonicity in both indices holds
    and is asserted against the backend tolerance.
    """
    if spec.variant != "A":
        raise ValueError("solve_problem_a requires a variant-A spec")
    report = classify(spec)
    if report.verdict is not Feasibility.FINITE and not force:
        raise InfeasibleProblem(
            f"feasibility verdict is {report.verdict.name}; pass force=True to solve anyway"
        )
    nodes, i0, i1 = _extended_nodes(spec, config.grid, config.pad)
    window = slice(i0, i1 + 1)
    upper = _upper_profile(spec, nodes, force)
    resolver = _Resolver(spec, nodes, config.backend)
    k, trace, snaps = _iterate(
        spec, config, resolver.apply, np.zeros(nodes.size), window, upper, None
    )
    return _package(spec, config, nodes, window, k, upper, trace, snaps)


def _package(spec, config, nodes, window, k, upper, trace, snaps) -> Solution:
    grid = config.grid
    k_rep = GridFunction(grid.r_min, grid.r_max, k[window])
    if np.any(k_rep.values <= 0):
        raise MonotonicityError("converged K is not strictly positive", trace=trace)
    n_pow = GridFunction(grid.r_min, grid.r_max, upper[window]) if upper is not None else None
    policy = k_rep.with_values(np.power(k_rep.values, 1.0 / (spec.alpha - 1.0)))
    iterates = [GridFunction(grid.r_min, grid.r_max, s[window]) for s in snaps]
    return Solution(K=k_rep, N_pow=n_pow, policy_c=policy, trace=trace, spec=spec, iterates=iterates)


# ---------------------------------------------------------------------------
# Problem B


def _kl_extended(spec: ProblemSpec, config: SolverConfig, R: float | None):
    """Hitting functional K_L on a doubling truncation [0, R]; returns
    (nodes, values, R_final). The discrete operator is shared with the
    problem-B iteration so K_L stays an exact discrete subsolution."""
    grid = config.grid
    if abs(grid.r_min) > 1e-12:
        raise ValueError("problem-B grids must start at r = 0")
    h = grid.step
    if R is None:
        R = max(2.0 * grid.r_max, 0.3)
    prev = None
    while True:
        n_ext = max(int(round(R / h)), grid.n_nodes - 1)
        nodes = h * np.arange(n_ext + 1)
        c0 = spec.gamma - spec.alpha * nodes
        sys = fd_system(spec, nodes, c0, ("dirichlet", 1.0), ("dirichlet", 1.0))
        u = sys.solve(np.zeros(nodes.size))
        vals = u[: grid.n_nodes]
        if prev is not None and float(np.max(np.abs(vals - prev))) < config.tol_n:
            return nodes, u, R
        prev = vals
        R *= 2.0
        if R > 1000.0 * max(grid.r_max, 1.0):
            raise HorizonError(
                f"K_L truncation radius did not converge (reached R={R:.3g}); "
                "the hitting functional may not be well defined at these parameters"
            )


def compute_KL(spec: ProblemSpec, config: SolverConfig, R: float | None = None) -> GridFunction:
    """Laplace functional of the first hitting time of 0,
    K_L(r) = E^r e^{-gamma tau_0 + alpha int_0^tau_0 r}, by FD solve of the
    homogeneous equation with K_L(0) = K_L(R) = 1 and R doubled to convergence."""
    if spec.variant != "B":
        raise ValueError("compute_KL belongs to problem B")
    if not isinstance(spec.model, Vasicek):
        raise ValueError("compute_KL is implemented for the Vasicek model")
    _, u, _ = _kl_extended(spec, config, R)
    grid = config.grid
    return GridFunction(grid.r_min, grid.r_max, u[: grid.n_nodes])


def solve_problem_b(spec: ProblemSpec, config: SolverConfig, *, force: bool = False) -> Solution:
    """Problem B: the same double loop seeded at K_L with K(0) = 1 pinned.

    Runs on the K_L truncation grid with the finite-difference operator
    (the Gaussian quadrature kernel has no absorbed-at-zero variant) and
    asserts the bracketing K_L <= K <= K_L + Ntilde^{1-alpha}."""
    if spec.variant != "B":
        raise ValueError("solve_problem_b requires a variant-B spec")
    if not isinstance(spec.model, Vasicek):
        raise ValueError("problem B is implemented for the Vasicek model")
    report = classify(ProblemSpec(spec.model, spec.alpha, spec.gamma, "A"))
    if report.verdict is not Feasibility.FINITE and not force:
        raise InfeasibleProblem(
            f"feasibility verdict is {report.verdict.name}; pass force=True to solve anyway"
        )
    nodes, kl, _ = _kl_extended(spec, config, None)
    rate = robin_rate(spec)
    # Ntilde: the supersolution stopped at 0 (absorbing Dirichlet), Robin far out
    c0 = (spec.gamma - spec.alpha * nodes) / (1.0 - spec.alpha)
    ntil = fd_system(spec, nodes, c0, ("dirichlet", 0.0), ("robin", rate)).solve(
        np.ones(nodes.size)
    )
    upper = kl + np.power(np.maximum(ntil, 0.0), 1.0 - spec.alpha)

    grid = config.grid
    window = slice(0, grid.n_nodes)
    systems: dict[float, object] = {}

    def apply_b(lam: float, psi_values: np.ndarray) -> np.ndarray:
        if lam not in systems:
            systems[lam] = fd_system(
                spec,
                nodes,
                lam + spec.gamma - spec.alpha * nodes,
                ("dirichlet", 1.0),
                ("robin", rate),
            )
        return systems[lam].solve(psi_values)

    def pin(k_new: np.ndarray) -> None:
        k_new[0] = 1.0

    k, trace, snaps = _iterate(spec, config, apply_b, kl.copy(), window, upper, kl, post_step=pin)
    sol = _package(spec, config, nodes, window, k, upper, trace, snaps)
    sol.K.values[0] = 1.0
    sol.policy_c.values[0] = 1.0
    return sol


# ---------------------------------------------------------------------------
# policy and residual audits


def optimal_consumption(K: GridFunction, alpha: float, v: float = 1.0, r: float | None = None):
    """Feedback consumption C(r, v) = K(r)^{1/(alpha-1)} v.

    With r omitted, returns the full grid of consumption levels; the relative
    rate is the v = 1 profile."""
    if v <= 0:
        raise ValueError("wealth must be positive")
    if r is None:
        if np.any(K.values <= 0):
            raise ValueError("K must be strictly positive")
        return K.with_values(np.power(K.values, 1.0 / (alpha - 1.0)) * v)
    k = float(K(r))
    if k <= 0:
        raise ValueError("K must be strictly positive at the queried rate")
    return k ** (1.0 / (alpha - 1.0)) * v


def grid_derivatives(K: GridFunction) -> tuple[np.ndarray, np.ndarray]:
    """Central first and second differences on the interior nodes."""
    h = K.step
    v = K.values
    d1 = (v[2:] - v[:-2]) / (2.0 * h)
    d2 = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2
    return d1, d2


def hjb_residual(spec: ProblemSpec, K: GridFunction) -> tuple[GridFunction, GridFunction]:
    """Pointwise residual of Q K + (alpha r - gamma) K + (1-alpha) K^{alpha/(alpha-1)}
    on the interior nodes, raw and relative to 1 + |K|."""
    mid = K.values[1:-1]
    if np.any(mid <= 0):
        raise ValueError("K must be strictly positive on interior nodes")
    nodes = K.nodes[1:-1]
    d1, d2 = grid_derivatives(K)
    q = generator_apply(spec.model, mid, d1, d2, nodes)
    raw = q + (spec.alpha * state_rate(spec.model, nodes) - spec.gamma) * mid + (1.0 - spec.alpha) * np.power(
        mid, spec.alpha / (spec.alpha - 1.0)
    )
    rel = raw / (1.0 + np.abs(mid))
    gf = GridFunction(nodes[0], nodes[-1], raw)
    return gf, gf.with_values(rel)


def central_window(g: GridFunction) -> GridFunction:
    """The central half of a grid function's window (residual audit scope)."""
    span = g.r_max - g.r_min
    lo = g.r_min + 0.25 * span
    hi = g.r_max - 0.25 * span
    nodes = g.nodes
    mask = (nodes >= lo - 1e-12) & (nodes <= hi + 1e-12)
    idx = np.where(mask)[0]
    return GridFunction(nodes[idx[0]], nodes[idx[-1]], g.values[idx[0] : idx[-1] + 1])
