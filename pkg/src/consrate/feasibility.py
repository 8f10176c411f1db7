"""Classifies problems as provably finite, provably infinite, or unknown, and
supplies the constant-rate closed form that anchors the solver's oracles."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import InfeasibleProblem
from .gaussian import gamma_thresholds, rho_decay
from .models import Constant, DriftedBM, GeometricBM, InvariantInterval, ProblemSpec, Vasicek


class Feasibility(enum.Enum):
    FINITE = "finite"
    INFINITE = "infinite"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class FeasibilityReport:
    """Verdict plus whatever certificate backs it.

    ``divergence_witness`` holds the coefficients (c1, c2, c3) of the exponent
    polynomial c1 t + c2 t^2 + c3 t^3 driving an infinite value (reference
    start r = 0 for the drifted BM, r = 1 for the geometric BM, zero
    consumption; the verdict does not depend on the start because the leading
    coefficient is positive for every admissible one). ``sufficient_pair`` is
    a (delta, p) certificate from the Hoelder-condition search, when found.
    """

    verdict: Feasibility
    reason: str
    thresholds: tuple[float, float] | None = None
    rho: float | None = None
    divergence_witness: tuple[float, float, float] | None = None
    sufficient_pair: tuple[float, float] | None = None


def classify(spec: ProblemSpec) -> FeasibilityReport:
    """Feasibility verdict for the value function of the given problem.

    Only proven directions are asserted: Vasicek below its thresholds and the
    interval model with b >= gamma/alpha stay Unknown rather than Infinite.
    """
    model = spec.model
    al, g = spec.alpha, spec.gamma
    if isinstance(model, Constant):
        margin = g - al * model.r
        if margin > 0:
            return FeasibilityReport(
                Feasibility.FINITE, f"gamma - alpha r = {margin:.6g} > 0 (closed form applies)"
            )
        return FeasibilityReport(
            Feasibility.INFINITE,
            "gamma - alpha r <= 0: vanishing consumption rates push the functional to infinity",
            divergence_witness=(max(al * model.r - g, 0.0), 0.0, 0.0),
        )
    if isinstance(model, Vasicek):
        g1, g2 = gamma_thresholds(spec)
        if g > max(g1, g2):
            return FeasibilityReport(
                Feasibility.FINITE,
                f"gamma = {g:.6g} exceeds max(gamma_1, gamma_2) = {max(g1, g2):.6g}",
                thresholds=(g1, g2),
                rho=rho_decay(spec),
                sufficient_pair=sufficient_condition_search(spec),
            )
        return FeasibilityReport(
            Feasibility.UNKNOWN,
            f"gamma = {g:.6g} is not above max(gamma_1, gamma_2) = {max(g1, g2):.6g}; "
            "the sufficient conditions are inconclusive",
            thresholds=(g1, g2),
        )
    if isinstance(model, InvariantInterval):
        if model.b < g / al:
            return FeasibilityReport(
                Feasibility.FINITE, f"rate cap b = {model.b:.6g} below gamma/alpha = {g / al:.6g}"
            )
        return FeasibilityReport(
            Feasibility.UNKNOWN,
            "b >= gamma/alpha: the bounded-interval sufficient condition fails",
        )
    if isinstance(model, DriftedBM):
        return FeasibilityReport(
            Feasibility.INFINITE,
            "integrated Brownian motion contributes a t^3 exponent that beats any discount",
            divergence_witness=(-g, al * model.mu / 2.0, al**2 * model.sigma**2 / 6.0),
        )
    if isinstance(model, GeometricBM):
        return FeasibilityReport(
            Feasibility.INFINITE,
            "e^y > y bounds the geometric rate below an integrated BM, whose t^3 exponent diverges",
            divergence_witness=(
                -g,
                al * (model.mu - 0.5 * model.sigma**2) / 2.0,
                al**2 * model.sigma**2 / 6.0,
            ),
        )
    raise TypeError(f"unknown model {model!r}")


def constant_rate_solution(alpha: float, gamma: float, r: float, v: float) -> tuple[float, float]:
    """Closed-form value and relative consumption rate for a constant rate:
    Phi = ((gamma - alpha r)/(1 - alpha))^{alpha-1} v^alpha and
    c_hat = (gamma - alpha r)/(1 - alpha). Wealth then decays exactly as
    V_t = e^{(r - gamma) t/(1 - alpha)} v."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if v <= 0:
        raise ValueError("wealth must be positive")
    margin = gamma - alpha * r
    if margin <= 0:
        raise InfeasibleProblem("gamma - alpha r <= 0: the constant-rate value is infinite")
    c_hat = margin / (1.0 - alpha)
    return c_hat ** (alpha - 1.0) * v**alpha, c_hat


def necessary_condition_probe(spec: ProblemSpec, c: float) -> str:
    """Closed-form divergence test of E^r int e^{-gamma t + alpha int (r_s - c) ds} dt.

    Returns "divergent" only when divergence is certified (a positive
    super-linear exponent term, or a nonnegative asymptotic linear rate);
    otherwise "finite". A divergent probe falsifies finiteness of the value.
    """
    if c <= 0:
        raise ValueError("the probe consumption rate must be positive")
    model = spec.model
    al, g = spec.alpha, spec.gamma
    if isinstance(model, (DriftedBM, GeometricBM)):
        return "divergent"
    if isinstance(model, Constant):
        rate = al * model.r - g - al * c
    elif isinstance(model, Vasicek):
        rate = al * model.a / model.b + al**2 * model.sigma**2 / (2.0 * model.b**2) - g - al * c
    elif isinstance(model, InvariantInterval):
        # only the guaranteed lower bound r >= a certifies divergence
        rate = al * model.a - g - al * c
    else:
        raise TypeError(f"unknown model {model!r}")
    return "divergent" if rate >= 0 else "finite"


def sufficient_condition_search(spec: ProblemSpec) -> tuple[float, float] | None:
    """Search for (delta, p) with p in (1, 1/alpha) making
    E int e^{-(gamma-delta) q t + alpha q int r} dt finite, q = p/(p-1).

    A coarse existence probe on fixed grids: p in {1 + k (1/alpha - 1)/20},
    delta in {gamma 2^{-j}}. Returns the first satisfying pair or None.
    """
    model = spec.model
    if not isinstance(model, Vasicek):
        raise ValueError("the sufficient-condition search targets the Vasicek model")
    al, g = spec.alpha, spec.gamma
    if g <= 0:
        return None
    for k in range(1, 20):
        p = 1.0 + k * (1.0 / al - 1.0) / 20.0
        q = p / (p - 1.0)
        for j in range(1, 21):
            delta = g * 2.0**-j
            rate = al * q * model.a / model.b + (al * q) ** 2 * model.sigma**2 / (
                2.0 * model.b**2
            ) - (g - delta) * q
            if rate < 0:
                return delta, p
    return None
