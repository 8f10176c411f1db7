import numpy as np
import pytest

from consrate import (
    Constant,
    FiniteDifference,
    GridFunction,
    InfeasibleProblem,
    InvariantInterval,
    MonotonicityError,
    ProblemSpec,
    Quadrature,
    SolverConfig,
    Vasicek,
    clamp_F,
    compute_KL,
    hjb_residual,
    lambda_schedule,
    optimal_consumption,
    solve_problem_a,
    solve_problem_b,
    supersolution_N,
)
from consrate.hjb import IterationTrace, TraceStep, _iterate, central_window

VAS = Vasicek(0.03, 0.5, 0.02)
PAPER_A = ProblemSpec(VAS, 0.5, 1.5304, "A")
PAPER_B = ProblemSpec(VAS, 0.5, 1.5304, "B")


def small_quad():
    return Quadrature(dt=0.02, t_max=10.0, dy=0.0028)


def test_clamp_examples():
    assert clamp_F(65, 0.5, 0.25) == pytest.approx(0.5 / 0.25)
    assert clamp_F(65, 0.5, 0.0) == pytest.approx(65**0.5)
    xc = 65 ** (0.5 - 1.0)
    assert clamp_F(65, 0.5, xc) == pytest.approx((1 - 0.5) * 65**0.5, rel=1e-12)


def test_clamp_continuity_at_branch():
    for m in (1, 5, 65):
        xc = m ** (0.5 - 1.0)
        below = clamp_F(m, 0.5, xc * (1 - 1e-9))
        above = clamp_F(m, 0.5, xc * (1 + 1e-9))
        assert below == pytest.approx(above, rel=1e-7)


def test_clamp_lipschitz_constant():
    m, alpha = 7, 0.5
    x = np.linspace(0.0, 3.0, 4001)
    f = clamp_F(m, alpha, x)
    slopes = np.abs(np.diff(f) / np.diff(x))
    assert np.max(slopes) <= alpha * m * (1 + 1e-9)


def test_clamp_rejects_negative():
    with pytest.raises(ValueError):
        clamp_F(65, 0.5, -0.1)


def test_lambda_schedule():
    cfg = SolverConfig(grid=GridFunction.zeros(0, 0.15, 11), backend=FiniteDifference(), eps2=1e-5)
    assert lambda_schedule(PAPER_A, cfg, 65) == pytest.approx(32.50001)
    cfg2 = SolverConfig(
        grid=cfg.grid, backend=cfg.backend, eps1=0.1, eps2=1e-5, theta_bound=2.0
    )
    spec = ProblemSpec(VAS, 0.5, 1.0, "A")
    assert lambda_schedule(spec, cfg2, 1) == pytest.approx(1.1)
    cfg3 = SolverConfig(grid=cfg.grid, backend=cfg.backend, eps2=1e-12)
    assert lambda_schedule(PAPER_A, cfg3, 1) == pytest.approx(0.5)


def constant_config(**kw):
    args = dict(
        grid=GridFunction.zeros(0.0, 0.15, 31),
        backend=FiniteDifference(),
        m_max=30,
        n_max=200,
        tol_n=1e-9,
        tol_m=1e-8,
        pad=0.0,
    )
    args.update(kw)
    return SolverConfig(**args)


def test_constant_oracle():
    spec = ProblemSpec(Constant(0.05), 0.5, 0.1, "A")
    sol = solve_problem_a(spec, constant_config())
    truth = ((0.1 - 0.5 * 0.05) / 0.5) ** -0.5
    assert np.max(np.abs(sol.K.values - truth)) <= 1e-4 * truth
    assert sol.K.values.max() - sol.K.values.min() <= 1e-6 * truth
    assert np.allclose(sol.policy_c.values, 0.15, rtol=1e-6)


def test_solver_gates_on_feasibility():
    with pytest.raises(InfeasibleProblem):
        solve_problem_a(ProblemSpec(Constant(0.05), 0.5, 0.02, "A"), constant_config())
    with pytest.raises(ValueError):
        solve_problem_a(PAPER_B, constant_config())  # wrong variant


def test_unknown_verdict_solvable_with_force():
    spec = ProblemSpec(VAS, 0.5, 0.05, "A")  # between gamma_1 and gamma_2
    cfg = SolverConfig(
        grid=GridFunction.zeros(0.0, 0.15, 39),
        backend=FiniteDifference(),
        m_max=8,
        n_max=40,
        pad=0.02,
    )
    with pytest.raises(InfeasibleProblem):
        solve_problem_a(spec, cfg)
    sol = solve_problem_a(spec, cfg, force=True)
    assert np.all(sol.K.values > 0)


def vasicek_config(**kw):
    args = dict(
        grid=GridFunction.zeros(0.0, 0.15, 39),
        backend=small_quad(),
        m_max=8,
        n_max=10,
        pad=0.04,
    )
    args.update(kw)
    return SolverConfig(**args)


def test_vasicek_solve_invariants():
    sol = solve_problem_a(PAPER_A, vasicek_config())
    assert sol.trace.worst_min_increment >= -1e-5
    assert sol.trace.worst_bound_violation <= 1e-5
    assert np.all(sol.K.values > 0)
    assert np.all(sol.K.values <= sol.N_pow.values + 1e-5)
    assert np.all(np.diff(sol.K.values) > 0)  # increasing in r, like N
    # first iterate of the first clamp level is strictly positive
    assert np.all(sol.iterates[0].values > 0)


def test_lambda_schedule_independence():
    spec = ProblemSpec(Constant(0.05), 0.5, 0.1, "A")
    base = solve_problem_a(spec, constant_config(eps2=1e-5))
    doubled = solve_problem_a(spec, constant_config(eps2=2e-5))
    assert np.max(np.abs(base.K.values - doubled.K.values)) < 5 * 1e-8


def test_monotonicity_guard_aborts():
    # white-box: a resolvent that loses mass mid-run must trip the guard
    calls = {"n": 0}

    def shrinking_resolvent(lam, psi):
        calls["n"] += 1
        scale = 1.0 if calls["n"] < 3 else 0.2
        return scale * psi / (lam + PAPER_A.gamma)

    cfg = vasicek_config(backend=FiniteDifference())
    with pytest.raises(MonotonicityError) as err:
        _iterate(
            PAPER_A,
            cfg,
            shrinking_resolvent,
            np.zeros(11),
            slice(0, 11),
            None,
            None,
        )
    assert err.value.trace is not None and len(err.value.trace.steps) >= 3


def test_hjb_residual_constant_oracle_zero():
    spec = ProblemSpec(Constant(0.05), 0.5, 0.1, "A")
    truth = ((0.1 - 0.5 * 0.05) / 0.5) ** -0.5
    K = GridFunction(0.0, 0.15, np.full(31, truth))
    raw, rel = hjb_residual(spec, K)
    assert np.max(np.abs(raw.values)) <= 1e-12


def test_supersolution_profile_residual_sign():
    grid = GridFunction.zeros(-0.05, 0.2, 126)
    n_pow = grid.with_values(np.power(supersolution_N(PAPER_A, grid.nodes), 0.5))
    raw, rel = hjb_residual(PAPER_A, n_pow)
    assert np.max(rel.values) <= 1e-6  # supersolution: residual is nonpositive
    assert np.min(rel.values) >= -1e-3


def test_compute_KL_values():
    cfg = vasicek_config(backend=FiniteDifference(), grid=GridFunction.zeros(0.0, 0.15, 76))
    kl = compute_KL(PAPER_B, cfg)
    assert kl.values[0] == pytest.approx(1.0, abs=1e-12)
    assert np.all(kl.values > 0)
    assert np.all(np.diff(kl.values) < 0)  # farther from 0 means heavier discounting


def test_compute_KL_requires_variant_b():
    with pytest.raises(ValueError):
        compute_KL(PAPER_A, vasicek_config())


def test_problem_b_pinned_and_bracketed():
    cfg = vasicek_config(backend=FiniteDifference(), n_max=40, grid=GridFunction.zeros(0.0, 0.15, 76))
    sol = solve_problem_b(PAPER_B, cfg)
    kl = compute_KL(PAPER_B, cfg)
    assert sol.K.values[0] == 1.0
    assert np.all(kl.values - sol.K.values <= 1e-5)
    assert np.all(sol.K.values - sol.N_pow.values <= 1e-5)
    assert sol.trace.worst_min_increment >= -1e-5


def test_problem_b_requires_b_spec():
    with pytest.raises(ValueError):
        solve_problem_b(PAPER_A, vasicek_config())


def test_optimal_consumption():
    K = GridFunction(0.0, 0.15, np.full(11, 1.0))
    policy = optimal_consumption(K, 0.5)
    assert np.allclose(policy.values, 1.0)
    assert optimal_consumption(K, 0.5, v=2.0, r=0.05) == pytest.approx(2.0)
    truth = ((0.1 - 0.5 * 0.05) / 0.5) ** -0.5
    Kc = GridFunction(0.0, 0.15, np.full(11, truth))
    assert optimal_consumption(Kc, 0.5, v=1.0, r=0.05) == pytest.approx(0.15)
    # linear in wealth
    assert optimal_consumption(Kc, 0.5, v=4.0, r=0.05) == pytest.approx(
        2 * optimal_consumption(Kc, 0.5, v=2.0, r=0.05)
    )
    bad = GridFunction(0.0, 0.15, np.zeros(11))
    with pytest.raises(ValueError):
        optimal_consumption(bad, 0.5)


def test_interval_model_solve():
    spec = ProblemSpec(InvariantInterval(0.0, 0.1, 1.0, 10.0), 0.5, 0.1, "A")
    cfg = SolverConfig(
        grid=GridFunction.zeros(0.0, 0.1, 201),
        backend=FiniteDifference(),
        m_max=20,
        n_max=60,
        tol_n=1e-9,
        pad=0.0,
    )
    sol = solve_problem_a(spec, cfg)
    assert sol.trace.worst_min_increment >= -1e-6
    assert np.all(sol.K.values > 0)
    assert np.all(sol.K.values <= sol.N_pow.values + 1e-6)
    raw, rel = hjb_residual(spec, sol.K)
    assert np.max(np.abs(central_window(rel).values)) <= 1e-6


def test_trace_rows_schema():
    trace = IterationTrace()
    trace.append(TraceStep(1, 1, 0.5, 0.0, 0.0, 0.01))
    rows = trace.rows()
    assert rows == [(1, 1, 0.5, 0.0, 0.0, 0.01)]


def test_central_window():
    g = GridFunction(0.0, 0.15, np.arange(16.0))
    c = central_window(g)
    assert c.r_min == pytest.approx(0.04)
    assert c.r_max == pytest.approx(0.11)
