import numpy as np
import pytest

import oracles
from fjcontrol import (
    CostParams,
    MpcConfig,
    MpcSolver,
    Network,
    SteadyStateError,
    build_matrices,
    generate_network_a,
    mb_steady_state,
    mf_control,
    mf_steady_state,
    mitigation_cost,
    mpc_control,
    step,
)


@pytest.fixture
def unit_system():
    net = Network(n=1, w=[[0.0]], w_rec=[1.0], lambda_stub=[0.5], x0=[1.0])
    return net, build_matrices(net)


def _random_stable_network(rng):
    n = int(rng.integers(3, 16))
    return generate_network_a(
        n,
        kappa_u=float(rng.uniform(0.3, 1.0)),
        kappa_r=float(rng.uniform(0.5, 1.0)),
        lambda_low=float(rng.uniform(0.02, 0.1)),
        lambda_high=float(rng.uniform(0.2, 0.6)),
        beta_alpha=float(rng.uniform(1.0, 8.0)),
        beta_beta=float(rng.uniform(1.0, 8.0)),
        seed=int(rng.integers(0, 2**31)),
    )


# --- model-free controller ---------------------------------------------------


def test_mf_penalty_free_is_the_mean():
    assert mf_control([0.2, 0.4, 0.6], 0, 0, CostParams(rho=0.0)) == pytest.approx(0.4)


def test_mf_direct_substitution():
    assert mf_control([0.6, 0.6], 0, 0, CostParams(rho=1.0)) == pytest.approx(0.3)


def test_mf_matches_grid_argmin():
    rng = np.random.default_rng(2)
    for _ in range(50):
        x = rng.random(int(rng.integers(2, 12)))
        rho = float(rng.choice([0.0, 1.0, 2.5]))
        delta = float(rng.choice([0.0, 0.5]))
        age = int(rng.integers(0, 6))
        params = CostParams(rho=rho, delta_novelty=delta, window_z=5)
        u = mf_control(x, age, 0, params)
        u_ref = oracles.mitigation_grid_argmin(x, rho, delta, age)
        assert abs(u - u_ref) <= 1e-3


def test_mf_is_cost_optimal_on_a_grid():
    rng = np.random.default_rng(3)
    grid = np.linspace(0.0, 1.0, 1001)
    for _ in range(60):
        x = rng.random(5)
        params = CostParams(
            rho=float(rng.random() * 4),
            delta_novelty=float(rng.random()),
            window_z=5,
        )
        age = int(rng.integers(0, 6))
        u = mf_control(x, age, 0, params)
        best = mitigation_cost(x, u, age, 0, params)
        for v in grid:
            assert best <= mitigation_cost(x, float(v), age, 0, params) + 1e-9


# --- steady states -----------------------------------------------------------


def test_mf_steady_state_scalar(unit_system):
    net, m = unit_system
    ss = mf_steady_state(m, net, CostParams(rho=0.0))
    assert ss.x_star[0] == pytest.approx(1.0, abs=1e-12)
    assert ss.u_star == pytest.approx(1.0, abs=1e-12)


def test_mf_steady_state_fully_stubborn_network():
    net = Network(
        n=3, w=np.zeros((3, 3)), w_rec=np.zeros(3),
        lambda_stub=np.ones(3), x0=[0.1, 0.6, 0.9],
    )
    m = build_matrices(net)
    for rho in (0.0, 2.5):
        ss = mf_steady_state(m, net, CostParams(rho=rho))
        assert np.max(np.abs(ss.x_star - net.x0)) <= 1e-12


def test_mf_steady_state_agrees_with_forward_iteration(matrices_a, network_a):
    params = CostParams(rho=2.5)
    ss = mf_steady_state(matrices_a, network_a, params)
    iterated = oracles.fixed_point_by_iteration(matrices_a, params, age=0, steps=2000)
    assert np.max(np.abs(ss.x_star - iterated)) <= 1e-10


@pytest.mark.xfail(
    strict=True,
    reason="Closed-loop contraction for the standard 100-user configuration is ~0.95, so "
    "100 steps leave an error of a few 1e-3; 1e-6 needs roughly 260+ steps. "
    "See the forward-convergence test at t=400 below for the attainable check.",
)
def test_mf_forward_simulation_reaches_fixed_point_by_100_steps(matrices_a, network_a):
    params = CostParams(rho=2.5)
    ss = mf_steady_state(matrices_a, network_a, params)
    x = network_a.x0.copy()
    for t in range(100):
        x = step(matrices_a, x, mf_control(x, t, t, params))
    assert np.max(np.abs(x - ss.x_star)) <= 1e-6


def test_mf_forward_simulation_reaches_fixed_point_eventually(matrices_a, network_a):
    params = CostParams(rho=2.5)
    ss = mf_steady_state(matrices_a, network_a, params)
    x = network_a.x0.copy()
    for t in range(400):
        x = step(matrices_a, x, mf_control(x, t, t, params))
    assert np.max(np.abs(x - ss.x_star)) <= 1e-6


def test_mf_closed_loop_error_is_eventually_monotone(matrices_a, network_a):
    params = CostParams(rho=0.5)
    ss = mf_steady_state(matrices_a, network_a, params)
    x = network_a.x0.copy()
    errs = []
    for t in range(150):
        x = step(matrices_a, x, mf_control(x, t, t, params))
        errs.append(np.max(np.abs(x - ss.x_star)))
    tail = np.array(errs[30:])
    assert np.all(np.diff(tail) <= 1e-12)


def test_mb_steady_state_scalar_kkt(unit_system):
    net, m = unit_system
    ss = mb_steady_state(m, net, CostParams(rho=0.0))
    assert ss.u_star == pytest.approx(1.0, abs=1e-12)
    assert ss.x_star[0] == pytest.approx(1.0, abs=1e-12)


def test_mb_scalar_matches_numerical_minimization(unit_system):
    # cross-check the interior formula against a scan of the cost along the
    # equilibrium line x = v u + y
    net, m = unit_system
    for rho in (0.0, 0.4, 2.0):
        params = CostParams(rho=rho)
        ss = mb_steady_state(m, net, params)
        v = np.linalg.solve(np.eye(1) - m.a, m.b)
        y = np.linalg.solve(np.eye(1) - m.a, m.anchor)
        grid = np.linspace(0.0, 1.0, 200_001)
        vals = (v[0] * grid + y[0] - grid) ** 2 + rho * 1 * grid ** 2
        assert abs(ss.u_star - grid[np.argmin(vals)]) <= 1e-5


def test_mb_huge_penalty_silences_recommender(matrices_a, network_a):
    ss = mb_steady_state(matrices_a, network_a, CostParams(rho=1e9))
    assert ss.u_star <= 1e-6
    y = np.linalg.solve(np.eye(network_a.n) - matrices_a.a, matrices_a.anchor)
    assert np.max(np.abs(ss.x_star - y)) <= 1e-6


def test_mb_steady_state_satisfies_equilibrium():
    rng = np.random.default_rng(4)
    for _ in range(25):
        net = _random_stable_network(rng)
        m = build_matrices(net)
        params = CostParams(
            rho=float(rng.random() * 5),
            delta_novelty=float(rng.choice([0.0, 0.5])),
            window_z=5,
        )
        age = int(rng.integers(0, 6))
        ss = mb_steady_state(m, net, params, age=age)
        residual = m.a @ ss.x_star + m.b * ss.u_star + m.anchor - ss.x_star
        assert np.max(np.abs(residual)) <= 1e-10
        assert 0.0 <= ss.u_star <= 1.0


def test_mb_cost_never_exceeds_mf_cost():
    rng = np.random.default_rng(6)
    for _ in range(25):
        net = _random_stable_network(rng)
        m = build_matrices(net)
        params = CostParams(rho=float(rng.random() * 5))
        mb = mb_steady_state(m, net, params)
        mf = mf_steady_state(m, net, params)
        cost_mb = mitigation_cost(mb.x_star, mb.u_star, 0, 0, params)
        cost_mf = mitigation_cost(mf.x_star, mf.u_star, 0, 0, params)
        assert cost_mb <= cost_mf + 1e-9


def test_singular_system_raises():
    # lambda = 0 everywhere with a row-stochastic closed loop makes I - F singular
    net = Network(
        n=2, w=[[0.0, 0.5], [0.5, 0.0]], w_rec=[0.5, 0.5],
        lambda_stub=[0.0, 0.0], x0=[0.5, 0.5],
    )
    m = build_matrices(net)
    with pytest.raises((SteadyStateError, np.linalg.LinAlgError)):
        mf_steady_state(m, net, CostParams(rho=0.0))


# --- receding-horizon controller ---------------------------------------------


def test_mpc_at_equilibrium_returns_equilibrium_control(matrices_a, network_a):
    params = CostParams(rho=2.5)
    cfg = MpcConfig(horizon=50, terminal_weight=1e3)
    target = mb_steady_state(matrices_a, network_a, params)
    u = mpc_control(matrices_a, target.x_star, target, 0, 0, params, cfg)
    assert abs(u - target.u_star) <= 1e-3


def test_mpc_single_step_no_penalty_reduces_to_the_mean():
    net = generate_network_a(5, 0.8, 0.9, 0.05, 0.3, 3.0, 3.0, seed=1)
    m = build_matrices(net)
    params = CostParams(rho=0.0)
    cfg = MpcConfig(horizon=1, terminal_weight=0.0)
    target = mb_steady_state(m, net, params)
    x = np.array([0.2, 0.3, 0.4, 0.6, 0.8])
    u = mpc_control(m, x, target, 0, 0, params, cfg)
    assert u == pytest.approx(float(x.mean()), abs=1e-8)


def test_mpc_matches_exhaustive_oracle_on_small_instance():
    rng = np.random.default_rng(8)
    for trial in range(5):
        net = generate_network_a(4, 0.8, 0.9, 0.05, 0.4, 3.0, 3.0,
                                 seed=int(rng.integers(0, 1000)))
        m = build_matrices(net)
        params = CostParams(rho=float(rng.random() * 2))
        cfg = MpcConfig(horizon=5, terminal_weight=50.0, kkt_tolerance=1e-12)
        target = mb_steady_state(m, net, params)
        x_now = rng.random(4)

        solver = MpcSolver(m, target, params, cfg)
        u0 = solver.control(x_now, 0, 0)
        useq = solver.last_diagnostics.u

        # enumerate every bound-activity pattern of the same horizon problem
        pen = params.rho * 4
        h = solver._base_h + 2.0 * pen * np.eye(5)
        g = 2.0 * (solver._stack.T @ solver._offsets(x_now))
        u_ref, _ = oracles.qp_box_active_set(h, g, 0.0, 1.0)

        f_solver = oracles.horizon_objective_by_simulation(
            m, x_now, useq, target, params, 0, cfg.terminal_weight)
        f_ref = oracles.horizon_objective_by_simulation(
            m, x_now, u_ref, target, params, 0, cfg.terminal_weight)
        assert f_solver <= f_ref + 1e-6
        assert abs(u0 - u_ref[0]) <= 1e-5


def test_mpc_output_stays_in_box(matrices_a, network_a):
    params = CostParams(rho=0.0)
    cfg = MpcConfig(horizon=10, terminal_weight=1e3)
    target = mb_steady_state(matrices_a, network_a, params)
    solver = MpcSolver(matrices_a, target, params, cfg)
    rng = np.random.default_rng(10)
    for t in range(5):
        u = solver.control(rng.random(network_a.n), t, t)
        assert 0.0 <= u <= 1.0
