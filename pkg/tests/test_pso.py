import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from iabsim.channel import LinkDraws
from iabsim.errors import DecodeError
from iabsim.fixed_point import Allocation, solve_pa
from iabsim.network import Network
from iabsim.pso import (
    DeploymentProblem, PsoOptions, SwarmState, default_pb_options, default_penalty, enforce_bounds,
    fitness_theta, has_converged, inertia_at, init_swarm, run_pso, solve_pb, step,
)
from iabsim.scenario import Scenario

from conftest import make_network
from oracles import distributed_sinr


def sphere(x):
    return -np.sum(x**2, axis=1)


BOX = np.tile([-10.0, 10.0], (6, 1))


def test_zero_width_spread_puts_everyone_at_seed():
    y = np.arange(1.0, 7.0)
    sw = init_swarm(y, BOX, PsoOptions(particles=20, spread=(1.0, 1.0)), np.random.default_rng(0), sphere)
    assert np.array_equal(sw.positions, np.tile(y, (20, 1)))


def test_spread_interval_membership():
    y = np.array([1.0, 2.0, 3.0, 9.0, 0.5, 5.0])
    sw = init_swarm(y, BOX, PsoOptions(particles=300), np.random.default_rng(1), sphere)
    lo, hi = np.minimum(0.8 * y, BOX[:, 1]), np.minimum(1.2 * y, BOX[:, 1])
    assert np.all(sw.positions >= lo - 1e-12) and np.all(sw.positions <= hi + 1e-12)
    assert np.array_equal(sw.positions[0], y)


def test_init_deterministic_and_explore():
    y = np.ones(6)
    o = PsoOptions(particles=50, explore=0.4)
    a = init_swarm(y, BOX, o, np.random.default_rng(5), sphere)
    b = init_swarm(y, BOX, o, np.random.default_rng(5), sphere)
    assert np.array_equal(a.positions, b.positions)
    far = np.abs(a.positions[30:]).max(axis=1)
    assert np.mean(far > 1.2) > 0.5  # explorers leave the seed interval
    with pytest.raises(ValueError):
        init_swarm(np.ones(5), BOX, o, np.random.default_rng(0), sphere)


def test_init_places_extra_seeds():
    y = np.ones(6)
    seeds = [np.full(6, 2.0), np.full(6, -3.0)]
    sw = init_swarm(y, BOX, PsoOptions(particles=10), np.random.default_rng(0), sphere, seeds)
    assert np.array_equal(sw.positions[1], seeds[0]) and np.array_equal(sw.positions[2], seeds[1])


def test_step_without_forces_is_static():
    o = PsoOptions(particles=8, inertia=(0.0, 0.0), eta1=0.0, eta2=0.0)
    sw = init_swarm(np.ones(6), BOX, o, np.random.default_rng(0), sphere)
    sw.velocities[:] = 0.0
    nxt = step(sw, sphere, o, np.random.default_rng(1), BOX)
    assert np.array_equal(nxt.positions, sw.positions)
    assert np.all(nxt.velocities == 0)


def test_single_particle_at_best_keeps_inertia_only():
    o = PsoOptions(particles=1, inertia=(0.5, 0.5))
    x = np.array([[1.0, 2.0, 0, 0, 0, 0]])
    v = np.array([[0.1, -0.2, 0, 0, 0, 0]])
    sw = SwarmState(x, v, x.copy(), sphere(x), x[0].copy(), float(sphere(x)[0]))
    nxt = step(sw, sphere, o, np.random.default_rng(0), BOX)
    assert np.allclose(nxt.velocities, 0.5 * v)
    assert np.allclose(nxt.positions, x + 0.5 * v)


def test_inertia_schedule():
    o = PsoOptions(max_iter=101)
    assert inertia_at(o, 0) == pytest.approx(1.1)
    assert inertia_at(o, 100) == pytest.approx(0.1)
    assert inertia_at(o, 50) == pytest.approx(0.6)


def test_enforce_bounds_clamps_and_wraps():
    b = np.array([[0.0, 1.0], [0.0, 2 * np.pi]])
    x = np.array([[1.5, 7.0], [-0.5, -1.0]])
    v = np.ones_like(x)
    xn, vn = enforce_bounds(x, v, b, periodic=[False, True])
    assert np.allclose(xn[:, 0], [1.0, 0.0]) and np.all(vn[:, 0] == 0)
    assert np.allclose(xn[:, 1], [7.0 - 2 * np.pi, 2 * np.pi - 1.0]) and np.all(vn[:, 1] == 1)


@given(st.lists(st.floats(-1e3, 1e3), min_size=6, max_size=6))
def test_enforce_bounds_property(vals):
    x = np.array([vals])
    xn, _ = enforce_bounds(x, np.zeros_like(x), BOX)
    assert np.all(xn >= -10) and np.all(xn <= 10)


def test_fitness_theta_examples(rng):
    assert fitness_theta(7.5, 0, 0, 5.0, 5.0) == 7.5
    assert fitness_theta(10.0, 2, 0, 5.0, 1.0) == 0.0
    r, u, b = rng.uniform(0, 50), rng.integers(0, 10), rng.integers(0, 4)
    assert fitness_theta(r, u, b, 3.0, 4.0) == pytest.approx(r - 3.0 * u - 4.0 * b)
    assert default_penalty(1.0) == pytest.approx(10.0)


def test_has_converged_examples():
    assert has_converged([5.0] * 30, 20, 1e-3)
    rising = [1.1**i for i in range(30)]
    assert not has_converged(rising, 20, 1e-3)
    assert not has_converged([1.0] * 5, 20, 1e-3)  # too short


def test_sphere_benchmark_and_convergence():
    o = PsoOptions(particles=200, max_iter=500, min_iter=250, window=20, tol=1e-3, explore=1.0)
    for seed in range(5):
        r = np.random.default_rng(seed)
        res = run_pso(sphere, r.uniform(-10, 10, 6), BOX, o, r)
        assert np.linalg.norm(res.best) <= 1e-3
        assert res.converged and res.iterations <= 500
        assert has_converged(res.history, 20, 1e-3)
        assert all(b >= a for a, b in zip(res.history, res.history[1:]))


def test_options_validation():
    for bad in ({"particles": 0}, {"eta1": -1}, {"window": 0}, {"tol": 0}, {"max_iter": 0}, {"explore": 2}):
        with pytest.raises(ValueError):
            PsoOptions(**bad)


def test_default_pb_options():
    assert default_pb_options("distributed").window == 20
    assert default_pb_options("daa").window == 5


# --- deployment problem ----------------------------------------------------------


def test_variable_counts():
    net = make_network("daa")
    assert DeploymentProblem(net, np.zeros(25, dtype=int), PsoOptions()).size == 6 + 25 + 4
    net = make_network("distributed")
    assert DeploymentProblem(net, np.zeros(25, dtype=int), PsoOptions()).size == 12 + 25 + 4


def test_decode_respects_budgets(rng):
    net = make_network("distributed", num_users=10)
    w = rng.integers(0, 5, 10)
    prob = DeploymentProblem(net, w, PsoOptions())
    x = prob.bounds[:, 0] + (prob.bounds[:, 1] - prob.bounds[:, 0]) * rng.random((50, prob.size))
    _, p, p_bh = prob.decode(x)
    budgets = net.bs_budgets()
    for m in range(50):
        tot = Allocation(w, p[m], p_bh[m]).station_totals(5)
        assert np.all(tot <= budgets * (1 + 1e-12))
    with pytest.raises(DecodeError):
        prob.decode(np.ones((1, prob.size - 1)))
    with pytest.raises(DecodeError):
        prob.decode(np.full((1, prob.size), np.nan))
    with pytest.raises(DecodeError):
        DeploymentProblem(net, np.full(10, 7), PsoOptions())


def test_seeds_lie_in_bounds():
    net = make_network("daa", num_users=10)
    w = np.array([0, 1] * 5)
    prob = DeploymentProblem(net, w, PsoOptions())
    y = np.clip(np.concatenate([[0, 0, 1, 50, 50, 60], np.full(10, 0.1), np.full(4, 1.0)]),
                prob.bounds[:, 0], prob.bounds[:, 1])
    for s in prob.power_seeds(y):
        assert np.all(s >= prob.bounds[:, 0]) and np.all(s <= prob.bounds[:, 1])


def _small_net(seed):
    sc = Scenario(num_uavs=1, num_users=3, region=((-100.0, 100.0), (-100.0, 100.0)),
                  users=((60.0, 50.0, 0.0), (70.0, 40.0, 0.0), (-5.0, 10.0, 0.0)), users_fixed=True)
    return Network(sc, LinkDraws.generate(seed, 3, 1, sc.channel.num_paths))


def test_pb_monotone_best_and_grid_oracle():
    """1 UAV / 3 users: swarm fitness vs an exhaustive coarse grid of placements and powers."""
    net = _small_net(3)
    sc = net.scenario
    w = np.array([1, 1, 0])
    dep0 = np.array([[0.0, 0.0, 60.0]])
    alloc = solve_pa(net, dep0, rng=np.random.default_rng(0)).allocation
    alloc = Allocation(w, alloc.access_powers, alloc.backhaul_powers)
    res = solve_pb(net, w, dep0, alloc, default_pb_options("distributed"), np.random.default_rng(1))
    assert all(b >= a - 1e-12 for a, b in zip(res.history, res.history[1:]))

    e = default_penalty(sc.eps_u)
    levels_uav = sc.uav_max_power * np.array([0.01, 0.1, 0.5])
    levels_donor = sc.donor_max_power * np.array([0.001, 0.01, 0.1, 0.3])
    combos = np.array(list(itertools.product(levels_uav, levels_uav, levels_donor, levels_donor)))
    p = np.column_stack([combos[:, 0], combos[:, 1], combos[:, 2]])
    p_bh = combos[:, 3:4]
    ok = (p[:, 0] + p[:, 1] <= sc.uav_max_power) & (p[:, 2] + p_bh[:, 0] <= sc.donor_max_power)
    p, p_bh = p[ok], p_bh[ok]
    best = -np.inf
    for x in np.linspace(-100, 100, 5):
        for y in np.linspace(-100, 100, 5):
            for z in (20.0, 85.0, 150.0):
                pos = np.array([[x, y, z]])
                sinr, bh = distributed_sinr(net, pos, w, p, p_bh)
                gated = bh[:, 0] < sc.eps_d
                rate = 0.5 * np.log2(1 + sinr[:, 0]) + 0.5 * np.log2(1 + sinr[:, 1])
                rate = np.where(gated, 0.0, rate) + np.log2(1 + sinr[:, 2])
                uv = np.sum(sinr < sc.eps_u * (1 - 1e-6), axis=1)
                bv = (bh[:, 0] < sc.eps_d * (1 - 1e-6)).astype(int)
                best = max(best, float(np.max(rate - e * uv - e * bv)))
    assert best > 0
    assert res.fitness >= 0.95 * best
