import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from risthz.errors import CostGuardError, DomainError
from risthz.ris_sio import (RisConfig, RisEnvironment, SwarmConfig, aligned_phases, brute_force,
                            continuous_bound, make_environment, measure_fitness, pso_optimize,
                            secular_roots, sio_optimize, true_fitness)
from risthz.thz_channel import Misalignment, misalign_moment

MIS = Misalignment.from_shape(0.5, 2.0)


def _toy(g1, g2, **kw):
    return RisEnvironment(np.asarray(g1), np.asarray(g2), 1.0, MIS, **kw)


@pytest.fixture(scope="module")
def env3(hops20):
    return make_environment(*hops20, 3, MIS, seed=4)


def test_fitness_worked_example():
    env = _toy([1.0, 1j], [2.0, 1.0])
    scale = misalign_moment(1.0, MIS)  # A_o gamma^2 / (gamma^2 + 1) = 1/3
    assert scale == pytest.approx(1 / 3, rel=1e-14)
    # 2 e^{i0} + i e^{i phi}: aligned at phi = -pi/2, opposed at phi = pi/2
    assert true_fitness(env, [0.0, -math.pi / 2]) == pytest.approx(3 * scale, rel=1e-14)
    assert true_fitness(env, [0.0, math.pi / 2]) == pytest.approx(1 * scale, rel=1e-14)
    assert continuous_bound(env) == pytest.approx(3 * scale, rel=1e-14)


def test_aligned_phases_reach_bound(env3):
    assert true_fitness(env3, aligned_phases(env3)) == pytest.approx(continuous_bound(env3),
                                                                      rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 2 * math.pi), min_size=3, max_size=3))
def test_fitness_never_exceeds_bound(phases):
    env = _toy([1.0, 0.5j, -2.0], [0.3, 1 + 1j, 0.7])
    assert true_fitness(env, phases) <= continuous_bound(env) * (1 + 1e-12)


def test_batch_fitness_matches_rows(env3):
    rng = np.random.default_rng(0)
    batch = rng.uniform(0, 2 * math.pi, (5, 3))
    assert np.allclose(true_fitness(env3, batch), [true_fitness(env3, r) for r in batch])


def test_brute_force_single_element():
    env = _toy([np.exp(0.3j)], [1.0])
    ph, val = brute_force(env, RisConfig.from_levels(1, 4))
    # nearest lattice point to -0.3 is 0
    assert ph[0] == 0.0
    assert val == pytest.approx(continuous_bound(env), rel=1e-14)


def test_brute_force_two_elements_by_hand():
    env = _toy([1.0, np.exp(2.0j)], [1.0, 1.0])
    ris = RisConfig.from_levels(2, 4)
    ph, val = brute_force(env, ris)
    grid = [(a, b) for a in range(4) for b in range(4)]
    ref = max(abs(np.exp(1j * a * math.pi / 2) + np.exp(1j * (2.0 + b * math.pi / 2)))
              for a, b in grid)
    assert val == pytest.approx(ref * misalign_moment(1.0, MIS), rel=1e-14)


def test_brute_force_guards(env3):
    with pytest.raises(DomainError):
        brute_force(env3, RisConfig(3, 0.0))
    big = _toy(np.ones(12), np.ones(12))
    with pytest.raises(CostGuardError):
        brute_force(big, RisConfig.from_levels(12, 4))


def test_sio_finds_small_optimum(env3):
    ris = RisConfig.from_levels(3, 4)
    _, bf = brute_force(env3, ris)
    res = sio_optimize(env3, ris, SwarmConfig(max_iter=50, seed=1))
    assert res.best_fitness == pytest.approx(bf, rel=1e-12)


def test_swarm_size_schedule():
    cfg = SwarmConfig(n_begin=30, n_end=10, max_iter=100)
    sizes = [cfg.swarm_size(k) for k in range(101)]
    assert sizes[0] == 30 and sizes[-1] == 10
    assert sizes[50] == 20
    assert all(a >= b for a, b in zip(sizes, sizes[1:]))
    res = sio_optimize(_toy(np.ones(4), np.ones(4)), RisConfig(4), SwarmConfig(max_iter=20))
    assert [r["n_particles"] for r in res.trace[1:]] == [cfg.n_begin - (k * 20) // 20
                                                         for k in range(0, 20)]


def test_inertia_schedule():
    cfg = SwarmConfig(max_iter=10)
    assert cfg.omega(0) == 0.9 and cfg.omega(10) == pytest.approx(0.4, abs=1e-15)


@pytest.mark.parametrize("opt", [sio_optimize, pso_optimize])
def test_lattice_closure_and_monotone_trace(hops20, opt):
    env = make_environment(*hops20, 12, MIS, seed=9)
    ris = RisConfig(12, math.pi / 10)
    res = opt(env, ris, SwarmConfig(max_iter=60, seed=3))
    steps = res.best_phases / ris.delta_theta
    assert np.allclose(steps, np.round(steps), atol=1e-9)
    assert np.all((steps >= -1e-9) & (steps < ris.levels))
    ratios = [r["ratio_to_bound"] for r in res.trace]
    assert all(b >= a - 1e-15 for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] <= 1 + 1e-12
    assert res.max_rounding_residual <= 0.5 + 1e-12


def test_continuous_mode_positions_in_circle(hops20):
    env = make_environment(*hops20, 8, MIS, seed=2)
    res = sio_optimize(env, RisConfig(8, 0.0), SwarmConfig(max_iter=40, seed=0))
    assert np.all((res.best_phases >= 0) & (res.best_phases < 2 * math.pi))
    assert res.max_rounding_residual == 0.0


def test_determinism(hops20):
    env_a = make_environment(*hops20, 10, MIS, seed=5)
    env_b = make_environment(*hops20, 10, MIS, seed=5)
    cfg = SwarmConfig(max_iter=30, seed=11)
    a = sio_optimize(env_a, RisConfig(10), cfg)
    b = sio_optimize(env_b, RisConfig(10), cfg)
    assert np.array_equal(a.best_phases, b.best_phases)
    assert a.trace == b.trace


def test_measurement_noise_averaging():
    env = _toy([1.0], [1.0], meas_noise_sigma=0.1, meas_avg_count=100, noise_seed=0)
    reads = np.array([measure_fitness(env, [0.0]) for _ in range(2000)])
    assert reads.std() == pytest.approx(0.01, rel=0.1)
    assert reads.mean() == pytest.approx(true_fitness(env, [0.0]), abs=1e-3)


def test_iterations_to():
    env = _toy(np.ones(4), np.ones(4))
    res = sio_optimize(env, RisConfig(4), SwarmConfig(max_iter=30, seed=0))
    it = res.iterations_to(0.5)
    assert res.trace[it]["ratio_to_bound"] >= 0.5
    assert math.isinf(res.iterations_to(2.0))


def test_trace_csv(tmp_path, env3):
    res = sio_optimize(env3, RisConfig(3), SwarmConfig(max_iter=5))
    p = tmp_path / "t.csv"
    res.write_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "iteration,n_particles,best_fitness,ratio_to_bound,omega"
    assert len(lines) == 7


def test_secular_roots_frozen():
    (r1, r2), stable = secular_roots(0.7, 0.5, 1.0, 1.0)
    assert sorted([r1, r2], key=lambda z: z.imag) == [
        pytest.approx(complex(-0.4, -0.7348469228349533), abs=1e-14),
        pytest.approx(complex(-0.4, 0.7348469228349533), abs=1e-14)]
    assert stable
    _, unstable = secular_roots(0.9, 2.0, 2.0, 2.0)
    assert not unstable


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(0, 2), st.floats(0, 2), st.floats(0, 2))
def test_secular_vieta(omega, t1, t2, t3):
    (r1, r2), _ = secular_roots(omega, t1, t2, t3)
    assert abs(r1 * r2 - omega) < 1e-9
    assert abs(r1 + r2 - (1 - t1 - t2 - t3 + omega)) < 1e-9


def test_config_validation():
    with pytest.raises(DomainError):
        RisConfig(0)
    with pytest.raises(DomainError):
        RisConfig(3, 7.0)
    with pytest.raises(DomainError):
        SwarmConfig(n_begin=5, n_end=10)
    with pytest.raises(DomainError):
        SwarmConfig(local_best="star")
    assert RisConfig.from_levels(3, 4).levels == 4
    assert RisConfig(3, 2 * math.pi / 3.5).levels == 4
