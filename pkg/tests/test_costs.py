"""Tests for the optimality and safety log-densities."""

import math

import numpy as np
import pytest

from diffplan.costs import CostConfig, log_pJ, log_pg, log_target, stage_cost
from diffplan.state import Trajectory

from test_world import make_scenario, traj_of_positions
from diffplan.world import Cylinder


class TestStageCost:
    def test_hover_is_zero(self):
        traj = traj_of_positions(np.tile([0.0, 0.0, 1.0], (11, 1)))
        assert stage_cost(traj) == 0.0

    def test_straight_line_equal_spacing(self):
        T, d = 10, 0.25
        pos = np.zeros((T + 1, 3))
        pos[:, 0] = d * np.arange(T + 1)
        traj = traj_of_positions(pos)
        assert abs(stage_cost(traj) - T * d**2) < 1e-12

    def test_matches_fsum_oracle(self):
        rng = np.random.default_rng(1)
        states = rng.normal(size=(21, 18))
        traj = Trajectory(states=states)
        terms = []
        for t in range(20):
            step = states[t + 1, 0:3] - states[t, 0:3]
            terms.append(1.0 * float(step @ step))
        for t in range(21):
            v = states[t, 3:6]
            terms.append(0.1 * float(v @ v))
        assert abs(stage_cost(traj) - math.fsum(terms)) < 1e-12

    def test_batched_matches_loop(self):
        rng = np.random.default_rng(2)
        batch = rng.normal(size=(7, 11, 18))
        out = stage_cost(batch)
        for k in range(7):
            assert abs(out[k] - stage_cost(batch[k])) < 1e-12


class TestLogPJ:
    def test_zero_cost(self):
        traj = traj_of_positions(np.tile([0.0, 0.0, 1.0], (5, 1)))
        assert log_pJ(traj, lam=0.1) == 0.0

    def test_unit_cost_at_temperature(self):
        pos = np.zeros((2, 3))
        pos[1, 0] = 1.0  # single step of length 1 -> J = 1
        assert abs(log_pJ(traj_of_positions(pos), lam=0.1) - (-10.0)) < 1e-12

    def test_monotone_in_cost(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = Trajectory(states=rng.normal(size=(8, 18)))
            b = Trajectory(states=rng.normal(size=(8, 18)))
            ja, jb = stage_cost(a), stage_cost(b)
            la, lb = log_pJ(a, 0.1), log_pJ(b, 0.1)
            assert (ja > jb) == (la < lb)

    def test_temperature_scaling_invariance(self):
        rng = np.random.default_rng(4)
        traj = Trajectory(states=rng.normal(size=(6, 18)))
        c = 3.7
        # scaling J by c and lam by c leaves the log-density unchanged
        base = stage_cost(traj, w_smooth=1.0, w_vel=0.1) / 0.1
        scaled = stage_cost(traj, w_smooth=c * 1.0, w_vel=c * 0.1) / (c * 0.1)
        assert abs(base - scaled) < 1e-9 * abs(base)


class TestLogPg:
    def test_obstacle_free_boundary_only(self):
        s = make_scenario([])
        T = 9
        traj = traj_of_positions(np.tile([0.0, 0.0, 1.5], (T + 1, 1)))
        per_state = 4.0 * math.exp(-5.0 * 3.0) + 2.0 * math.exp(-5.0 * 1.5)
        assert abs(log_pg(traj, s, kappa=5.0) - (-(T + 1) * per_state)) < 1e-12

    def test_surface_state_adds_minus_one(self):
        s_free = make_scenario([])
        # obstacle far from every state except one exactly on its surface
        s_obs = make_scenario([Cylinder(center=[2.5, 2.5], radius=0.2, height=3.0)])
        pos = np.tile([-1.0, -1.0, 1.5], (5, 1))
        pos[2] = [2.3, 2.5, 1.5]  # horizontal distance to the axis = radius
        traj = traj_of_positions(pos)
        delta = log_pg(traj, s_obs, 5.0) - log_pg(traj, s_free, 5.0)
        tail = 4 * math.exp(-5.0 * (np.sum((np.array([-1.0, -1]) - 2.5) ** 2) - 0.04))
        assert abs(delta - (-1.0)) < tail + 1e-12
        assert tail < 1e-12

    def test_through_obstacle_worse_than_beside(self):
        s = make_scenario([Cylinder(center=[0.0, 0.0], radius=0.2, height=3.0)])
        through = traj_of_positions([[0.0, 0.0, 1.5], [0.05, 0.0, 1.5]])
        beside = traj_of_positions([[1.5, 0.0, 1.5], [1.55, 0.0, 1.5]])
        assert log_pg(through, s, 5.0) < log_pg(beside, s, 5.0)

    def test_finite_for_finite_trajectories(self):
        rng = np.random.default_rng(5)
        s = make_scenario([Cylinder(center=[0.0, 0.0], radius=0.2, height=3.0)])
        vals = log_pg(rng.normal(scale=5.0, size=(32, 12, 18)), s, 5.0)
        assert np.all(np.isfinite(vals))


class TestLogTarget:
    def test_zero_components(self):
        s = make_scenario([])
        # far from walls the boundary terms are ~0 but not exactly; use a
        # wide box to make the target vanish within double precision
        wide = make_scenario([])
        wide.bounds.lo[:] = [-1e6, -1e6, -1e6]
        wide.bounds.hi[:] = [1e6, 1e6, 1e6]
        traj = traj_of_positions(np.tile([0.0, 0.0, 1.0], (4, 1)))
        assert log_target(traj, wide) == 0.0

    def test_additivity(self):
        rng = np.random.default_rng(6)
        s = make_scenario([Cylinder(center=[0.5, 0.5], radius=0.15, height=3.0)])
        traj = Trajectory(states=rng.normal(size=(9, 18)))
        cfg = CostConfig()
        total = log_target(traj, s, cfg)
        parts = log_pJ(traj, cfg.lam, cfg.w_smooth, cfg.w_vel) + log_pg(traj, s, cfg.kappa)
        assert abs(total - parts) < 1e-15 * max(1.0, abs(total))

    def test_density_ratio_matches_direct_evaluation(self):
        s = make_scenario([Cylinder(center=[0.5, 0.5], radius=0.15, height=3.0)])
        a = traj_of_positions([[0.0, 0.0, 1.5], [0.2, 0.0, 1.5]])
        b = traj_of_positions([[0.0, 0.0, 1.5], [0.4, 0.1, 1.4]])
        cfg = CostConfig()
        ratio = math.exp(log_target(a, s, cfg) - log_target(b, s, cfg))
        direct = (
            math.exp(-stage_cost(a) / cfg.lam)
            * math.exp(log_pg(a, s, cfg.kappa))
            / (math.exp(-stage_cost(b) / cfg.lam) * math.exp(log_pg(b, s, cfg.kappa)))
        )
        assert abs(ratio - direct) < 1e-9 * direct

    def test_config_validation(self):
        with pytest.raises(ValueError, match="lam"):
            CostConfig(lam=0.0)
        with pytest.raises(ValueError, match="kappa"):
            CostConfig(kappa=-1.0)
        with pytest.raises(ValueError, match="weights"):
            CostConfig(w_smooth=-0.1)
