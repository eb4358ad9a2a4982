"""Unnormalized log-densities steering the reverse diffusion.

Two factors define the target: an optimality term exp(-J/lambda) over a
smoothness + velocity stage cost, and a safety term exp(-sum_t g(o_t))
built from the exponential collision cost.  Everything is computed in the
log domain; exponentiation happens only inside weighted means after
max-subtraction.  Dynamic feasibility is never scored here — it is
enforced constructively by the projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .state import Trajectory
from .world import Scenario


@dataclass
class CostConfig:
    """Weights of the optimality density.

    The base stage cost is position smoothness plus a speed penalty.  The
    tilt and spin terms regularize attitude: without them the target
    density is blind to orientation, and tilted samples leak thrust until
    the whole batch drifts out of the workspace.  Both vanish on upright,
    non-spinning flight, so they leave hover costs untouched.
    """

    lam: float = 0.1  # temperature of the optimality density
    kappa: float = 5.0  # sharpness of the safety cost
    w_smooth: float = 1.0
    w_vel: float = 0.1
    w_tilt: float = 0.3
    w_spin: float = 0.05

    def __post_init__(self):
        if self.lam <= 0.0:
            raise ValueError("lam must be positive")
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")
        if min(self.w_smooth, self.w_vel, self.w_tilt, self.w_spin) < 0.0:
            raise ValueError("stage-cost weights must be nonnegative")


def _states_of(traj) -> np.ndarray:
    if isinstance(traj, Trajectory):
        return traj.states
    return np.asarray(traj, dtype=float)


def stage_cost(traj, w_smooth: float = 1.0, w_vel: float = 0.1) -> float | np.ndarray:
    """J = w_smooth * sum ||o_{t+1} - o_t||^2 + w_vel * sum_t ||v_t||^2.

    Accepts a Trajectory, a (T+1, 18) array, or a batch (..., T+1, 18);
    reduction is over the trailing two axes.
    """
    x = _states_of(traj)
    pos = x[..., :, 0:3]
    vel = x[..., :, 3:6]
    steps = np.diff(pos, axis=-2)
    smooth = np.sum(steps**2, axis=(-2, -1))
    vel_term = np.sum(vel**2, axis=(-2, -1))
    out = w_smooth * smooth + w_vel * vel_term
    return float(out) if out.ndim == 0 else out


def attitude_cost(traj, w_tilt: float = 0.3, w_spin: float = 0.05) -> float | np.ndarray:
    """Tilt and spin regularizer: w_tilt * sum 2(1 - R33') + w_spin * sum ||Omega||^2.

    The tilt term is ||R e3 - e3||^2 = 2 (1 - e3^T R e3), zero for any
    upright attitude regardless of heading.
    """
    x = _states_of(traj)
    r_zz = x[..., :, 14]  # e3^T R e3 for the row-major rotation block
    tilt = np.sum(2.0 * (1.0 - r_zz), axis=-1)
    spin = np.sum(x[..., :, 15:18] ** 2, axis=(-2, -1))
    out = w_tilt * tilt + w_spin * spin
    return float(out) if out.ndim == 0 else out


def log_pJ(traj, lam: float, w_smooth: float = 1.0, w_vel: float = 0.1,
           w_tilt: float = 0.0, w_spin: float = 0.0):
    """Boltzmann log-weight -J/lambda (attitude terms off unless requested)."""
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    J = stage_cost(traj, w_smooth, w_vel)
    if w_tilt > 0.0 or w_spin > 0.0:
        J = J + attitude_cost(traj, w_tilt, w_spin)
    return -J / lam


def safety_cost_per_state(states: np.ndarray, scenario: Scenario, kappa: float) -> np.ndarray:
    """Vectorized g(o_t) for every state: obstacle terms + boundary terms."""
    pos = states[..., 0:3]
    centers, radii, _ = scenario.obstacle_arrays()
    if len(scenario.obstacles) > 0:
        d2 = np.sum((pos[..., None, 0:2] - centers) ** 2, axis=-1)
        obst = np.sum(np.exp(-kappa * (d2 - radii**2)), axis=-1)
    else:
        obst = np.zeros(pos.shape[:-1])
    lo, hi = scenario.bounds.lo, scenario.bounds.hi
    walls = np.sum(np.exp(-kappa * (pos - lo)), axis=-1) + np.sum(
        np.exp(-kappa * (hi - pos)), axis=-1
    )
    return obst + walls


def log_pg(traj, scenario: Scenario, kappa: float):
    """Safety log-weight: minus the summed collision cost over all states."""
    if kappa <= 0.0:
        raise ValueError("kappa must be positive")
    x = _states_of(traj)
    out = -np.sum(safety_cost_per_state(x, scenario, kappa), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def log_target(traj, scenario: Scenario, cfg: CostConfig | None = None):
    """log p_J + log p_g, the full (unnormalized) target log-density."""
    cfg = cfg or CostConfig()
    return log_pJ(
        traj, cfg.lam, cfg.w_smooth, cfg.w_vel, cfg.w_tilt, cfg.w_spin
    ) + log_pg(traj, scenario, cfg.kappa)
