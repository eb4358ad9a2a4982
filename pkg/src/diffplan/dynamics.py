"""SE(3) quadrotor dynamics, RK4 discretization, and admissible actions.

Continuous-time model (body-to-world rotation R, diagonal inertia):

    o' = v
    m v' = m g e3 - F R e3
    R' = R hat(Omega)
    Gamma Omega' + Omega x (Gamma Omega) = M

Controls are ``u = [F, Mx, My, Mz]``: collective thrust along the vertical
body axis plus body torques.  The workspace geometry treats larger z as
higher; the dynamics equations are applied exactly as written above.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .state import QuadState, Trajectory, flatten, hat, unflatten


@dataclass
class QuadParams:
    """Rigid-body parameters. Defaults: 1 kg, diag(0.01, 0.01, 0.02) kg m^2."""

    mass: float = 1.0
    inertia: np.ndarray = field(default_factory=lambda: np.array([0.01, 0.01, 0.02]))
    gravity: float = 9.81
    e3: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float).reshape(3)
        self.e3 = np.asarray(self.e3, dtype=float).reshape(3)
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if np.any(self.inertia <= 0.0):
            raise ValueError("inertia components must be positive")


@dataclass
class ActionBounds:
    """Per-degree-of-freedom box for ``[F, Mx, My, Mz]``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float).reshape(4)
        self.upper = np.asarray(self.upper, dtype=float).reshape(4)
        if np.any(self.lower > self.upper):
            raise ValueError("action bounds require lower <= upper componentwise")


def default_action_bounds(params: QuadParams | None = None) -> ActionBounds:
    """Thrust in [0, 2mg], torques in [-0.5, 0.5] N m per axis."""
    p = params or QuadParams()
    fmax = 2.0 * p.mass * p.gravity
    return ActionBounds(
        lower=np.array([0.0, -0.5, -0.5, -0.5]),
        upper=np.array([fmax, 0.5, 0.5, 0.5]),
    )


def continuous_dynamics(s: QuadState, u, p: QuadParams | None = None):
    """State derivative (o_dot, v_dot, R_dot, Omega_dot).

    Readable reference implementation; the compiled kernels in
    ``_kernels`` evaluate the same expressions and are tested against it.
    """
    p = p or QuadParams()
    u = np.asarray(u, dtype=float).reshape(4)
    F, M = u[0], u[1:4]
    o_dot = s.v.copy()
    v_dot = p.gravity * p.e3 - (F / p.mass) * (s.R @ p.e3)
    R_dot = s.R @ hat(s.Omega)
    gw = p.inertia * s.Omega
    Omega_dot = (M - np.cross(s.Omega, gw)) / p.inertia
    return o_dot, v_dot, R_dot, Omega_dot


def step_flat(x, u, dt: float, p: QuadParams | None = None) -> np.ndarray:
    """One-step transition map on flat states, batched over leading dims.

    The rotation block of the input is retracted onto SO(3) before
    integrating, and the integrated block is re-orthonormalized after, so
    the output is always a valid state.  This is the single map used by
    rollouts, projection, and feasibility residuals.
    """
    p = p or QuadParams()
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    single = x.ndim == 1
    x2 = np.ascontiguousarray(x.reshape(-1, 18))
    u2 = np.ascontiguousarray(u.reshape(-1, 4))
    if u2.shape[0] == 1 and x2.shape[0] > 1:
        u2 = np.ascontiguousarray(np.broadcast_to(u2, (x2.shape[0], 4)))
    out = _kernels.step_batch(x2, u2, float(dt), p.mass, p.gravity, p.e3, p.inertia)
    return out[0] if single else out.reshape(x.shape)


def rk4_step(s: QuadState, u, dt: float, p: QuadParams | None = None) -> QuadState:
    """Classical RK4 step; the output rotation is a valid SO(3) matrix."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    nxt = step_flat(flatten(s), u, dt, p)
    return unflatten(nxt)


def sample_actions(count: int, bounds: ActionBounds, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` i.i.d. uniform actions from the admissible box.

    Returns:
        (count, 4) array of ``[F, Mx, My, Mz]`` rows.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    return rng.uniform(bounds.lower, bounds.upper, size=(count, 4))


def rollout(x0: QuadState, controls, dt: float, p: QuadParams | None = None) -> Trajectory:
    """Forward-simulate a control sequence from ``x0``.

    Args:
        x0: initial state.
        controls: (T, 4) array of actions.
        dt: step length in seconds.

    Returns:
        Trajectory with T+1 states and the controls recorded.

    Raises:
        ValueError: if an intermediate state becomes non-finite.
    """
    p = p or QuadParams()
    controls = np.ascontiguousarray(np.asarray(controls, dtype=float).reshape(-1, 4))
    states, diverged = _kernels.rollout_states(
        flatten(x0), controls, float(dt), p.mass, p.gravity, p.e3, p.inertia
    )
    if diverged:
        raise ValueError("diverged rollout")
    return Trajectory(states=states, controls=controls.copy())
