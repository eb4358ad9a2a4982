"""Gradient-free projection of predicted states onto sampled reachable sets.

A predicted transition x_t -> x~_{t+1} is made dynamically feasible by
drawing N_p uniform actions, forward-propagating x_t under each, and
keeping the candidate closest to x~_{t+1} in the flat 2-norm.  Whether a
given time slot is projected at all is decided by a schedule conditioned
on the current mean noise level: no projection while exploration noise is
high, always once it is low, and an independent Bernoulli draw per slot on
a linear ramp in between.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dynamics import ActionBounds, QuadParams
from .state import Trajectory


class ProjectionDivergedError(ValueError):
    """A candidate rollout produced non-finite components."""


@dataclass
class ProjectionThresholds:
    """Noise levels bracketing the projection ramp."""

    sigma_min: float = 0.1
    sigma_max: float = 0.3

    def __post_init__(self):
        if not (0.0 < self.sigma_min < self.sigma_max):
            raise ValueError("thresholds require 0 < sigma_min < sigma_max")


def projection_probability(mean_sigma: float, th: ProjectionThresholds) -> float:
    """clip((sigma_max - mean_sigma) / (sigma_max - sigma_min), 0, 1)."""
    p = (th.sigma_max - mean_sigma) / (th.sigma_max - th.sigma_min)
    return float(min(1.0, max(0.0, p)))


def projection_mask(
    mean_sigma: float,
    n_slots: int,
    th: ProjectionThresholds,
    rng: np.random.Generator,
    size: int | None = None,
) -> np.ndarray:
    """Boolean mask over the T-1 projectable transitions (t = 0..T-2).

    Above sigma_max nothing is projected; below sigma_min everything is;
    in between each slot is projected independently with the ramp
    probability.  With ``size`` given, draws that many independent masks
    (shape (size, n_slots)).  Only the ramp branch consumes randomness;
    the branch taken is a deterministic function of the noise level, so
    the stream stays reproducible for a given seed.
    """
    shape = (n_slots,) if size is None else (size, n_slots)
    if mean_sigma > th.sigma_max:
        return np.zeros(shape, dtype=bool)
    if mean_sigma < th.sigma_min:
        return np.ones(shape, dtype=bool)
    p = projection_probability(mean_sigma, th)
    return rng.random(shape) < p


def _project_rows(bases, targets, n_p, bounds, dt, params, rng, metric_w=None):
    """Vectorized core: project a batch of independent transitions."""
    if metric_w is None:
        metric_w = np.ones(18)
    actions = rng.uniform(bounds.lower, bounds.upper, size=(bases.shape[0], n_p, 4))
    states, controls, r2, nonfinite = _kernels.project_slot(
        np.ascontiguousarray(bases),
        np.ascontiguousarray(targets),
        actions,
        float(dt),
        params.mass,
        params.gravity,
        params.e3,
        params.inertia,
        np.asarray(metric_w, dtype=float).reshape(18),
    )
    if nonfinite > 0:
        raise ProjectionDivergedError("rollout diverged during projection")
    return states, controls, r2


def project_state(
    x_t,
    x_next_pred,
    n_p: int,
    bounds: ActionBounds,
    dt: float,
    rng: np.random.Generator,
    params: QuadParams | None = None,
    metric_w=None,
):
    """Project one predicted next state onto the reachable set of ``x_t``.

    Args:
        x_t: flat current state (rotation block may be raw; it is
            orthonormalized before propagating).
        x_next_pred: flat predicted next state to match.
        n_p: number of uniform action samples.
        bounds: admissible action box.
        dt: step length.
        rng: random generator for the action draw.

    Returns:
        (x_next, u_star, residual2): the winning feasible state, its
        action, and the squared flat-vector distance to the prediction.
        Ties break toward the lowest candidate index.
    """
    params = params or QuadParams()
    bases = np.asarray(x_t, dtype=float).reshape(1, 18)
    targets = np.asarray(x_next_pred, dtype=float).reshape(1, 18)
    states, controls, r2 = _project_rows(
        bases, targets, n_p, bounds, dt, params, rng, metric_w
    )
    return states[0], controls[0], float(r2[0])


def project_trajectory(
    traj: Trajectory,
    mask,
    n_p: int,
    bounds: ActionBounds,
    dt: float,
    rng: np.random.Generator,
    params: QuadParams | None = None,
    metric_w=None,
):
    """Sequentially project the masked transitions of a trajectory.

    Walks t = 0..T-2 in chronological order; wherever ``mask[t]`` is true,
    slot t+1 is replaced by the projection of the predicted state onto the
    reachable set of the current slot t (which may itself already be a
    projected state).  Unmasked slots are left untouched and their control
    row stays NaN.  The terminal slot T is never written.

    Returns:
        (trajectory, residuals): a new Trajectory whose ``controls`` holds
        the chosen actions (NaN rows where no projection happened), and
        the per-transition squared residuals (NaN where skipped).
    """
    params = params or QuadParams()
    mask = np.asarray(mask, dtype=bool)
    T = traj.horizon
    if mask.shape != (T - 1,):
        raise ValueError(f"mask must have length T-1 = {T - 1}")
    states = traj.states.copy()
    controls = np.full((T, 4), np.nan)
    residuals = np.full(T, np.nan)
    for t in range(T - 1):
        if not mask[t]:
            continue
        nxt, u, r2 = _project_rows(
            states[t : t + 1], states[t + 1 : t + 2], n_p, bounds, dt, params, rng, metric_w
        )
        states[t + 1] = nxt[0]
        controls[t] = u[0]
        residuals[t] = r2[0]
    return Trajectory(states=states, controls=controls), residuals


def project_batch(
    batch: np.ndarray,
    masks: np.ndarray,
    n_p: int,
    bounds: ActionBounds,
    dt: float,
    rng: np.random.Generator,
    params: QuadParams | None = None,
    metric_w=None,
) -> np.ndarray:
    """Project many sampled trajectories in place, sharing the slot loop.

    ``batch`` has shape (N_s, T+1, 18) and ``masks`` (N_s, T-1); each
    sample has its own independent mask.  The time loop is chronological;
    across samples the work is batched into one kernel call per slot.

    Returns the batch (modified in place).
    """
    params = params or QuadParams()
    n_s, horizon_plus, _ = batch.shape
    T = horizon_plus - 1
    if masks.shape != (n_s, T - 1):
        raise ValueError("masks must have shape (N_s, T-1)")
    for t in range(T - 1):
        active = np.flatnonzero(masks[:, t])
        if active.size == 0:
            continue
        nxt, _, _ = _project_rows(
            batch[active, t, :], batch[active, t + 1, :], n_p, bounds, dt, params, rng, metric_w
        )
        batch[active, t + 1, :] = nxt
    return batch
