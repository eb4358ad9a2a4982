"""Workspace model: axis-aligned bounds, cylindrical obstacles, scenarios.

Obstacles are full-height cylinders (ground to ceiling), so all obstacle
distances are horizontal.  The exponential safety cost for a position o is

    g(o) = sum_i exp(-kappa (||o_xy - c_i||^2 - r_i^2)) + boundary(o)

with a matching per-face exponential for the workspace boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .state import FLAT_DIM, POS, QuadState, Trajectory, flatten, unflatten


class ScenarioError(ValueError):
    """Raised for malformed or infeasible scenario specifications."""


@dataclass
class Cylinder:
    center: np.ndarray  # (2,) x-y position [m]
    radius: float
    height: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(2)
        if self.radius <= 0.0:
            raise ScenarioError("obstacle radius must be positive")
        if self.height <= 0.0:
            raise ScenarioError("obstacle height must be positive")


@dataclass
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float).reshape(3)
        self.hi = np.asarray(self.hi, dtype=float).reshape(3)
        if np.any(self.lo >= self.hi):
            raise ScenarioError("bounds require min < max componentwise")

    def contains(self, o) -> bool:
        o = np.asarray(o, dtype=float)
        return bool(np.all(o >= self.lo) and np.all(o <= self.hi))


@dataclass
class Scenario:
    bounds: Box
    obstacles: list[Cylinder]
    start: QuadState
    goal_position: np.ndarray

    def __post_init__(self):
        self.goal_position = np.asarray(self.goal_position, dtype=float).reshape(3)

    def validate(self, margin: float = 0.1) -> None:
        """Check the scenario invariants; raises ScenarioError on violation."""
        for name, pos in (("start", self.start.o), ("goal", self.goal_position)):
            if not self.bounds.contains(pos):
                raise ScenarioError(f"{name} position outside bounds")
            for c in self.obstacles:
                if np.linalg.norm(pos[:2] - c.center) < c.radius + margin:
                    raise ScenarioError(
                        f"{name} position within {margin} m of an obstacle surface"
                    )

    def obstacle_arrays(self):
        """(K, 2) centers, (K,) radii, (K,) heights; empty arrays when K=0."""
        k = len(self.obstacles)
        centers = np.zeros((k, 2))
        radii = np.zeros(k)
        heights = np.zeros(k)
        for i, c in enumerate(self.obstacles):
            centers[i] = c.center
            radii[i] = c.radius
            heights[i] = c.height
        return centers, radii, heights


@dataclass
class ScenarioSpec:
    """Knobs for randomized scenario generation (workspace defaults: 6x6x3 m)."""

    bounds_lo: np.ndarray = field(default_factory=lambda: np.array([-3.0, -3.0, 0.0]))
    bounds_hi: np.ndarray = field(default_factory=lambda: np.array([3.0, 3.0, 3.0]))
    n_obstacles: int = 16
    radius_range: tuple = (0.1, 0.2)
    obstacle_height: float = 3.0
    margin: float = 0.1  # start/goal clearance from every obstacle surface
    max_attempts: int = 10**5


def obstacle_cost(o, scenario: Scenario, kappa: float) -> float:
    """Sum of exponential obstacle terms at position ``o`` (no boundary)."""
    o = np.asarray(o, dtype=float)
    centers, radii, _ = scenario.obstacle_arrays()
    if len(scenario.obstacles) == 0:
        return 0.0
    d2 = np.sum((o[:2] - centers) ** 2, axis=1)
    return float(np.sum(np.exp(-kappa * (d2 - radii**2))))


def boundary_penalty(o, bounds: Box, kappa: float) -> float:
    """Per-face exponential wall cost; each term is exp(-kappa * d_face).

    d_face is the signed distance to the face measured inward, so terms
    are 1 on a face and grow without bound outside the box.
    """
    o = np.asarray(o, dtype=float)
    d = np.concatenate([o - bounds.lo, bounds.hi - o])
    return float(np.sum(np.exp(-kappa * d)))


def collision_cost(o, scenario: Scenario, kappa: float) -> float:
    """Safety cost at a position: obstacle terms plus the boundary penalty."""
    if kappa <= 0.0:
        raise ValueError("kappa must be positive")
    return obstacle_cost(o, scenario, kappa) + boundary_penalty(o, scenario.bounds, kappa)


def min_clearance(traj: Trajectory, scenario: Scenario) -> float:
    """Signed horizontal distance to the nearest obstacle surface.

    Positive means the whole trajectory stays outside every cylinder;
    negative means penetration.  Infinite when there are no obstacles.
    """
    if traj.states.shape[0] == 0:
        raise ValueError("empty trajectory")
    centers, radii, _ = scenario.obstacle_arrays()
    if len(scenario.obstacles) == 0:
        return float("inf")
    xy = traj.states[:, 0:2]
    d = np.sqrt(np.sum((xy[:, None, :] - centers[None, :, :]) ** 2, axis=2))
    return float(np.min(d - radii[None, :]))


def in_collision(traj: Trajectory, scenario: Scenario) -> bool:
    """True iff any state is inside an obstacle or outside the workspace."""
    pos = traj.states[:, POS]
    if np.any(pos < scenario.bounds.lo) or np.any(pos > scenario.bounds.hi):
        return True
    centers, radii, heights = scenario.obstacle_arrays()
    if len(scenario.obstacles) == 0:
        return False
    xy = pos[:, 0:2]
    d = np.sqrt(np.sum((xy[:, None, :] - centers[None, :, :]) ** 2, axis=2))
    inside_footprint = d < radii[None, :]
    in_z = (pos[:, 2:3] >= 0.0) & (pos[:, 2:3] <= heights[None, :])
    return bool(np.any(inside_footprint & in_z))


def _hover_state(position) -> QuadState:
    return QuadState(o=np.asarray(position, dtype=float))


def _sample_clear_position(rng, bounds: Box, centers, radii, margin, max_attempts):
    for _ in range(max_attempts):
        o = rng.uniform(bounds.lo, bounds.hi)
        if len(radii) == 0:
            return o
        d = np.sqrt(np.sum((o[:2] - centers) ** 2, axis=1))
        if np.all(d >= radii + margin):
            return o
    raise ScenarioError("infeasible scenario spec")


def random_scenario(rng: np.random.Generator, spec: ScenarioSpec | None = None) -> Scenario:
    """Draw a randomized workspace: obstacles, then clear start/goal.

    Obstacle centers are uniform over the x-y footprint, radii uniform in
    ``spec.radius_range``.  Start and goal positions are uniform over the
    bounds, rejection-sampled until both keep ``spec.margin`` horizontal
    clearance from every obstacle surface.

    Raises:
        ScenarioError: when rejection sampling exceeds ``spec.max_attempts``.
    """
    spec = spec or ScenarioSpec()
    bounds = Box(spec.bounds_lo, spec.bounds_hi)
    obstacles = []
    for _ in range(spec.n_obstacles):
        center = rng.uniform(bounds.lo[:2], bounds.hi[:2])
        radius = rng.uniform(spec.radius_range[0], spec.radius_range[1])
        obstacles.append(Cylinder(center=center, radius=radius, height=spec.obstacle_height))
    centers = np.array([c.center for c in obstacles]).reshape(-1, 2)
    radii = np.array([c.radius for c in obstacles])
    start = _sample_clear_position(rng, bounds, centers, radii, spec.margin, spec.max_attempts)
    goal = _sample_clear_position(rng, bounds, centers, radii, spec.margin, spec.max_attempts)
    return Scenario(bounds=bounds, obstacles=obstacles, start=_hover_state(start), goal_position=goal)


def single_case_scenario(rng: np.random.Generator | None = None, n_obstacles: int = 16) -> Scenario:
    """The fixed benchmark case: start [-1, -1, 0.5], goal [1, 1, 1].

    Obstacles are drawn with the given rng (default seed 0), rejecting any
    cylinder that comes within 0.1 m of the fixed start or goal.
    """
    rng = rng or np.random.default_rng(0)
    spec = ScenarioSpec(n_obstacles=n_obstacles)
    bounds = Box(spec.bounds_lo, spec.bounds_hi)
    start = np.array([-1.0, -1.0, 0.5])
    goal = np.array([1.0, 1.0, 1.0])
    obstacles = []
    attempts = 0
    while len(obstacles) < n_obstacles:
        attempts += 1
        if attempts > spec.max_attempts:
            raise ScenarioError("infeasible scenario spec")
        center = rng.uniform(bounds.lo[:2], bounds.hi[:2])
        radius = rng.uniform(spec.radius_range[0], spec.radius_range[1])
        d_start = np.linalg.norm(start[:2] - center)
        d_goal = np.linalg.norm(goal[:2] - center)
        if d_start < radius + spec.margin or d_goal < radius + spec.margin:
            continue
        obstacles.append(Cylinder(center=center, radius=radius, height=spec.obstacle_height))
    return Scenario(bounds=bounds, obstacles=obstacles, start=_hover_state(start), goal_position=goal)


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "bounds": {"min": s.bounds.lo.tolist(), "max": s.bounds.hi.tolist()},
        "obstacles": [
            {"center": c.center.tolist(), "radius": c.radius, "height": c.height}
            for c in s.obstacles
        ],
        "start": flatten(s.start).tolist(),
        "goal": s.goal_position.tolist(),
    }


def scenario_from_dict(d: dict) -> Scenario:
    try:
        bounds = Box(d["bounds"]["min"], d["bounds"]["max"])
        obstacles = [
            Cylinder(center=o["center"], radius=o["radius"], height=o["height"])
            for o in d["obstacles"]
        ]
        start_raw = d["start"]
        if isinstance(start_raw, dict):
            start = QuadState(
                o=start_raw["position"],
                v=start_raw.get("velocity", np.zeros(3)),
                R=start_raw.get("rotation", np.eye(3)),
                Omega=start_raw.get("angular_velocity", np.zeros(3)),
            )
        else:
            start_flat = np.asarray(start_raw, dtype=float)
            if start_flat.shape != (FLAT_DIM,):
                raise ScenarioError("start must be an 18-vector or structured state")
            start = unflatten(start_flat)
        goal = np.asarray(d["goal"], dtype=float)
        if goal.shape != (3,):
            raise ScenarioError("goal must be a 3-vector")
    except KeyError as e:
        raise ScenarioError(f"scenario missing field {e.args[0]!r}") from e
    return Scenario(bounds=bounds, obstacles=obstacles, start=start, goal_position=goal)


def save_scenario(s: Scenario, path) -> None:
    with open(path, "w") as f:
        json.dump(scenario_to_dict(s), f, indent=2)
        f.write("\n")


def load_scenario(path) -> Scenario:
    with open(path) as f:
        return scenario_from_dict(json.load(f))
