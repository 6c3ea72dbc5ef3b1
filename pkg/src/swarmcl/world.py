"""Deterministic 2D multi-robot world.

State layout: one robot is ``[px, py, vx, vy]``; a swarm state is an
``(n, 4)`` float64 array. Dynamics are a semi-implicit Euler double
integrator with a per-component control clamp. The passage task adds a
horizontal wall with a gap; wall contact is resolved by position projection
with zeroed normal velocity (expert and evaluation rollouts only, training
rollouts run boundary-free).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

NAVIGATION = "navigation"
PASSAGE = "passage"
TASKS = (NAVIGATION, PASSAGE)


class WorldError(Exception):
    pass


@dataclass(frozen=True)
class Wall:
    """Horizontal wall with a single gap, for the passage task."""

    y: float
    gap_x: float
    gap_half_width: float
    thickness: float = 0.1


@dataclass(frozen=True)
class WorldSpec:
    task: str = NAVIGATION
    arena_half_extent: float = 2.5  # navigation arena is 5 m x 5 m
    wall: Optional[Wall] = None
    comm_radius: float = 1.5
    dt: float = 0.05
    u_max: float = 1.0
    robot_radius: float = 0.1

    def __post_init__(self):
        if self.task not in TASKS:
            raise WorldError(f"unknown task {self.task!r}")
        if self.task == PASSAGE and self.wall is None:
            raise WorldError("passage task requires a wall")
        if self.task == NAVIGATION and self.wall is not None:
            raise WorldError("navigation task must not have a wall")
        if self.wall is not None and self.wall.gap_half_width <= self.robot_radius:
            raise WorldError("gap half-width must exceed the robot radius")


@dataclass
class Trajectory:
    """K+1 sampled swarm states at times 0, T, ..., KT plus task metadata."""

    states: np.ndarray           # (K+1, n, 4)
    goals: np.ndarray            # (n, 2)
    controls: Optional[np.ndarray] = None  # (K, n, 2)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.goals = np.asarray(self.goals, dtype=np.float64)
        if self.states.ndim != 3 or self.states.shape[2] != 4:
            raise WorldError(f"bad trajectory state shape {self.states.shape}")
        if self.states.shape[0] < 2:
            raise WorldError("a trajectory needs at least 2 samples")

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    @property
    def n(self) -> int:
        return self.states.shape[1]


@dataclass
class Dataset:
    """Stack of expert demonstrations sharing one world specification."""

    world: WorldSpec
    goals: np.ndarray   # (L, n, 2)
    states: np.ndarray  # (L, K+1, n, 4)

    @property
    def L(self) -> int:
        return self.states.shape[0]

    @property
    def K(self) -> int:
        return self.states.shape[1] - 1

    @property
    def n(self) -> int:
        return self.states.shape[2]

    def trajectory(self, l: int) -> Trajectory:
        return Trajectory(states=self.states[l], goals=self.goals[l])


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise WorldError(f"non-finite {what}")


def clamp_controls(controls: np.ndarray, u_max: float) -> np.ndarray:
    return np.clip(controls, -u_max, u_max)


def step(state: np.ndarray, controls: np.ndarray, world: WorldSpec,
         boundaries: bool = False) -> np.ndarray:
    """Advance one sampling period.

    Semi-implicit Euler: v' = v + u*T, then p' = p + v'*T. With
    ``boundaries=True`` wall penetration is resolved afterwards (projection +
    zero normal velocity); training rollouts must keep it off.
    """
    state = np.asarray(state, dtype=np.float64)
    controls = np.asarray(controls, dtype=np.float64)
    _require_finite(state, "state")
    _require_finite(controls, "controls")
    u = clamp_controls(controls, world.u_max)
    T = world.dt
    nxt = state.copy()
    nxt[:, 2:4] = state[:, 2:4] + u * T
    nxt[:, 0:2] = state[:, 0:2] + nxt[:, 2:4] * T
    if boundaries and world.wall is not None:
        nxt = resolve_wall(state, nxt, world)
    return nxt


def resolve_wall(prev: np.ndarray, nxt: np.ndarray, world: WorldSpec) -> np.ndarray:
    """Project robots out of the wall band, keeping tangential motion."""
    wall = world.wall
    half = wall.thickness / 2.0 + world.robot_radius
    lo, hi = wall.y - half, wall.y + half
    inside_band = (nxt[:, 1] > lo) & (nxt[:, 1] < hi)
    in_gap = np.abs(nxt[:, 0] - wall.gap_x) < wall.gap_half_width - world.robot_radius
    hit = inside_band & ~in_gap
    if not np.any(hit):
        return nxt
    out = nxt.copy()
    came_from_below = prev[:, 1] <= wall.y
    out[hit & came_from_below, 1] = lo
    out[hit & ~came_from_below, 1] = hi
    out[hit, 3] = 0.0
    return out


def compute_adjacency(state: np.ndarray, world: WorldSpec) -> np.ndarray:
    """Closed-ball disk graph with self-loops: A_ij = 1 iff |p_i - p_j| <= r."""
    p = np.asarray(state, dtype=np.float64)[:, 0:2]
    d = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)
    return (d <= world.comm_radius).astype(np.int8)


def count_overlaps(states: np.ndarray, robot_radius: float) -> int:
    """Robot-robot overlap events across a trajectory (contacts not resolved)."""
    states = np.asarray(states, dtype=np.float64)
    p = states[..., 0:2]
    d = np.linalg.norm(p[:, :, None, :] - p[:, None, :, :], axis=-1)
    iu = np.triu_indices(states.shape[1], k=1)
    return int(np.sum(d[:, iu[0], iu[1]] < 2.0 * robot_radius))
