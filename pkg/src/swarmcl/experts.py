"""Analytical expert controllers and demonstration dataset generation.

Both tasks use the same potential-field law: attraction to an active target,
velocity damping, and short-range pairwise repulsion. For the passage task
the active target switches through pre-passage waypoint -> post-passage
waypoint -> final goal, and the wall acts as an additional repulsive
obstacle. Episodes where any robot misses its goal by more than the
completion tolerance at the final sample are rejected and resampled, so
datasets contain only successful demonstrations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .world import (
    NAVIGATION,
    PASSAGE,
    Dataset,
    Wall,
    WorldSpec,
    clamp_controls,
    step,
)

COMPLETION_TOLERANCE = 0.25
MAX_CONSECUTIVE_REJECTS = 100


class ExpertError(Exception):
    pass


@dataclass(frozen=True)
class ExpertConfig:
    k_attract: float = 1.5
    k_repulse: float = 0.3
    k_damp: float = 1.8
    d_safe: float = 0.35
    waypoint_offset: float = 0.5      # passage waypoints this far from the wall
    goal_switch_radius: float = 0.5

    def __post_init__(self):
        if min(self.k_attract, self.k_repulse, self.k_damp) <= 0:
            raise ExpertError("expert gains must be positive")


def _potential_field(state: np.ndarray, targets: np.ndarray,
                     world: WorldSpec, cfg: ExpertConfig) -> np.ndarray:
    """Attraction to per-robot targets + damping + pairwise repulsion."""
    p = state[:, 0:2]
    v = state[:, 2:4]
    n = state.shape[0]
    u = cfg.k_attract * (targets - p) - cfg.k_damp * v
    diff = p[:, None, :] - p[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    close = dist < cfg.d_safe
    np.fill_diagonal(close, False)
    if np.any(close):
        pairs = dist[close]
        if np.any(pairs < 1e-9):
            raise ExpertError("coincident robots")
        u += np.sum(
            np.where(close[:, :, None], cfg.k_repulse * diff /
                     np.maximum(dist, 1e-12)[:, :, None] ** 3, 0.0),
            axis=1,
        )
    return clamp_controls(u, world.u_max)


def navigation_expert(state: np.ndarray, world: WorldSpec,
                      goals: np.ndarray, cfg: ExpertConfig) -> np.ndarray:
    """Controls driving each robot to its goal while repelling close pairs."""
    if goals is None:
        raise ExpertError("navigation expert needs goals")
    return _potential_field(np.asarray(state, dtype=np.float64),
                            np.asarray(goals, dtype=np.float64), world, cfg)


def passage_targets(state: np.ndarray, world: WorldSpec, goals: np.ndarray,
                    cfg: ExpertConfig) -> np.ndarray:
    """Active target per robot under the waypoint switching rule."""
    wall = world.wall
    p = np.asarray(state, dtype=np.float64)[:, 0:2]
    pre = np.array([wall.gap_x, wall.y - cfg.waypoint_offset])
    post = np.array([wall.gap_x, wall.y + cfg.waypoint_offset])
    targets = np.array(goals, dtype=np.float64, copy=True)
    below = p[:, 1] <= wall.y
    near_gap = np.linalg.norm(p - pre, axis=1) <= cfg.goal_switch_radius
    before_post = p[:, 1] < post[1]
    # below the wall: head for the pre-passage waypoint until close to the gap
    targets[below & ~near_gap] = pre
    # crossing or just crossed: head for the post-passage waypoint
    targets[(below & near_gap) | (~below & before_post)] = post
    return targets


def _wall_repulsion(state: np.ndarray, world: WorldSpec,
                    cfg: ExpertConfig) -> np.ndarray:
    """Push robots vertically away from the wall unless inside the gap."""
    wall = world.wall
    p = state[:, 0:2]
    u = np.zeros_like(p)
    in_gap = np.abs(p[:, 0] - wall.gap_x) < wall.gap_half_width - world.robot_radius
    gap_y = np.abs(p[:, 1] - wall.y)
    near = (gap_y < cfg.d_safe) & ~in_gap
    d = np.maximum(gap_y[near], 1e-3)
    u[near, 1] = cfg.k_repulse * np.sign(p[near, 1] - wall.y + 1e-12) / d ** 2
    return u


def passage_expert(state: np.ndarray, world: WorldSpec, goals: np.ndarray,
                   cfg: ExpertConfig) -> np.ndarray:
    """Waypoint-switching potential-field controller for the passage task."""
    if world.wall is None:
        raise ExpertError("passage expert needs wall geometry")
    state = np.asarray(state, dtype=np.float64)
    targets = passage_targets(state, world, goals, cfg)
    base = _potential_field(state, targets, world, cfg)
    return clamp_controls(base + _wall_repulsion(state, world, cfg), world.u_max)


def expert_controls(task: str, state: np.ndarray, world: WorldSpec,
                    goals: np.ndarray, cfg: ExpertConfig) -> np.ndarray:
    if task == NAVIGATION:
        return navigation_expert(state, world, goals, cfg)
    return passage_expert(state, world, goals, cfg)


def expert_rollout(x0: np.ndarray, world: WorldSpec, goals: np.ndarray,
                   K: int, cfg: ExpertConfig) -> np.ndarray:
    """Closed-loop expert run; returns (K+1, n, 4) states."""
    states = np.empty((K + 1, x0.shape[0], 4))
    states[0] = x0
    for k in range(K):
        u = expert_controls(world.task, states[k], world, goals, cfg)
        states[k + 1] = step(states[k], u, world, boundaries=True)
    return states


def completed(states: np.ndarray, goals: np.ndarray,
              tol: float = COMPLETION_TOLERANCE) -> bool:
    final = states[-1, :, 0:2]
    return bool(np.all(np.linalg.norm(final - goals, axis=1) <= tol))


def _sample_positions(rng: np.random.Generator, n: int, lo: np.ndarray,
                      hi: np.ndarray, min_sep: float) -> np.ndarray:
    """Uniform positions in a box with pairwise separation (no overlapping)."""
    for _ in range(1000):
        p = rng.uniform(lo, hi, size=(n, 2))
        d = np.linalg.norm(p[:, None] - p[None, :], axis=-1)
        np.fill_diagonal(d, np.inf)
        if np.min(d) >= min_sep:
            return p
    raise ExpertError("could not place robots without overlap")


def sample_episode(task: str, n: int, world: WorldSpec,
                   rng: np.random.Generator, min_sep: float = 0.3):
    """Random initial state (at rest) and goals for one episode."""
    e = world.arena_half_extent
    if task == NAVIGATION:
        lo, hi = np.array([-e, -e]), np.array([e, e])
        starts = _sample_positions(rng, n, lo, hi, min_sep)
        goals = _sample_positions(rng, n, lo, hi, min_sep)
    else:
        wall = world.wall
        margin = 0.4
        starts = _sample_positions(
            rng, n, np.array([-e, -e]), np.array([e, wall.y - margin]), min_sep
        )
        goals = _sample_positions(
            rng, n, np.array([-e, wall.y + margin]), np.array([e, e]), min_sep
        )
    x0 = np.zeros((n, 4))
    x0[:, 0:2] = starts
    return x0, goals


def make_world(task: str, seed: int, arena_half_extent: float = 2.5,
               comm_radius: float = 1.5, dt: float = 0.05,
               u_max: float = 1.0) -> WorldSpec:
    """World for a dataset; passage gap placement is randomized by seed."""
    wall = None
    if task == PASSAGE:
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(entropy=seed, spawn_key=(17,))
        ))
        gap_x = rng.uniform(-0.6 * arena_half_extent, 0.6 * arena_half_extent)
        wall = Wall(y=0.0, gap_x=float(gap_x), gap_half_width=0.45, thickness=0.1)
    return WorldSpec(task=task, arena_half_extent=arena_half_extent, wall=wall,
                     comm_radius=comm_radius, dt=dt, u_max=u_max)


def generate_dataset(task: str, n: int, L: int, K: int, seed: int,
                     cfg: ExpertConfig | None = None,
                     world: WorldSpec | None = None) -> Dataset:
    """L successful expert demonstrations of K steps, deterministic in seed."""
    if L < 1:
        raise ExpertError("L must be >= 1")
    if K < 2:
        raise ExpertError("K must be >= 2")
    cfg = cfg or ExpertConfig()
    world = world or make_world(task, seed)
    all_states = np.empty((L, K + 1, n, 4))
    all_goals = np.empty((L, n, 2))
    attempt = 0
    for l in range(L):
        rejects = 0
        while True:
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence(entropy=seed, spawn_key=(1, attempt))
            ))
            attempt += 1
            try:
                x0, goals = sample_episode(task, n, world, rng)
                states = expert_rollout(x0, world, goals, K, cfg)
            except ExpertError:
                states, goals = None, None
            if states is not None and completed(states, goals):
                all_states[l] = states
                all_goals[l] = goals
                break
            rejects += 1
            if rejects > MAX_CONSECUTIVE_REJECTS:
                raise ExpertError(
                    f"expert failed {rejects} consecutive episodes "
                    f"(task={task}, n={n}, K={K}): infeasible configuration"
                )
    return Dataset(world=world, goals=all_goals, states=all_states)
