"""Egocentric observation estimation from the global swarm state.

Each robot sees the relative state ``x_j - x_i`` of every neighbor
(including itself, whose noiseless entry is zero), perturbed by i.i.d.
Gaussian noise of standard deviation sigma on every component. Noise comes
from a counter-based stream keyed by (epoch, trajectory, step), so draws are
reproducible and independent of execution schedule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LocalObservation:
    robot: int
    neighbor_ids: np.ndarray  # ascending, includes self
    rel: np.ndarray           # (len(neighbor_ids), 4), noisy relative states

    @property
    def dim(self) -> int:
        return 4 * len(self.neighbor_ids)


class NoiseStream:
    """Deterministic Gaussian draws keyed by (epoch, trajectory, step).

    ``block`` yields an (n, 4n) standard-normal matrix; robot i's observation
    entry for neighbor j reads ``block[i, 4j:4j+4]``. Identical keys give
    identical draws regardless of thread schedule or call order.
    """

    def __init__(self, base_seed: int):
        self.base_seed = int(base_seed)

    def block(self, epoch: int, traj: int, step: int, n: int) -> np.ndarray:
        ss = np.random.SeedSequence(
            entropy=self.base_seed, spawn_key=(int(epoch), int(traj), int(step))
        )
        return np.random.Generator(np.random.PCG64(ss)).standard_normal((n, 4 * n))

    def goal_block(self, epoch: int, traj: int, step: int, n: int) -> np.ndarray:
        """Per-robot noise for the goal-relative observation channel."""
        ss = np.random.SeedSequence(
            entropy=self.base_seed,
            spawn_key=(int(epoch), int(traj), int(step), 1),
        )
        return np.random.Generator(np.random.PCG64(ss)).standard_normal((n, 4))


def estimate_observation(state: np.ndarray, i: int, adjacency: np.ndarray,
                         sigma: float, stream: NoiseStream | None = None,
                         key: tuple[int, int, int] | None = None) -> LocalObservation:
    """Noisy relative states of robot i's neighbors, ascending-id order.

    With ``sigma == 0`` (or no stream) the observation is noiseless and the
    self entry is exactly zero.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    state = np.asarray(state, dtype=np.float64)
    n = state.shape[0]
    neighbors = np.flatnonzero(adjacency[i])
    rel = state[neighbors] - state[i]
    if sigma > 0 and stream is not None:
        epoch, traj, step = key
        noise = stream.block(epoch, traj, step, n)[i]
        idx = (neighbors[:, None] * 4 + np.arange(4)[None, :]).ravel()
        rel = rel + sigma * noise[idx].reshape(-1, 4)
    return LocalObservation(robot=i, neighbor_ids=neighbors, rel=rel)
