"""Trajectory-length curriculum: scheduler, sub-trajectory sampler, loss.

Training difficulty is the supervised horizon K_e. A fixed-increment
("baby step") schedule grows K_e by c_K every c_N training steps, starting
from K_init and capped at K_max. Sub-trajectories of the required length are
sliced uniformly at random out of full demonstrations, and the training loss
normalizes the accumulated squared state error by the horizon so gradients
stay comparably scaled across stages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class CurriculumError(Exception):
    pass


@dataclass(frozen=True)
class CurriculumCriterion:
    """One training stage: horizon plus the schedule that produced it."""

    stage: int
    horizon: int
    c_K: int
    c_N: int
    K_init: int
    K_max: int


def scheduler_horizon(e: int, c_K: int, c_N: int, K_init: int,
                      K_max: int) -> int:
    """Supervised horizon at training step e (1-based)."""
    if e < 1 or c_K < 1 or c_N < 1:
        raise CurriculumError("e, c_K and c_N must all be >= 1")
    return min(K_max, K_init + c_K * ((e - 1) // c_N))


@dataclass
class SubTrajectory:
    source: int        # trajectory index l
    start: int         # k0
    states: np.ndarray  # (K_e+1, n, 4)


def sample_subtrajectory(states: np.ndarray, horizon: int,
                         rng: np.random.Generator,
                         source: int = 0) -> SubTrajectory:
    """Contiguous slice of ``horizon``+1 samples, start uniform in [0, K-K_e]."""
    states = np.asarray(states, dtype=np.float64)
    K = states.shape[0] - 1
    if horizon > K:
        raise CurriculumError(f"horizon {horizon} exceeds trajectory length {K}")
    k0 = int(rng.integers(0, K - horizon + 1))
    return SubTrajectory(source=source, start=k0,
                         states=states[k0:k0 + horizon + 1])


def curriculum_loss(pred: np.ndarray, expert: np.ndarray, horizon: int,
                    batch_size: int) -> float:
    """Horizon-normalized squared error, summed over all samples and robots.

    pred/expert: (L_b, K_e+1, n, 4). The k=0 term is included but vanishes
    because predictions are pinned to the expert initial state.
    """
    pred = np.asarray(pred, dtype=np.float64)
    expert = np.asarray(expert, dtype=np.float64)
    if pred.shape != expert.shape:
        raise CurriculumError(
            f"shape mismatch: pred {pred.shape} vs expert {expert.shape}"
        )
    diff = pred - expert
    return float(np.sum(diff * diff) / (horizon * batch_size))
