"""Evaluation metrics: squared trajectory loss, mean position error,
discrete Frechet distance, and tasks completed."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COMPLETION_TOLERANCE = 0.25


class MetricsError(Exception):
    pass


def _check_aligned(pred: np.ndarray, expert: np.ndarray):
    if pred.shape != expert.shape:
        raise MetricsError(
            f"shape mismatch: pred {pred.shape} vs expert {expert.shape}"
        )


def traj_loss(pred: np.ndarray, expert: np.ndarray) -> float:
    """Mean squared state error over the full horizon.

    pred/expert: (..., K+1, n, 4); leading axes are trajectory batches. The
    normalizer is K times the number of trajectories.
    """
    pred = np.asarray(pred, dtype=np.float64)
    expert = np.asarray(expert, dtype=np.float64)
    _check_aligned(pred, expert)
    if pred.ndim == 3:
        pred, expert = pred[None], expert[None]
    L, K = pred.shape[0], pred.shape[1] - 1
    diff = pred - expert
    return float(np.sum(diff * diff) / (K * L))


def mean_position_error(pred: np.ndarray, expert: np.ndarray) -> float:
    """Per-robot mean Euclidean position error, normalized like the loss."""
    pred = np.asarray(pred, dtype=np.float64)
    expert = np.asarray(expert, dtype=np.float64)
    _check_aligned(pred, expert)
    if pred.ndim == 3:
        pred, expert = pred[None], expert[None]
    L, K, n = pred.shape[0], pred.shape[1] - 1, pred.shape[2]
    d = np.linalg.norm(pred[..., 0:2] - expert[..., 0:2], axis=-1)
    return float(np.sum(d) / (K * L * n))


def frechet(path_a: np.ndarray, path_b: np.ndarray) -> float:
    """Discrete Frechet distance between two 2D point sequences (O(K^2) DP)."""
    a = np.asarray(path_a, dtype=np.float64)
    b = np.asarray(path_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or len(a) == 0 or len(b) == 0:
        raise MetricsError("paths must be non-empty (K, 2) arrays")
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    m, n = d.shape
    ca = np.empty((m, n))
    ca[0, 0] = d[0, 0]
    for j in range(1, n):
        ca[0, j] = max(ca[0, j - 1], d[0, j])
    for i in range(1, m):
        ca[i, 0] = max(ca[i - 1, 0], d[i, 0])
        for j in range(1, n):
            ca[i, j] = max(
                min(ca[i - 1, j], ca[i - 1, j - 1], ca[i, j - 1]), d[i, j]
            )
    return float(ca[-1, -1])


def trajectory_frechet(pred: np.ndarray, expert: np.ndarray,
                       aggregate: str = "mean") -> float:
    """Frechet distance per robot path, aggregated over robots."""
    _check_aligned(pred, expert)
    per_robot = [
        frechet(pred[:, i, 0:2], expert[:, i, 0:2])
        for i in range(pred.shape[1])
    ]
    if aggregate == "max":
        return float(np.max(per_robot))
    return float(np.mean(per_robot))


def tasks_completed(states: np.ndarray, goals: np.ndarray,
                    tol: float = COMPLETION_TOLERANCE) -> int:
    """Robots whose final position is within tol of their goal (closed)."""
    final = np.asarray(states, dtype=np.float64)[-1, :, 0:2]
    return int(np.sum(np.linalg.norm(final - goals, axis=1) <= tol))


@dataclass
class MetricsReport:
    """Per-trajectory and aggregate evaluation metrics."""

    loss: np.ndarray
    position_error: np.ndarray
    frechet_distance: np.ndarray
    completed: np.ndarray
    overlap_events: int
    sigma_eval: float
    test_size: int

    @property
    def mean_loss(self) -> float:
        return float(np.mean(self.loss))

    @property
    def mean_position_error(self) -> float:
        return float(np.mean(self.position_error))

    @property
    def mean_frechet(self) -> float:
        return float(np.mean(self.frechet_distance))

    @property
    def mean_completed(self) -> float:
        return float(np.mean(self.completed))
