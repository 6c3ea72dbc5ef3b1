"""Training loop (BPTT through the rollout, Adam updates) and evaluation."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, adam_step, backward
from .curriculum import sample_subtrajectory, scheduler_horizon
from .metrics import (
    MetricsReport,
    tasks_completed,
    traj_loss,
    trajectory_frechet,
)
from .perception import NoiseStream
from .policy import PolicyDescriptor, init_params
from .rollout import rollout
from .world import Dataset, count_overlaps


class TrainingError(Exception):
    pass


def make_descriptor(goal_conditioned: bool = False,
                    embed: int = 16) -> PolicyDescriptor:
    dec_in = embed + (4 if goal_conditioned else 0)
    return PolicyDescriptor(
        embed=embed,
        enc_sizes=(4, embed, embed),
        dec_sizes=(dec_in, embed, 2),
        goal_conditioned=goal_conditioned,
    )


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 5000            # E
    batch_size: int = 32         # L_b
    lr: float = 0.005
    sigma_train: float = 0.0
    seed: int = 0
    curriculum: bool = True
    c_K: int = 1
    c_N: int = 150
    K_init: int = 1
    baseline_K: int = 5          # fixed horizon when curriculum is off
    checkpoint_every: int = 500
    goal_conditioned: bool = True
    embed: int = 16

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise TrainingError("steps and batch_size must be >= 1")
        if self.sigma_train < 0:
            raise TrainingError("sigma_train must be >= 0")

    @property
    def descriptor(self) -> PolicyDescriptor:
        return make_descriptor(self.goal_conditioned, self.embed)

    def hash(self) -> int:
        return zlib.crc32(repr(self).encode())


@dataclass
class Checkpoint:
    desc: PolicyDescriptor
    theta: np.ndarray
    adam: AdamState
    step: int
    config_hash: int


@dataclass
class TrainResult:
    final: Checkpoint
    checkpoints: list
    curve: list  # (step, K_e, loss) per training step


def _horizon_for_step(cfg: TrainConfig, e: int, K_max: int) -> int:
    if cfg.curriculum:
        return scheduler_horizon(e, cfg.c_K, cfg.c_N, cfg.K_init, K_max)
    return min(cfg.baseline_K, K_max)


def train(dataset: Dataset, cfg: TrainConfig) -> TrainResult:
    """Imitation training over the demonstration dataset.

    Per step: pick the stage horizon, sample a batch of sub-trajectories,
    roll the policy out from each pinned initial state (with training
    perception noise), backpropagate the horizon-normalized loss through the
    rollout and apply one Adam update. Fully deterministic in (dataset, cfg).
    """
    desc = cfg.descriptor
    theta = init_params(desc, cfg.seed)
    adam = AdamState.fresh(theta.size, lr=cfg.lr)
    stream = NoiseStream(cfg.seed)
    K = dataset.K
    cfg_hash = cfg.hash()
    curve = []
    checkpoints = []

    for e in range(1, cfg.steps + 1):
        K_e = _horizon_for_step(cfg, e, K)
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(entropy=cfg.seed, spawn_key=(2, e))
        ))
        B, n = cfg.batch_size, dataset.n
        expert = np.empty((B, K_e + 1, n, 4))
        goals = np.empty((B, n, 2))
        for slot in range(B):
            l = int(rng.integers(0, dataset.L))
            sub = sample_subtrajectory(dataset.states[l], K_e, rng, source=l)
            expert[slot] = sub.states
            goals[slot] = dataset.goals[l]

        tape = ad.Tape()
        theta_t = tape.leaf(theta)
        res = rollout(
            theta_t, desc, expert[:, 0], K_e, dataset.world,
            sigma=cfg.sigma_train, stream=stream, epoch=e,
            traj_ids=np.arange(B), goals=goals, tape=tape,
        )
        total = None
        for k in range(1, K_e + 1):
            diff = ad.sub(res.tracked[k],
                          ad.constant(expert[:, k].reshape(B, 4 * n)))
            term = ad.sum_(ad.square(diff))
            total = term if total is None else ad.add(total, term)
        loss = ad.scale(total, 1.0 / (K_e * B))
        if not np.isfinite(loss.value):
            raise TrainingError(
                f"non-finite loss at step {e} (K_e={K_e}, sigma={cfg.sigma_train})"
            )
        grads = backward(tape, loss)
        g = grads.get(theta_t.nid)
        if g is None:
            g = np.zeros_like(theta)
        theta, adam = adam_step(theta, g, adam)
        curve.append((e, K_e, float(loss.value)))
        if cfg.checkpoint_every and e % cfg.checkpoint_every == 0:
            checkpoints.append(Checkpoint(desc, theta.copy(),
                                          replace(adam), e, cfg_hash))

    final = Checkpoint(desc, theta.copy(), replace(adam), cfg.steps, cfg_hash)
    if not checkpoints or checkpoints[-1].step != cfg.steps:
        checkpoints.append(final)
    return TrainResult(final=final, checkpoints=checkpoints, curve=curve)


def evaluate(checkpoint: Checkpoint, testset: Dataset, sigma_eval: float,
             noise_seed: int = 0, oracle: bool = False,
             frechet_aggregate: str = "mean") -> MetricsReport:
    """Closed-loop evaluation over a held-out set (never mutates parameters).

    Each test trajectory is re-rolled from its initial state over the full
    horizon with perception noise sigma_eval; with ``oracle=True`` the expert
    trajectory itself is scored (self-consistency baseline).
    """
    desc = checkpoint.desc
    L, K = testset.L, testset.K
    if oracle:
        pred = testset.states.copy()
    else:
        stream = NoiseStream(noise_seed)
        res = rollout(
            checkpoint.theta, desc, testset.states[:, 0], K, testset.world,
            sigma=sigma_eval, stream=stream, epoch=0,
            traj_ids=np.arange(L), goals=testset.goals,
            boundaries=True,
        )
        pred = res.states
    loss = np.empty(L)
    epos = np.empty(L)
    fre = np.empty(L)
    comp = np.empty(L, dtype=int)
    overlaps = 0
    for l in range(L):
        diff = pred[l] - testset.states[l]
        loss[l] = np.sum(diff * diff) / K
        d = np.linalg.norm(pred[l, :, :, 0:2] - testset.states[l, :, :, 0:2],
                           axis=-1)
        epos[l] = np.sum(d) / (K * testset.n)
        fre[l] = trajectory_frechet(pred[l], testset.states[l],
                                    aggregate=frechet_aggregate)
        comp[l] = tasks_completed(pred[l], testset.goals[l])
        overlaps += count_overlaps(pred[l], testset.world.robot_radius)
    return MetricsReport(loss=loss, position_error=epos, frechet_distance=fre,
                         completed=comp, overlap_events=overlaps,
                         sigma_eval=sigma_eval, test_size=L)
