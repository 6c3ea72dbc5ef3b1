"""Closed-loop rollout of a policy through the double-integrator world.

The rollout is vectorized over a batch of trajectories and expressed with
tape ops, so training can backpropagate through every simulator step. The
per-step pipeline matches the single-robot contract exactly: adjacency ->
egocentric observation (with optional Gaussian noise) -> policy forward per
robot -> dynamics step. Neighbor filtering is realized by masking attention
scores, which zeroes the weight of non-neighbors identically.

With no tape the same code runs as plain numpy (evaluation path); wall
boundary resolution is only available there, since the projection is not
differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from . import autodiff as ad
from .perception import NoiseStream
from .policy import PolicyDescriptor, param_slices
from .world import WorldSpec, compute_adjacency, resolve_wall


class RolloutError(Exception):
    pass


MASK_PENALTY = -1e9  # added to attention scores of non-neighbors


@lru_cache(maxsize=16)
def _relative_map(n: int) -> np.ndarray:
    """(4n, 4n^2) matrix: x (4n,) -> flat relative states, entry
    (i*n + j)*4 + d equals x_j[d] - x_i[d]."""
    D = np.zeros((4 * n, 4 * n * n))
    for i in range(n):
        for j in range(n):
            for d in range(4):
                col = (i * n + j) * 4 + d
                D[j * 4 + d, col] += 1.0
                D[i * 4 + d, col] -= 1.0
    return D


@lru_cache(maxsize=16)
def _pool_map(n: int, h: int) -> np.ndarray:
    """(n*h, h) matrix summing n stacked embeddings feature-wise."""
    K = np.zeros((n * h, h))
    for j in range(n):
        K[j * h:(j + 1) * h, :] = np.eye(h)
    return K


@lru_cache(maxsize=16)
def _dynamics_maps(n: int, dt: float):
    """Semi-implicit Euler as linear maps: x' = x @ A + u @ B."""
    A = np.zeros((4 * n, 4 * n))
    B = np.zeros((2 * n, 4 * n))
    for i in range(n):
        r, c = 4 * i, 2 * i
        A[r + 0, r + 0] = 1.0
        A[r + 1, r + 1] = 1.0
        A[r + 2, r + 0] = dt
        A[r + 2, r + 2] = 1.0
        A[r + 3, r + 1] = dt
        A[r + 3, r + 3] = 1.0
        B[c + 0, r + 0] = dt * dt
        B[c + 0, r + 2] = dt
        B[c + 1, r + 1] = dt * dt
        B[c + 1, r + 3] = dt
    return A, B


class BatchedPolicy:
    """Policy weights materialized once (as tape tensors when training)."""

    def __init__(self, theta, desc: PolicyDescriptor, tape: Optional[ad.Tape] = None):
        self.desc = desc
        if isinstance(theta, ad.Tensor):
            theta_t = theta
        elif tape is not None:
            theta_t = tape.leaf(theta)
        else:
            theta_t = ad.constant(theta)
        self.theta = theta_t
        self.enc, self.dec = [], []
        self.attn = None
        pending_w = None
        for kind, shape, start, stop in param_slices(desc):
            t = ad.reshape(ad.slice_(theta_t, slice(start, stop)), shape)
            if kind == "attn":
                self.attn = ad.reshape(t, (desc.embed, 1))
            elif kind.endswith("_bias"):
                target = self.enc if kind.startswith("enc") else self.dec
                target.append((pending_w, ad.reshape(t, (1, shape[0]))))
            else:
                pending_w = t

    def _with_bias(self, x, bias_row):
        rows = x.value.shape[0]
        ones = ad.constant(np.ones((rows, 1)))
        return ad.add(x, ad.matmul(ones, bias_row))

    def forward(self, rel, mask, u_max: float, goal_rel=None):
        """rel: (B*n*n, 4) relative states; mask: (B*n, n) adjacency rows.

        Returns controls as a (B*n, 2) tensor bounded by u_max.
        """
        n = mask.shape[1]
        h = rel
        for W, b in self.enc:
            h = ad.tanh(self._with_bias(ad.matmul(h, W), b))
        scores = ad.reshape(ad.matmul(h, self.attn), (-1, n))
        masked = ad.add(
            ad.mul(scores, ad.constant(mask)),
            ad.constant((1.0 - mask) * MASK_PENALTY),
        )
        weights = ad.softmax(masked)
        embed = self.desc.embed
        w_full = ad.matmul(
            ad.reshape(weights, (-1, 1)), ad.constant(np.ones((1, embed)))
        )
        prod = ad.reshape(ad.mul(w_full, h), (-1, n * embed))
        pooled = ad.matmul(prod, ad.constant(_pool_map(n, embed)))
        if self.desc.goal_conditioned:
            if goal_rel is None:
                raise RolloutError("goal-conditioned policy needs goal_rel")
            pooled = ad.concat([pooled, goal_rel], axis=1)
        z = pooled
        for W, b in self.dec[:-1]:
            z = ad.tanh(self._with_bias(ad.matmul(z, W), b))
        W, b = self.dec[-1]
        z = self._with_bias(ad.matmul(z, W), b)
        return ad.scale(ad.tanh(z), u_max)


@dataclass
class RolloutResult:
    states: np.ndarray                 # (B, K+1, n, 4)
    tracked: Optional[list] = None     # per-step (B, 4n) tensors when on tape


def rollout(theta, desc: PolicyDescriptor, x0: np.ndarray, horizon: int,
            world: WorldSpec, sigma: float = 0.0,
            stream: Optional[NoiseStream] = None, epoch: int = 0,
            traj_ids: Optional[np.ndarray] = None,
            goals: Optional[np.ndarray] = None,
            tape: Optional[ad.Tape] = None,
            boundaries: bool = False) -> RolloutResult:
    """Roll the policy for ``horizon`` steps from a batch of initial states.

    x0: (B, n, 4); goals: (B, n, 2) (required if the policy is
    goal-conditioned). Returns horizon+1 states with samples[0] = x0.
    """
    if horizon < 1:
        raise RolloutError("horizon must be >= 1")
    if boundaries and tape is not None:
        raise RolloutError("boundary resolution is not differentiable")
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim != 3 or x0.shape[2] != 4:
        raise RolloutError(f"bad initial state shape {x0.shape}")
    B, n = x0.shape[0], x0.shape[1]
    if traj_ids is None:
        traj_ids = np.arange(B)
    policy = BatchedPolicy(theta, desc, tape=tape)
    D = ad.constant(_relative_map(n))
    A_dyn, B_dyn = _dynamics_maps(n, world.dt)
    A_dyn, B_dyn = ad.constant(A_dyn), ad.constant(B_dyn)

    goal4 = None
    if desc.goal_conditioned:
        if goals is None:
            raise RolloutError("goal-conditioned rollout needs goals")
        goal4 = np.zeros((B, 4 * n))
        goal4[:, 0::4] = goals[:, :, 0]
        goal4[:, 1::4] = goals[:, :, 1]
        goal4 = ad.constant(goal4)

    X = ad.constant(x0.reshape(B, 4 * n))
    states = np.empty((B, horizon + 1, n, 4))
    states[:, 0] = x0
    tracked = [X] if tape is not None else None

    for k in range(horizon):
        try:
            cur = X.value.reshape(B, n, 4)
            mask = np.empty((B, n, n))
            for b in range(B):
                mask[b] = compute_adjacency(cur[b], world)
            mask = mask.reshape(B * n, n)

            rel = ad.matmul(X, D)
            if sigma > 0 and stream is not None:
                noise = np.empty((B, 4 * n * n))
                for b in range(B):
                    noise[b] = stream.block(
                        epoch, int(traj_ids[b]), k, n
                    ).reshape(-1)
                rel = ad.add(rel, ad.constant(sigma * noise))
            rel = ad.reshape(rel, (B * n * n, 4))

            goal_rel = None
            if desc.goal_conditioned:
                goal_rel = ad.sub(goal4, X)
                if sigma > 0 and stream is not None:
                    gnoise = np.empty((B, 4 * n))
                    for b in range(B):
                        gnoise[b] = stream.goal_block(
                            epoch, int(traj_ids[b]), k, n
                        ).reshape(-1)
                    goal_rel = ad.add(goal_rel, ad.constant(sigma * gnoise))
                goal_rel = ad.reshape(goal_rel, (B * n, 4))

            u = policy.forward(rel, mask, world.u_max, goal_rel=goal_rel)
            U = ad.reshape(u, (B, 2 * n))
            X = ad.add(ad.matmul(X, A_dyn), ad.matmul(U, B_dyn))
        except ad.AutodiffError as exc:
            raise RolloutError(f"rollout failed at step {k}: {exc}") from exc
        if boundaries and world.wall is not None:
            nxt = X.value.reshape(B, n, 4)
            prev = states[:, k]
            for b in range(B):
                nxt[b] = resolve_wall(prev[b], nxt[b], world)
            X = ad.constant(nxt.reshape(B, 4 * n))
        states[:, k + 1] = X.value.reshape(B, n, 4)
        if tracked is not None:
            tracked.append(X)
    return RolloutResult(states=states, tracked=tracked)
