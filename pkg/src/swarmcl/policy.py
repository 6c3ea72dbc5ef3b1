"""Learnable distributed control policy.

One network shared by all robots: each neighbor's relative state is encoded
by a small tanh MLP, an attention score per neighbor feeds a softmax, the
embeddings are pooled by the attention weights (summed in ascending neighbor
id for determinism), and a tanh decoder maps the pooled embedding to a 2D
control, squashed to [-u_max, u_max]. The pooling makes the output invariant
to neighbor ordering and robust to variable neighbor counts.

Optionally (``goal_conditioned``) the robot's goal-relative state
``[g - p, -v]`` is concatenated to the pooled embedding before the decoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .perception import LocalObservation


class PolicyError(Exception):
    pass


@dataclass(frozen=True)
class PolicyDescriptor:
    embed: int = 16
    enc_sizes: tuple = (4, 16, 16)   # per-neighbor encoder layer widths
    dec_sizes: tuple = (16, 16, 2)   # decoder layer widths
    goal_conditioned: bool = False

    def __post_init__(self):
        if any(s <= 0 for s in self.enc_sizes + self.dec_sizes):
            raise PolicyError("zero-dimension layer in descriptor")
        if self.enc_sizes[0] != 4:
            raise PolicyError("encoder input must be the 4D relative state")
        if self.enc_sizes[-1] != self.embed:
            raise PolicyError("encoder output width must equal embed dim")
        expected = self.embed + (4 if self.goal_conditioned else 0)
        if self.dec_sizes[0] != expected:
            raise PolicyError(
                f"decoder input width {self.dec_sizes[0]} != {expected}"
            )
        if self.dec_sizes[-1] != 2:
            raise PolicyError("decoder must output a 2D control")

    def layer_shapes(self):
        """(weight shape, bias length) pairs in flat-vector layout order."""
        shapes = []
        for fin, fout in zip(self.enc_sizes[:-1], self.enc_sizes[1:]):
            shapes.append((("enc", (fin, fout)), ("bias", fout)))
        shapes.append((("attn", (self.embed,)), None))
        for fin, fout in zip(self.dec_sizes[:-1], self.dec_sizes[1:]):
            shapes.append((("dec", (fin, fout)), ("bias", fout)))
        return shapes

    @property
    def param_count(self) -> int:
        total = 0
        for w, b in self.layer_shapes():
            total += int(np.prod(w[1]))
            if b is not None:
                total += b[1]
        return total


def init_params(desc: PolicyDescriptor, seed: int) -> np.ndarray:
    """Flat parameter vector: Xavier-uniform weights, zero biases."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    chunks = []
    for w, b in desc.layer_shapes():
        kind, shape = w
        if kind == "attn":
            fan_in, fan_out = shape[0], 1
        else:
            fan_in, fan_out = shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-bound, bound, size=int(np.prod(shape))))
        if b is not None:
            chunks.append(np.zeros(b[1]))
    return np.concatenate(chunks)


def unpack_params(desc: PolicyDescriptor, theta: np.ndarray):
    """Split the flat vector into (enc_layers, attn, dec_layers)."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (desc.param_count,):
        raise PolicyError(
            f"parameter vector length {theta.shape} != ({desc.param_count},)"
        )
    offset = 0
    enc, dec, attn = [], [], None
    for w, b in desc.layer_shapes():
        kind, shape = w
        size = int(np.prod(shape))
        W = theta[offset:offset + size].reshape(shape)
        offset += size
        if b is not None:
            bias = theta[offset:offset + b[1]]
            offset += b[1]
        if kind == "enc":
            enc.append((W, bias))
        elif kind == "dec":
            dec.append((W, bias))
        else:
            attn = W
    return enc, attn, dec


def param_slices(desc: PolicyDescriptor):
    """(kind, shape, start, stop) for every weight/bias in layout order."""
    out = []
    offset = 0
    for w, b in desc.layer_shapes():
        kind, shape = w
        size = int(np.prod(shape))
        out.append((kind, shape, offset, offset + size))
        offset += size
        if b is not None:
            out.append((kind + "_bias", (b[1],), offset, offset + b[1]))
            offset += b[1]
    return out


def policy_forward(theta: np.ndarray, desc: PolicyDescriptor,
                   obs: LocalObservation, u_max: float,
                   goal_rel: np.ndarray | None = None) -> np.ndarray:
    """Reference single-robot forward pass (no gradient tracking)."""
    if obs.rel.shape[0] == 0:
        raise PolicyError("observation must contain at least the self entry")
    if not np.all(np.isfinite(obs.rel)):
        raise PolicyError("non-finite observation")
    enc, attn, dec = unpack_params(desc, theta)
    h = obs.rel
    for W, b in enc:
        h = np.tanh(h @ W + b)
    scores = h @ attn
    scores = scores - np.max(scores)
    e = np.exp(scores)
    a = e / np.sum(e)
    pooled = a @ h  # ascending-id summation
    if desc.goal_conditioned:
        if goal_rel is None:
            raise PolicyError("goal-conditioned policy needs goal_rel")
        pooled = np.concatenate([pooled, goal_rel])
    z = pooled
    for W, b in dec[:-1]:
        z = np.tanh(z @ W + b)
    W, b = dec[-1]
    z = z @ W + b
    return u_max * np.tanh(z)
