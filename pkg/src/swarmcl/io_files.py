"""Bit-exact binary persistence for datasets and checkpoints.

Dataset layout (little-endian): magic ``SWCL``, version u16, task u8,
n u16, L u32, K u32, T f64, geometry block (arena half-extent f64, wall
presence u8 with four f64 wall fields when present, comm radius f64,
u_max f64), goals (L*n*2 f64), states (L*(K+1)*n*4 f64, trajectory-major,
then time, then robot, then [px, py, vx, vy]), trailing CRC32 of everything
after the magic.

Checkpoint layout: magic ``SWCK``, version u16, architecture descriptor,
theta (f64), Adam state, training step, config hash, trailing CRC32.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .autodiff import AdamState
from .policy import PolicyDescriptor
from .training import Checkpoint
from .world import NAVIGATION, PASSAGE, Dataset, Wall, WorldSpec

DATASET_MAGIC = b"SWCL"
CHECKPOINT_MAGIC = b"SWCK"
FORMAT_VERSION = 1
_TASK_IDS = {NAVIGATION: 0, PASSAGE: 1}
_TASK_NAMES = {v: k for k, v in _TASK_IDS.items()}


class FileFormatError(Exception):
    pass


class BadMagicError(FileFormatError):
    pass


class BadVersionError(FileFormatError):
    pass


class BadChecksumError(FileFormatError):
    pass


class EmptyDatasetError(FileFormatError):
    pass


def _finish(payload: bytearray) -> bytes:
    crc = zlib.crc32(bytes(payload[4:]))
    return bytes(payload) + struct.pack("<I", crc)


class _Reader:
    def __init__(self, data: bytes, magic: bytes):
        if len(data) < 8 or data[:4] != magic:
            raise BadMagicError(f"expected magic {magic!r}")
        body, (crc,) = data[4:-4], struct.unpack("<I", data[-4:])
        if zlib.crc32(body) != crc:
            raise BadChecksumError("payload CRC mismatch")
        self.body = body
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize("<" + fmt)
        out = struct.unpack_from("<" + fmt, self.body, self.pos)
        self.pos += size
        return out if len(out) > 1 else out[0]

    def take_f64(self, count: int) -> np.ndarray:
        out = np.frombuffer(self.body, dtype="<f8", count=count,
                            offset=self.pos).copy()
        self.pos += 8 * count
        return out


def write_dataset(dataset: Dataset, path) -> None:
    if dataset.L == 0:
        raise EmptyDatasetError("refusing to write an empty dataset")
    w = dataset.world
    out = bytearray(DATASET_MAGIC)
    out += struct.pack("<HBHII", FORMAT_VERSION, _TASK_IDS[w.task],
                       dataset.n, dataset.L, dataset.K)
    out += struct.pack("<d", w.dt)
    out += struct.pack("<d", w.arena_half_extent)
    if w.wall is not None:
        out += struct.pack("<Bdddd", 1, w.wall.y, w.wall.gap_x,
                           w.wall.gap_half_width, w.wall.thickness)
    else:
        out += struct.pack("<B", 0)
    out += struct.pack("<dd", w.comm_radius, w.u_max)
    out += np.ascontiguousarray(dataset.goals, dtype="<f8").tobytes()
    out += np.ascontiguousarray(dataset.states, dtype="<f8").tobytes()
    with open(path, "wb") as f:
        f.write(_finish(out))


def read_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        r = _Reader(f.read(), DATASET_MAGIC)
    version, task_id, n, L, K = r.take("HBHII")
    if version != FORMAT_VERSION:
        raise BadVersionError(f"unsupported dataset version {version}")
    dt = r.take("d")
    arena = r.take("d")
    wall = None
    if r.take("B"):
        y, gap_x, gap_hw, thickness = r.take("dddd")
        wall = Wall(y=y, gap_x=gap_x, gap_half_width=gap_hw,
                    thickness=thickness)
    comm_radius, u_max = r.take("dd")
    goals = r.take_f64(L * n * 2).reshape(L, n, 2)
    states = r.take_f64(L * (K + 1) * n * 4).reshape(L, K + 1, n, 4)
    world = WorldSpec(task=_TASK_NAMES[task_id], arena_half_extent=arena,
                      wall=wall, comm_radius=comm_radius, dt=dt, u_max=u_max)
    return Dataset(world=world, goals=goals, states=states)


def write_checkpoint(ckpt: Checkpoint, path) -> None:
    desc = ckpt.desc
    out = bytearray(CHECKPOINT_MAGIC)
    out += struct.pack("<H", FORMAT_VERSION)
    out += struct.pack("<HB", desc.embed, int(desc.goal_conditioned))
    out += struct.pack("<B", len(desc.enc_sizes))
    out += struct.pack(f"<{len(desc.enc_sizes)}H", *desc.enc_sizes)
    out += struct.pack("<B", len(desc.dec_sizes))
    out += struct.pack(f"<{len(desc.dec_sizes)}H", *desc.dec_sizes)
    out += struct.pack("<I", ckpt.theta.size)
    out += np.ascontiguousarray(ckpt.theta, dtype="<f8").tobytes()
    a = ckpt.adam
    out += struct.pack("<ddddI", a.lr, a.beta1, a.beta2, a.eps, a.t)
    out += np.ascontiguousarray(a.m, dtype="<f8").tobytes()
    out += np.ascontiguousarray(a.v, dtype="<f8").tobytes()
    out += struct.pack("<II", ckpt.step, ckpt.config_hash & 0xFFFFFFFF)
    with open(path, "wb") as f:
        f.write(_finish(out))


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        r = _Reader(f.read(), CHECKPOINT_MAGIC)
    version = r.take("H")
    if version != FORMAT_VERSION:
        raise BadVersionError(f"unsupported checkpoint version {version}")
    embed, goal_cond = r.take("HB")
    n_enc = r.take("B")
    enc = struct.unpack_from(f"<{n_enc}H", r.body, r.pos)
    r.pos += 2 * n_enc
    n_dec = r.take("B")
    dec = struct.unpack_from(f"<{n_dec}H", r.body, r.pos)
    r.pos += 2 * n_dec
    desc = PolicyDescriptor(embed=embed, enc_sizes=tuple(enc),
                            dec_sizes=tuple(dec),
                            goal_conditioned=bool(goal_cond))
    count = r.take("I")
    theta = r.take_f64(count)
    lr, beta1, beta2, eps, t = r.take("ddddI")
    m = r.take_f64(count)
    v = r.take_f64(count)
    step, cfg_hash = r.take("II")
    adam = AdamState(m=m, v=v, t=t, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    return Checkpoint(desc=desc, theta=theta, adam=adam, step=step,
                      config_hash=cfg_hash)
