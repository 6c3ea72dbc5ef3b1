"""Command-line workflow: generate / train / eval / plot / inspect."""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .experts import generate_dataset, make_world
from .io_files import (
    read_checkpoint,
    read_dataset,
    write_checkpoint,
    write_dataset,
)
from .training import evaluate, train


class CliError(Exception):
    pass


def _cmd_generate(args):
    cfg = load_config(args.config)
    v = cfg.values
    world = make_world(v["task"], v["seed"],
                       arena_half_extent=v["arena_half_extent"],
                       comm_radius=v["comm_radius"], dt=v["T"],
                       u_max=v["u_max"])
    dataset = generate_dataset(v["task"], v["n"], v["L"], v["K"], v["seed"],
                               cfg=cfg.expert_config(), world=world)
    with _cleanup_on_failure(args.out):
        write_dataset(dataset, args.out)


def _cmd_train(args):
    cfg = load_config(args.config)
    dataset = read_dataset(args.data)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = train(dataset, cfg.train_config())
    curve_path = out_dir / "curve.csv"
    with _cleanup_on_failure(curve_path):
        with open(curve_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "K_e", "loss"])
            for step, k_e, loss in result.curve:
                w.writerow([step, k_e, repr(loss)])
    for ckpt in result.checkpoints:
        path = out_dir / f"checkpoint_{ckpt.step:06d}.swck"
        with _cleanup_on_failure(path):
            write_checkpoint(ckpt, path)


def _cmd_eval(args):
    ckpt = read_checkpoint(args.checkpoint)
    dataset = read_dataset(args.data)
    report = evaluate(ckpt, dataset, sigma_eval=args.sigma,
                      noise_seed=args.noise_seed, oracle=args.oracle)
    with _cleanup_on_failure(args.out):
        with open(args.out, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["traj_id", "loss", "epos", "frechet", "ncomp"])
            for l in range(report.test_size):
                w.writerow([l, repr(report.loss[l]),
                            repr(report.position_error[l]),
                            repr(report.frechet_distance[l]),
                            int(report.completed[l])])
            w.writerow(["mean", repr(report.mean_loss),
                        repr(report.mean_position_error),
                        repr(report.mean_frechet),
                        repr(report.mean_completed)])


def _cmd_inspect(args):
    dataset = read_dataset(args.data)
    w = dataset.world
    print(f"task={w.task}")
    print(f"n={dataset.n}")
    print(f"L={dataset.L}")
    print(f"K={dataset.K}")
    print(f"T={w.dt}")
    print(f"arena_half_extent={w.arena_half_extent}")
    print(f"comm_radius={w.comm_radius}")
    print(f"u_max={w.u_max}")
    if w.wall is not None:
        print(f"wall=y:{w.wall.y} gap_x:{w.wall.gap_x} "
              f"gap_half_width:{w.wall.gap_half_width} "
              f"thickness:{w.wall.thickness}")
    else:
        print("wall=none")


def _cmd_plot(args):
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    if args.curve:
        steps, horizons, losses = [], [], []
        with open(args.curve, newline="") as f:
            for row in csv.DictReader(f):
                steps.append(int(row["step"]))
                horizons.append(int(row["K_e"]))
                losses.append(float(row["loss"]))
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(steps, losses, lw=0.8, label="training loss")
        ax.set_xlabel("training step")
        ax.set_ylabel("loss")
        ax.set_yscale("log")
        twin = ax.twinx()
        twin.plot(steps, horizons, color="tab:orange", lw=1.0,
                  label="horizon")
        twin.set_ylabel("horizon K_e")
        ax.legend(loc="upper right")
    elif args.traj is not None:
        ckpt = read_checkpoint(args.checkpoint)
        dataset = read_dataset(args.data)
        report_states = _predict(ckpt, dataset, args.traj, args.sigma)
        expert = dataset.states[args.traj]
        fig, ax = plt.subplots(figsize=(5, 5))
        colors = plt.cm.tab10(np.linspace(0, 1, dataset.n))
        for i in range(dataset.n):
            # solid expert lines, circle-marked predictions
            ax.plot(expert[:, i, 0], expert[:, i, 1], "-", color=colors[i])
            ax.plot(report_states[:, i, 0], report_states[:, i, 1], "o",
                    color=colors[i], ms=2.5, alpha=0.7)
            ax.plot(dataset.goals[args.traj, i, 0],
                    dataset.goals[args.traj, i, 1], "s", color=colors[i])
        if dataset.world.wall is not None:
            _draw_wall(ax, dataset.world)
        ax.set_aspect("equal")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
    else:
        raise CliError("plot needs either --curve or --traj")
    with _cleanup_on_failure(args.out):
        fig.savefig(args.out, format="svg")
    plt.close(fig)


def _predict(ckpt, dataset, index, sigma):
    from .perception import NoiseStream
    from .rollout import rollout

    res = rollout(ckpt.theta, ckpt.desc, dataset.states[index:index + 1, 0],
                  dataset.K, dataset.world, sigma=sigma,
                  stream=NoiseStream(0), goals=dataset.goals[index:index + 1],
                  boundaries=True)
    return res.states[0]


def _draw_wall(ax, world):
    wall = world.wall
    e = world.arena_half_extent
    half = wall.thickness / 2
    for x0, x1 in ((-e, wall.gap_x - wall.gap_half_width),
                   (wall.gap_x + wall.gap_half_width, e)):
        ax.fill([x0, x1, x1, x0], [wall.y - half, wall.y - half,
                                   wall.y + half, wall.y + half],
                color="0.3")


class _cleanup_on_failure:
    """Remove a partially written output file if the block raises."""

    def __init__(self, path):
        self.path = Path(path)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None and self.path.exists():
            try:
                os.remove(self.path)
            except OSError:
                pass
        return False


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmcl",
        description="Curriculum imitation learning for multi-robot control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate an expert dataset")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_generate)

    t = sub.add_parser("train", help="train a policy on a dataset")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out-dir", required=True)
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--sigma", type=float, default=0.0)
    e.add_argument("--noise-seed", type=int, default=0)
    e.add_argument("--oracle", action="store_true",
                   help="score the expert trajectories themselves")
    e.add_argument("--out", required=True)
    e.set_defaults(func=_cmd_eval)

    p = sub.add_parser("plot", help="emit SVG plots")
    p.add_argument("--curve", help="training curve csv")
    p.add_argument("--traj", type=int, help="trajectory index to overlay")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plot)

    i = sub.add_parser("inspect", help="print dataset header fields")
    i.add_argument("--data", required=True)
    i.set_defaults(func=_cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - single CLI error funnel
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
