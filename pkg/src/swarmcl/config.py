"""Flat key=value run configuration files.

Lines are ``key = value``; ``#`` starts a comment. Unknown keys are errors;
missing keys fall back to the documented defaults below.
"""

from __future__ import annotations

from dataclasses import dataclass

from .experts import ExpertConfig
from .training import TrainConfig
from .world import NAVIGATION, PASSAGE, TASKS


class ConfigError(Exception):
    pass


def _parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("on", "true", "1", "yes"):
        return True
    if v in ("off", "false", "0", "no"):
        return False
    raise ConfigError(f"expected on/off, got {value!r}")


# key -> (type converter, default)
SCHEMA = {
    "task": (str, NAVIGATION),
    "n": (int, 4),
    "L": (int, 200),
    "K": (int, 60),
    "T": (float, 0.05),
    "sigma": (float, 0.0),
    "seed": (int, 0),
    "curriculum": (_parse_bool, True),
    "c_K": (int, 1),
    "c_N": (int, 150),
    "K_init": (int, 1),
    "baseline_K": (int, 5),
    "lr": (float, 0.005),
    "E": (int, 5000),
    "batch": (int, 32),
    "comm_radius": (float, 1.5),
    "u_max": (float, 1.0),
    "arena_half_extent": (float, 2.5),
    "k_attract": (float, 1.5),
    "k_repulse": (float, 0.3),
    "k_damp": (float, 1.8),
    "d_safe": (float, 0.35),
    "waypoint_offset": (float, 0.5),
    "goal_switch_radius": (float, 0.5),
    "goal_conditioned": (_parse_bool, True),
    "checkpoint_every": (int, 500),
    "embed": (int, 16),
}


@dataclass
class RunConfig:
    values: dict

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key)

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(
            steps=v["E"], batch_size=v["batch"], lr=v["lr"],
            sigma_train=v["sigma"], seed=v["seed"],
            curriculum=v["curriculum"], c_K=v["c_K"], c_N=v["c_N"],
            K_init=v["K_init"], baseline_K=v["baseline_K"],
            checkpoint_every=v["checkpoint_every"],
            goal_conditioned=v["goal_conditioned"], embed=v["embed"],
        )

    def expert_config(self) -> ExpertConfig:
        v = self.values
        return ExpertConfig(
            k_attract=v["k_attract"], k_repulse=v["k_repulse"],
            k_damp=v["k_damp"], d_safe=v["d_safe"],
            waypoint_offset=v["waypoint_offset"],
            goal_switch_radius=v["goal_switch_radius"],
        )


def parse_config(text: str) -> RunConfig:
    values = {key: default for key, (_, default) in SCHEMA.items()}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        conv = SCHEMA[key][0]
        try:
            values[key] = conv(value.strip())
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}")
    if values["task"] not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}")
    return RunConfig(values=values)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())
