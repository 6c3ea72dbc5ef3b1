"""Curriculum imitation learning of distributed multi-robot control policies."""

from .autodiff import AdamState, Tape, Tensor, adam_step, backward
from .curriculum import (
    CurriculumCriterion,
    SubTrajectory,
    curriculum_loss,
    sample_subtrajectory,
    scheduler_horizon,
)
from .experts import ExpertConfig, generate_dataset, make_world
from .metrics import (
    MetricsReport,
    frechet,
    mean_position_error,
    tasks_completed,
    traj_loss,
    trajectory_frechet,
)
from .perception import LocalObservation, NoiseStream, estimate_observation
from .policy import PolicyDescriptor, init_params, policy_forward
from .rollout import rollout
from .training import Checkpoint, TrainConfig, evaluate, make_descriptor, train
from .world import (
    Dataset,
    Trajectory,
    Wall,
    WorldSpec,
    compute_adjacency,
    step,
)

__version__ = "0.1.0"
