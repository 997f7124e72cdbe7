"""Synchronous pipeline-parallel schedule construction, simulation and verification."""

from .core import (
    ApproachId,
    ClusterSpec,
    CostModel,
    ModelProfile,
    message_size,
    validate_cluster,
)
from .schedules import Direction, Schedule, StageMap, Task, TaskKind, validate_schedule
from .builders import (
    build,
    build_1f1b,
    build_bitpipe,
    build_chimera,
    build_gpipe,
    build_interleaved_looping,
    build_v_shaped,
    merge_bidirectional,
)

__all__ = [
    "ApproachId",
    "ClusterSpec",
    "CostModel",
    "ModelProfile",
    "message_size",
    "validate_cluster",
    "Direction",
    "Schedule",
    "StageMap",
    "Task",
    "TaskKind",
    "validate_schedule",
    "build",
    "build_1f1b",
    "build_bitpipe",
    "build_chimera",
    "build_gpipe",
    "build_interleaved_looping",
    "build_v_shaped",
    "merge_bidirectional",
]

__version__ = "0.1.0"
