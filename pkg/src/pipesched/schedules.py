"""Schedule data model: tasks, stage maps, per-device orders, serialization.

A Schedule is the contract between the builders, the simulator, the numeric
runtime and the CLI.  Builders live in :mod:`pipesched.builders`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Iterator

from .core import ApproachId
from .errors import ScheduleError


class TaskKind(str, Enum):
    FORWARD = "F"
    BACKWARD = "B"


class Direction(str, Enum):
    DOWN = "down"
    UP = "up"

    @property
    def opposite(self) -> "Direction":
        return Direction.UP if self is Direction.DOWN else Direction.DOWN


@dataclass(frozen=True, order=True)
class Task:
    """One forward or backward pass of one micro-batch through one stage.

    ``stage`` is a 0-based index into the task's own pipeline direction
    (0 .. v*D-1); ``micro_batch`` ids are global and 1-based; ``unit`` is the
    basic-scheduling-unit index for concatenated schedules.
    """

    kind: TaskKind
    micro_batch: int
    stage: int
    direction: Direction = Direction.DOWN
    unit: int = 0

    @property
    def key(self) -> tuple:
        # unit is derived bookkeeping, not part of the identity
        return (self.kind, self.micro_batch, self.stage, self.direction)

    def __repr__(self):
        arrow = "" if self.direction is Direction.DOWN else "^"
        return f"{self.kind.value}{self.micro_batch}s{self.stage}{arrow}"


@dataclass(frozen=True)
class StageMap:
    """Assignment of one pipeline direction's stages to devices."""

    num_stages: int
    direction: Direction
    assignment: tuple[int, ...]

    def __post_init__(self):
        if len(self.assignment) != self.num_stages:
            raise ScheduleError("stage assignment length mismatch")

    def device_of(self, stage: int) -> int:
        return self.assignment[stage]

    @cached_property
    def locality(self) -> frozenset[tuple[int, int]]:
        """Consecutive-stage pairs colocated on one device (local-copy edges)."""
        return frozenset(
            (s, s + 1)
            for s in range(self.num_stages - 1)
            if self.assignment[s] == self.assignment[s + 1]
        )

    @cached_property
    def cross_device_boundaries(self) -> int:
        return self.num_stages - 1 - len(self.locality)


def looping_map(D: int, v: int, direction: Direction = Direction.DOWN) -> StageMap:
    """Megatron-style looping map: device d holds stages d, d+D, ..., d+(v-1)D."""
    assignment = []
    for s in range(v * D):
        d = s % D
        assignment.append(d if direction is Direction.DOWN else D - 1 - d)
    return StageMap(v * D, direction, tuple(assignment))


def v_shaped_map(D: int, v: int, direction: Direction = Direction.DOWN) -> StageMap:
    """V-shaped map: stage legs alternate descending/ascending device order.

    With v=2 this is the map where stages 0..D-1 sit on devices 0..D-1 and
    stages D..2D-1 fold back onto devices D-1..0, so the fold boundary is a
    local copy.  The up direction is the exact device mirror.
    """
    assignment = []
    for s in range(v * D):
        leg, pos = divmod(s, D)
        d = pos if leg % 2 == 0 else D - 1 - pos
        assignment.append(d if direction is Direction.DOWN else D - 1 - d)
    return StageMap(v * D, direction, tuple(assignment))


@dataclass(frozen=True, eq=False)
class Schedule:
    """Per-device ordered task lists plus the stage->device maps.

    ``per_device[d]`` is device d's execution order.  ``starts`` optionally
    carries the canonical-unit slot layout (tf=1, tb=2, chunk durations
    divided by v); it is what merge conflict checking operates on.
    """

    approach: ApproachId
    D: int
    N: int
    v: int
    K: int
    per_device: tuple[tuple[Task, ...], ...]
    stage_maps: tuple[StageMap, ...]
    starts: dict | None = None

    # -- lookup helpers ------------------------------------------------------

    @cached_property
    def _maps_by_direction(self) -> dict:
        return {m.direction: m for m in self.stage_maps}

    def stage_map(self, direction: Direction) -> StageMap:
        return self._maps_by_direction[direction]

    @property
    def directions(self) -> tuple[Direction, ...]:
        return tuple(m.direction for m in self.stage_maps)

    @property
    def num_stages(self) -> int:
        return self.v * self.D

    @property
    def is_bidirectional(self) -> bool:
        return len(self.stage_maps) == 2

    def device_of(self, task: Task) -> int:
        return self.stage_map(task.direction).device_of(task.stage)

    def all_tasks(self) -> Iterator[Task]:
        for row in self.per_device:
            yield from row

    def micro_batches(self, direction: Direction | None = None) -> tuple[int, ...]:
        ids = {
            t.micro_batch
            for t in self.all_tasks()
            if direction is None or t.direction is direction
        }
        return tuple(sorted(ids))

    def canonical_duration(self, task: Task) -> Fraction:
        """Slot width in canonical units: forward tf/v, backward tb/v."""
        return Fraction(1, self.v) if task.kind is TaskKind.FORWARD else Fraction(2, self.v)

    # -- dataflow ------------------------------------------------------------

    @cached_property
    def task_index(self) -> dict:
        index = {}
        for d, row in enumerate(self.per_device):
            for pos, t in enumerate(row):
                if t.key in index:
                    raise ScheduleError(f"duplicate task {t!r}")
                index[t.key] = (d, pos, t)
        return index

    def dependencies(self, task: Task) -> tuple[Task, ...]:
        """Dataflow predecessors of a task (within its own direction)."""
        last = self.num_stages - 1
        deps = []
        if task.kind is TaskKind.FORWARD:
            if task.stage > 0:
                deps.append((TaskKind.FORWARD, task.micro_batch, task.stage - 1, task.direction))
        else:
            if task.stage == last:
                deps.append((TaskKind.FORWARD, task.micro_batch, last, task.direction))
            else:
                deps.append((TaskKind.BACKWARD, task.micro_batch, task.stage + 1, task.direction))
        index = self.task_index
        out = []
        for key in deps:
            if key not in index:
                raise ScheduleError(f"missing dependency {key} of {task!r}")
            out.append(index[key][2])
        return tuple(out)


def validate_schedule(schedule: Schedule) -> Schedule:
    """Generic structural validator run by every builder and test.

    Checks completeness (each micro-batch/stage has exactly one forward and
    one backward), the stage->device placement, micro-batch id disjointness
    across directions, and that dataflow plus per-device order is acyclic
    (i.e. the schedule can actually execute).
    """
    S = schedule.num_stages
    seen: dict = {}
    for d, row in enumerate(schedule.per_device):
        for t in row:
            if schedule.device_of(t) != d:
                raise ScheduleError(
                    f"{t!r} placed on device {d}, stage map says {schedule.device_of(t)}"
                )
            if t.key in seen:
                raise ScheduleError(f"duplicate task {t!r}")
            seen[t.key] = t

    by_direction: dict = {}
    for t in seen.values():
        by_direction.setdefault(t.direction, {}).setdefault(t.micro_batch, []).append(t)
    mb_sets = {
        direction: set(group) for direction, group in by_direction.items()
    }
    if len(mb_sets) == 2:
        a, b = mb_sets.values()
        if a & b:
            raise ScheduleError(f"micro-batch ids shared across directions: {sorted(a & b)}")
    for direction, group in by_direction.items():
        for mb, tasks in group.items():
            fwd = sorted(t.stage for t in tasks if t.kind is TaskKind.FORWARD)
            bwd = sorted(t.stage for t in tasks if t.kind is TaskKind.BACKWARD)
            if fwd != list(range(S)) or bwd != list(range(S)):
                raise ScheduleError(
                    f"micro-batch {mb} ({direction.value}) does not cover all "
                    f"{S} stages exactly once"
                )

    _check_acyclic(schedule)

    if schedule.starts is not None:
        _check_grid_overlap(schedule)
    return schedule


def _check_acyclic(schedule: Schedule) -> None:
    # Kahn's algorithm over dataflow edges + per-device chain edges.
    indegree: dict = {}
    successors: dict = {}
    for row in schedule.per_device:
        for prev, nxt in zip(row, row[1:]):
            successors.setdefault(prev.key, []).append(nxt.key)
            indegree[nxt.key] = indegree.get(nxt.key, 0) + 1
        for t in row:
            indegree.setdefault(t.key, 0)
            for dep in schedule.dependencies(t):
                successors.setdefault(dep.key, []).append(t.key)
                indegree[t.key] = indegree.get(t.key, 0) + 1
    ready = [k for k, deg in indegree.items() if deg == 0]
    visited = 0
    while ready:
        key = ready.pop()
        visited += 1
        for succ in successors.get(key, ()):
            indegree[succ] -= 1
            if indegree[succ] == 0:
                ready.append(succ)
    if visited != len(indegree):
        stuck = sorted(k for k, deg in indegree.items() if deg > 0)[:6]
        raise ScheduleError(f"schedule has a dependency cycle near {stuck}")


def _check_grid_overlap(schedule: Schedule) -> None:
    for d, row in enumerate(schedule.per_device):
        intervals = []
        for t in row:
            if t in schedule.starts:
                start = schedule.starts[t]
                intervals.append((start, start + schedule.canonical_duration(t), t))
        intervals.sort()
        for (s0, e0, t0), (s1, e1, t1) in zip(intervals, intervals[1:]):
            if s1 < e0:
                raise ScheduleError(
                    f"device {d}: {t0!r} [{s0},{e0}) overlaps {t1!r} [{s1},{e1})"
                )


# -- serialization -----------------------------------------------------------

def _frac_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)


def parse_fraction(s: str) -> Fraction:
    return Fraction(s)


def schedule_to_dict(schedule: Schedule) -> dict:
    def task_row(t: Task):
        row = [t.kind.value, t.micro_batch, t.stage, t.direction.value, t.unit]
        if schedule.starts is not None and t in schedule.starts:
            row.append(_frac_str(schedule.starts[t]))
        else:
            row.append(None)
        return row

    return {
        "approach": schedule.approach.value,
        "D": schedule.D,
        "N": schedule.N,
        "v": schedule.v,
        "K": schedule.K,
        "stage_maps": [
            {
                "direction": m.direction.value,
                "num_stages": m.num_stages,
                "assignment": list(m.assignment),
            }
            for m in schedule.stage_maps
        ],
        "per_device": [[task_row(t) for t in row] for row in schedule.per_device],
    }


def schedule_from_dict(data: dict) -> Schedule:
    maps = tuple(
        StageMap(m["num_stages"], Direction(m["direction"]), tuple(m["assignment"]))
        for m in data["stage_maps"]
    )
    starts: dict = {}
    rows = []
    for row in data["per_device"]:
        tasks = []
        for kind, mb, stage, direction, unit, start in row:
            t = Task(TaskKind(kind), mb, stage, Direction(direction), unit)
            tasks.append(t)
            if start is not None:
                starts[t] = parse_fraction(start)
        rows.append(tuple(tasks))
    return Schedule(
        approach=ApproachId(data["approach"]),
        D=data["D"],
        N=data["N"],
        v=data["v"],
        K=data["K"],
        per_device=tuple(rows),
        stage_maps=maps,
        starts=starts or None,
    )


def dump_schedule(schedule: Schedule) -> str:
    return json.dumps(schedule_to_dict(schedule), indent=1, sort_keys=True)


def load_schedule(text: str) -> Schedule:
    return schedule_from_dict(json.loads(text))
