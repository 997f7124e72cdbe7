"""Layout engines that place tasks on exact-rational time grids.

Two engines live here:

* :func:`list_schedule` — classic list scheduling over fixed per-device task
  orders; the simulator and the standalone builders use it.
* :func:`fused_layout` — an event-driven greedy scheduler that lays out two
  opposite-direction pipelines over one device set.  It produces the merged
  slot grids of the bidirectional schedules and, by projection, the
  fusion-ready grids of the individual halves.

The greedy discipline of :func:`fused_layout`: a device runs the
highest-priority runnable task, where priority favours the longest remaining
dependency chain (so ramp forwards of a later basic unit outrank drain
backwards of the previous one), with ties broken backward-first and then by
lower global micro-batch id.  A device defers a backward pass when a
higher-priority forward is already in flight and will arrive before the
backward would finish — the bounded idling that lets a new unit's wavefront
slot into the previous unit's drain.  New micro-batches enter one at a time
per direction, gated by the basic scheduling unit (a unit may start once the
previous unit's first micro-batch has drained) or, with early forwarding, by
a per-device activation cap.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from fractions import Fraction

from .errors import DeadlockDetected
from .schedules import Direction, StageMap, Task, TaskKind


def list_schedule(per_device, dep_fn, dur_fn):
    """Start times of tasks executed in fixed per-device order.

    Each device runs its list in order; a task starts at
    max(device free time, dependency arrival times).  Returns
    ``dict[Task, Fraction]``; raises DeadlockDetected on a cross-device cycle.
    """
    starts: dict = {}
    ends: dict = {}
    position = [0] * len(per_device)
    free = [Fraction(0)] * len(per_device)
    remaining = sum(len(row) for row in per_device)

    while remaining:
        progressed = False
        for d, row in enumerate(per_device):
            while position[d] < len(row):
                task = row[position[d]]
                ready = Fraction(0)
                blocked = False
                for dep in dep_fn(task):
                    if dep.key not in ends:
                        blocked = True
                        break
                    ready = max(ready, ends[dep.key])
                if blocked:
                    break
                start = max(free[d], ready)
                starts[task] = start
                ends[task.key] = start + dur_fn(task)
                free[d] = ends[task.key]
                position[d] += 1
                remaining -= 1
                progressed = True
        if not progressed and remaining:
            stuck = [
                row[position[d]]
                for d, row in enumerate(per_device)
                if position[d] < len(row)
            ]
            raise DeadlockDetected(
                f"no runnable task among device heads {stuck[:6]!r}", cycle=stuck
            )
    return starts


@dataclass(frozen=True)
class FusedLayout:
    """Result of the greedy bidirectional layout."""

    starts: dict          # Task -> Fraction
    per_device: tuple     # tuple[tuple[Task, ...], ...] in slot-time order
    makespan: Fraction


@dataclass(frozen=True)
class LayoutPolicy:
    """Knobs of the greedy layout discipline (defaults reproduce the paper grids)."""

    priority: str = "unit-1f1b"       # "unit-1f1b" | "backward-first"
    defer: bool = True                # idle instead of blocking an imminent task
    gate_stage: int = 0               # drain depth anchoring the next unit's gate


def fused_layout(
    D: int,
    v: int,
    maps: dict,
    micro_batches: dict,
    *,
    unit_size: int,
    early_forward: bool = False,
    act_cap_chunks: int | None = None,
    policy: LayoutPolicy = LayoutPolicy(),
) -> FusedLayout:
    """Greedy co-schedule of one or two pipeline directions.

    ``maps`` maps Direction -> StageMap and ``micro_batches`` maps
    Direction -> ordered tuple of global micro-batch ids (injection order).
    ``unit_size`` is the number of micro-batches per basic scheduling unit
    per direction.  With ``early_forward`` the unit gate is replaced by a
    per-device activation cap of ``act_cap_chunks`` chunk activations.
    """
    num_stages = v * D
    fdur = Fraction(1, v)
    bdur = Fraction(2, v)

    tasks: list[Task] = []
    index: dict = {}
    for direction, mbs in micro_batches.items():
        for j, mb in enumerate(mbs):
            unit = j // unit_size if unit_size else 0
            for s in range(num_stages):
                for kind in (TaskKind.FORWARD, TaskKind.BACKWARD):
                    t = Task(kind, mb, s, direction, unit)
                    tasks.append(t)
                    index[t.key] = t

    def deps_of(t: Task):
        out = []
        if t.kind is TaskKind.FORWARD:
            if t.stage > 0:
                out.append((TaskKind.FORWARD, t.micro_batch, t.stage - 1, t.direction))
            else:
                mbs = micro_batches[t.direction]
                j = mbs.index(t.micro_batch)
                if j > 0:  # injections enter one at a time, in order
                    out.append((TaskKind.FORWARD, mbs[j - 1], 0, t.direction))
                if not early_forward and unit_size and j >= unit_size:
                    # unit gate: previous unit's first micro-batch has drained
                    gate_mb = mbs[(j // unit_size - 1) * unit_size]
                    out.append(
                        (TaskKind.BACKWARD, gate_mb, policy.gate_stage, t.direction)
                    )
        else:
            if t.stage == num_stages - 1:
                out.append((TaskKind.FORWARD, t.micro_batch, t.stage, t.direction))
            else:
                out.append((TaskKind.BACKWARD, t.micro_batch, t.stage + 1, t.direction))
        return [index[k] for k in out]

    def remaining_path(t: Task) -> Fraction:
        # longest dataflow chain from t to its micro-batch's final backward
        if t.kind is TaskKind.FORWARD:
            return (num_stages - t.stage) * fdur + num_stages * bdur
        return (t.stage + 1) * bdur

    device_of = {t: maps[t.direction].device_of(t.stage) for t in tasks}
    blockers = {t: len(deps_of(t)) for t in tasks}
    dependents: dict = {}
    for t in tasks:
        for dep in deps_of(t):
            dependents.setdefault(dep, []).append(t)

    available: list[set] = [set() for _ in range(D)]
    for t in tasks:
        if blockers[t] == 0:
            available[device_of[t]].add(t)

    starts: dict = {}
    ends: dict = {}
    free = [Fraction(0)] * D
    act_done = [0] * D     # completed F chunks minus completed B chunks
    completions: list = [] # heap of (end, seq, task)
    clock_heap: list = [Fraction(0)]
    seq = 0
    scheduled = 0
    injection_stage0 = {direction: maps[direction].device_of(0) for direction in maps}

    def duration(t: Task) -> Fraction:
        return fdur if t.kind is TaskKind.FORWARD else bdur

    if policy.priority == "unit-1f1b":
        # Within one basic unit the discipline is 1F1B: backward before
        # forward, deeper backwards (longer chain ahead) before shallow drain
        # ones, forwards in wavefront (micro-batch id) order.  Across units a
        # later unit's ramp outranks the previous unit's remaining drain, so
        # the concatenation seams fill the way the reference layouts do.
        def priority(t: Task):
            if t.kind is TaskKind.BACKWARD:
                return (-t.unit, 0, -t.stage, t.micro_batch)
            return (-t.unit, 1, t.micro_batch, t.stage)
    else:
        def priority(t: Task):
            return (0 if t.kind is TaskKind.BACKWARD else 1, t.micro_batch, t.stage)

    def cap_blocked(t: Task, d: int) -> bool:
        return (
            early_forward
            and act_cap_chunks is not None
            and t.kind is TaskKind.FORWARD
            and t.stage == 0
            and d == injection_stage0[t.direction]
            and act_done[d] + 1 > act_cap_chunks
        )

    while scheduled < len(tasks):
        if not clock_heap:
            stuck = sorted(
                (t for d in range(D) for t in available[d]), key=priority
            )
            raise DeadlockDetected(
                f"layout stalled with {len(tasks) - scheduled} tasks left",
                cycle=stuck[:6],
            )
        now = heapq.heappop(clock_heap)
        while clock_heap and clock_heap[0] == now:
            heapq.heappop(clock_heap)

        while completions and completions[0][0] <= now:
            _, _, done_task = heapq.heappop(completions)
            d = device_of[done_task]
            act_done[d] += 1 if done_task.kind is TaskKind.FORWARD else -1
            for succ in dependents.get(done_task, ()):
                blockers[succ] -= 1
                if blockers[succ] == 0:
                    available[device_of[succ]].add(succ)

        for d in range(D):
            if free[d] > now or not available[d]:
                continue
            candidates = [t for t in available[d] if not cap_blocked(t, d)]
            if not candidates:
                continue
            task = min(candidates, key=priority)

            if policy.defer:
                # Idle instead of starting `task` when a strictly better task
                # lands on this device before `task` would finish.  Arrival
                # times are exact: the blocking dependency is already running.
                d_x = duration(task)
                r_x = remaining_path(task)
                horizon = now + d_x
                wake = None
                for running_end, _, running in completions:
                    if running_end >= horizon:
                        continue
                    for succ in dependents.get(running, ()):
                        if (
                            device_of[succ] != d
                            or blockers[succ] != 1
                            or cap_blocked(succ, d)
                        ):
                            continue
                        a = max(running_end, now)
                        r_y = remaining_path(succ)
                        d_y = duration(succ)
                        idle_then_y = max(a + r_y, a + d_y + r_x)
                        x_then_y = max(now + d_x + r_y, now + r_x)
                        if idle_then_y < x_then_y and (wake is None or a < wake):
                            wake = a
                if wake is not None and wake > now:
                    heapq.heappush(clock_heap, wake)
                    continue

            available[d].discard(task)
            dur = fdur if task.kind is TaskKind.FORWARD else bdur
            starts[task] = now
            end = now + dur
            ends[task] = end
            free[d] = end
            seq += 1
            scheduled += 1
            heapq.heappush(completions, (end, seq, task))
            heapq.heappush(clock_heap, end)

    per_device = tuple(
        tuple(sorted((t for t in tasks if device_of[t] == d), key=lambda t: starts[t]))
        for d in range(D)
    )
    makespan = max(ends.values()) if ends else Fraction(0)
    return FusedLayout(starts=starts, per_device=per_device, makespan=makespan)
