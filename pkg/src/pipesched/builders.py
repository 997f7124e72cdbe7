"""Constructors for every modeled schedule, plus the bidirectional merge."""
from __future__ import annotations

from fractions import Fraction

from .core import ApproachId
from .errors import (
    InsufficientMicroBatches,
    InvalidChunking,
    MergeConflict,
    OddChunkCount,
    OddDeviceCount,
    ScheduleError,
)
from .fusion import fused_layout, list_schedule
from .schedules import (
    Direction,
    Schedule,
    StageMap,
    Task,
    TaskKind,
    looping_map,
    v_shaped_map,
    validate_schedule,
)

__all__ = [
    "build",
    "build_gpipe",
    "build_1f1b",
    "build_interleaved_looping",
    "build_v_shaped",
    "build_chimera",
    "build_bitpipe",
    "merge_bidirectional",
]


def _stage_of(stage_map: StageMap, device: int, chunk: int, D: int) -> int:
    for s in range(chunk * D, (chunk + 1) * D):
        if stage_map.device_of(s) == device:
            return s
    raise ScheduleError(f"device {device} holds no chunk-{chunk} stage")


def _interleaved_virtual_order(D: int, N: int, v: int, rank: int):
    """Per-rank (kind, micro_batch, chunk) sequence of the looping schedule.

    v=1 is plain 1F1B: D-1-rank warmup forwards, then alternate, then drain.
    v>=2 cycles groups of D micro-batches through the chunks with the deeper
    warmup that keeps every chunk's wavefront full.
    """
    if v == 1:
        fseq = [(m, 0) for m in range(1, N + 1)]
        bseq = fseq
        warmup = min(D - 1 - rank, N)
        total = N
    else:
        fseq = []
        for base in range(0, N, D):
            for c in range(v):
                fseq.extend((base + k + 1, c) for k in range(D))
        bseq = [(m, v - 1 - c) for m, c in fseq]
        total = N * v
        warmup = min(2 * (D - 1 - rank) + (v - 1) * D, total)

    order = [(TaskKind.FORWARD, m, c) for m, c in fseq[:warmup]]
    for i in range(total - warmup):
        order.append((TaskKind.FORWARD, *fseq[warmup + i]))
        order.append((TaskKind.BACKWARD, *bseq[i]))
    order.extend((TaskKind.BACKWARD, m, c) for m, c in bseq[total - warmup:])
    return order


def _instantiate(order, stage_map: StageMap, device: int, D: int,
                 direction: Direction, unit_of) -> tuple[Task, ...]:
    tasks = []
    for kind, mb, chunk in order:
        stage = _stage_of(stage_map, device, chunk, D)
        tasks.append(Task(kind, mb, stage, direction, unit_of(mb)))
    return tuple(tasks)


def _with_canonical_starts(schedule: Schedule) -> Schedule:
    starts = list_schedule(
        schedule.per_device, schedule.dependencies, schedule.canonical_duration
    )
    return Schedule(
        approach=schedule.approach,
        D=schedule.D,
        N=schedule.N,
        v=schedule.v,
        K=schedule.K,
        per_device=schedule.per_device,
        stage_maps=schedule.stage_maps,
        starts=starts,
    )


# -- unidirectional builders --------------------------------------------------


def build_gpipe(D: int, N: int) -> Schedule:
    """All forwards then all backwards (reverse completion order) per device."""
    if D < 1 or N < 1:
        raise ScheduleError("GPipe needs D >= 1 and N >= 1")
    smap = looping_map(D, 1)
    rows = []
    for d in range(D):
        row = [Task(TaskKind.FORWARD, m, d) for m in range(1, N + 1)]
        row += [Task(TaskKind.BACKWARD, m, d) for m in range(N, 0, -1)]
        rows.append(tuple(row))
    sched = Schedule(ApproachId.GPIPE, D, N, 1, 1, tuple(rows), (smap,))
    return validate_schedule(_with_canonical_starts(sched))


def build_1f1b(D: int, N: int) -> Schedule:
    """DAPPLE/PipeDream-Flush: ramp of D-1-d warmup forwards, then 1F1B."""
    if D < 1 or N < 1:
        raise ScheduleError("1F1B needs D >= 1 and N >= 1")
    if N < D:
        raise InsufficientMicroBatches(
            f"1F1B needs N >= D to fill the warmup ramp (N={N}, D={D})"
        )
    smap = looping_map(D, 1)
    rows = tuple(
        _instantiate(
            _interleaved_virtual_order(D, N, 1, d), smap, d, D,
            Direction.DOWN, lambda mb: (mb - 1) // D,
        )
        for d in range(D)
    )
    sched = Schedule(ApproachId.DAPPLE_1F1B, D, N, 1, 1, rows, (smap,))
    return validate_schedule(_with_canonical_starts(sched))


def build_interleaved_looping(D: int, N: int, v: int = 2) -> Schedule:
    """Megatron-style interleaved 1F1B over v looping chunks per device."""
    if D < 1 or N < 1 or v < 1:
        raise ScheduleError("looping schedule needs D, N, v >= 1")
    if N % D != 0:
        raise InvalidChunking(
            f"interleaved looping needs N to be a multiple of D (N={N}, D={D})"
        )
    smap = looping_map(D, v)
    rows = tuple(
        _instantiate(
            _interleaved_virtual_order(D, N, v, d), smap, d, D,
            Direction.DOWN, lambda mb: (mb - 1) // D,
        )
        for d in range(D)
    )
    sched = Schedule(ApproachId.INTERLEAVED_LOOPING, D, N, v, 1, rows, (smap,))
    return validate_schedule(_with_canonical_starts(sched))


# -- v-shaped halves and bidirectional fusion ---------------------------------


def _fusion_ids(n: int, direction: Direction) -> tuple[int, ...]:
    """Global ids used during fusion: down takes odd ids, up takes even."""
    base = 1 if direction is Direction.DOWN else 2
    return tuple(base + 2 * j for j in range(n))


def _run_fusion(D: int, v: int, n_half: int, *, early_forward=False,
                act_cap_chunks=None, v1=False):
    make_map = looping_map if v1 else v_shaped_map
    maps = {
        Direction.DOWN: make_map(D, v, Direction.DOWN),
        Direction.UP: make_map(D, v, Direction.UP),
    }
    mbs = {d: _fusion_ids(n_half, d) for d in (Direction.DOWN, Direction.UP)}
    layout = fused_layout(
        D, v, maps, mbs,
        unit_size=max(1, D // 2),
        early_forward=early_forward,
        act_cap_chunks=act_cap_chunks,
    )
    return maps, layout


def build_v_shaped(D: int, N: int, v: int = 2,
                   direction: Direction = Direction.DOWN) -> Schedule:
    """One V-shaped interleaved pipeline carrying N micro-batches.

    The execution order matches the looping schedule whenever the looping
    preconditions hold (N a multiple of D); only the stage map and its
    local-copy edges differ.  The slot grid is always laid out against a
    phantom mirror pipeline so that two opposite halves union without
    conflicts in :func:`merge_bidirectional`.
    """
    if D < 1 or N < 1:
        raise ScheduleError("v-shaped schedule needs D >= 1 and N >= 1")
    if v < 2 or v % 2 != 0:
        raise OddChunkCount(f"the V shape needs an even chunk count, got v={v}")
    smap = v_shaped_map(D, v, direction)
    maps, layout = _run_fusion(D, v, N)
    fusion_ids = _fusion_ids(N, direction)
    id_of = {fusion_ids[j]: j + 1 for j in range(N)}

    def relabel(t: Task) -> Task:
        return Task(t.kind, id_of[t.micro_batch], t.stage, direction, t.unit)

    starts = {
        relabel(t): s for t, s in layout.starts.items() if t.direction is direction
    }
    grid_rows = tuple(
        tuple(relabel(t) for t in row if t.direction is direction)
        for row in layout.per_device
    )

    if N % D == 0:
        rows = tuple(
            _instantiate(
                _interleaved_virtual_order(D, N, v, d), smap, d, D,
                direction, lambda mb: (mb - 1) // D,
            )
            for d in range(D)
        )
    else:
        rows = grid_rows
    unit = max(1, D // 2)
    sched = Schedule(ApproachId.V_SHAPED, D, N, v, -(-N // unit),
                     rows, (smap,), starts=starts)
    return validate_schedule(sched)


def merge_bidirectional(down: Schedule, up: Schedule) -> Schedule:
    """Fuse two opposite V-shaped halves by slot-grid union.

    The union is literal: every task keeps the slot its half assigned, and a
    cell claimed twice raises MergeConflict rather than shifting anything.
    Micro-batch ids are relabeled to the odd(down)/even(up) convention when
    the two halves carry overlapping id sets.
    """
    if down.D != up.D or down.v != up.v:
        raise ScheduleError("halves disagree on D or v")
    if down.N != up.N:
        raise ScheduleError(
            f"halves must carry the same micro-batch count, got {down.N} and {up.N}"
        )
    if {m.direction for m in down.stage_maps} != {Direction.DOWN} or \
       {m.direction for m in up.stage_maps} != {Direction.UP}:
        raise ScheduleError("merge needs one down half and one up half")
    if down.D % 2 != 0:
        raise OddDeviceCount(
            f"bidirectional fusion needs an even device count, got D={down.D}"
        )
    if down.N % 2 != 0 and down.N != up.N:
        raise ScheduleError("halves must split N evenly")
    if down.starts is None or up.starts is None:
        raise ScheduleError("halves carry no slot grid to merge")

    relabel_needed = bool(set(down.micro_batches()) & set(up.micro_batches()))

    def relabeled(half: Schedule, direction: Direction):
        ids = sorted(half.micro_batches())
        if relabel_needed:
            base = 1 if direction is Direction.DOWN else 2
            mapping = {mb: base + 2 * j for j, mb in enumerate(ids)}
        else:
            mapping = {mb: mb for mb in ids}
        out = {}
        for t, s in half.starts.items():
            out[Task(t.kind, mapping[t.micro_batch], t.stage, direction, t.unit)] = s
        return out

    starts = relabeled(down, Direction.DOWN)
    starts.update(relabeled(up, Direction.UP))

    maps = {Direction.DOWN: down.stage_map(Direction.DOWN),
            Direction.UP: up.stage_map(Direction.UP)}
    D, v = down.D, down.v
    cells: dict = {d: [] for d in range(D)}
    for t, s in starts.items():
        dur = Fraction(1, v) if t.kind is TaskKind.FORWARD else Fraction(2, v)
        cells[maps[t.direction].device_of(t.stage)].append((s, s + dur, t))
    rows = []
    for d in range(D):
        row = sorted(cells[d])
        for (s0, e0, t0), (s1, e1, t1) in zip(row, row[1:]):
            if s1 < e0:
                raise MergeConflict(
                    f"device {d}: {t0!r} [{s0},{e0}) collides with {t1!r} [{s1},{e1})"
                )
        rows.append(tuple(t for _, _, t in row))

    N = down.N + up.N
    merged = Schedule(
        ApproachId.CHIMERA if v == 1 else ApproachId.BITPIPE,
        D, N, v, -(-down.N // max(1, D // 2)),
        tuple(rows), (maps[Direction.DOWN], maps[Direction.UP]),
        starts=starts,
    )
    return validate_schedule(merged)


def _build_fused(approach: ApproachId, D: int, N: int, v: int, *,
                 early_forward=False, v1=False) -> Schedule:
    cap = None
    if early_forward:
        cap = (3 * D - 3) * v // 2
    maps, layout = _run_fusion(
        D, v, N // 2, early_forward=early_forward, act_cap_chunks=cap, v1=v1,
    )
    sched = Schedule(
        approach, D, N, v, -(-N // D),
        layout.per_device,
        (maps[Direction.DOWN], maps[Direction.UP]),
        starts=dict(layout.starts),
    )
    return validate_schedule(sched)


def build_chimera(D: int, N: int) -> Schedule:
    """Two opposite plain 1F1B pipelines (v=1) fused on one device set."""
    if D % 2 != 0:
        raise OddDeviceCount(f"Chimera needs an even device count, got D={D}")
    if N % 2 != 0:
        raise ScheduleError(f"Chimera needs an even micro-batch count, got N={N}")
    if N < D:
        raise InsufficientMicroBatches(f"Chimera needs N >= D (N={N}, D={D})")
    return _build_fused(ApproachId.CHIMERA, D, N, 1, v1=True)


def build_bitpipe(D: int, N: int, v: int = 2, early_forward: bool = False) -> Schedule:
    """Two opposite V-shaped interleaved pipelines fused on one device set.

    N must be a multiple of D so the schedule decomposes into K = N/D basic
    units.  With ``early_forward`` the interior bubbles of the concatenation
    are filled by pulling later units' forward passes ahead, bounded by the
    (3D-3)/2 activation cap; that variant needs at least two units.
    """
    if D % 2 != 0:
        raise OddDeviceCount(f"BitPipe needs an even device count, got D={D}")
    if v < 2 or v % 2 != 0:
        raise OddChunkCount(f"BitPipe needs an even chunk count, got v={v}")
    if N % D != 0:
        raise InvalidChunking(
            f"BitPipe scales by whole basic units: N must be a multiple of D "
            f"(N={N}, D={D})"
        )
    if early_forward and N < 2 * D:
        raise InvalidChunking(
            "early forwarding rearranges later units; it needs N >= 2D"
        )
    approach = (
        ApproachId.BITPIPE_EARLY_FORWARD if early_forward else ApproachId.BITPIPE
    )
    return _build_fused(approach, D, N, v, early_forward=early_forward)


_BUILDERS = {
    ApproachId.GPIPE: lambda D, N, v, early_forward: build_gpipe(D, N),
    ApproachId.DAPPLE_1F1B: lambda D, N, v, early_forward: build_1f1b(D, N),
    ApproachId.INTERLEAVED_LOOPING:
        lambda D, N, v, early_forward: build_interleaved_looping(D, N, v or 2),
    ApproachId.V_SHAPED:
        lambda D, N, v, early_forward: build_v_shaped(D, N, v or 2),
    ApproachId.CHIMERA: lambda D, N, v, early_forward: build_chimera(D, N),
    ApproachId.BITPIPE:
        lambda D, N, v, early_forward: build_bitpipe(D, N, v or 2, False),
    ApproachId.BITPIPE_EARLY_FORWARD:
        lambda D, N, v, early_forward: build_bitpipe(D, N, v or 2, True),
}


def build(approach: ApproachId, D: int, N: int, v: int | None = None,
          early_forward: bool = False) -> Schedule:
    """Dispatch to the approach's builder."""
    return _BUILDERS[approach](D, N, v, early_forward)
