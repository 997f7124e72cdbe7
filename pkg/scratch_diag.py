"""Dump a fused grid: per-device rows with busy intervals, idle gaps."""
import sys
from fractions import Fraction

from pipesched.builders import build_bitpipe, build_chimera
from pipesched.schedules import TaskKind


def dump(sched, quantum=None):
    q = quantum or Fraction(1, sched.v)
    makespan = max(
        s + sched.canonical_duration(t) for t, s in sched.starts.items()
    )
    ncells = int(makespan / q)
    print(f"approach={sched.approach.value} D={sched.D} N={sched.N} v={sched.v} "
          f"makespan={makespan} ({ncells} cells of {q})")
    for d, row in enumerate(sched.per_device):
        cells = ["." * 6] * ncells
        for t in row:
            s = sched.starts[t]
            dur = sched.canonical_duration(t)
            i0 = int(s / q)
            n = int(dur / q)
            label = f"{t.kind.value}{t.micro_batch}s{t.stage}" + (
                "^" if t.direction.value == "up" else ""
            )
            for i in range(i0, i0 + n):
                cells[i] = label[:6].ljust(6)
        idle = makespan - sum(sched.canonical_duration(t) for t in row)
        print(f"  dev{d} idle={idle}: " + "|".join(c for c in cells))


if __name__ == "__main__":
    D = int(sys.argv[1]) if len(sys.argv) > 1 else 8
    N = int(sys.argv[2]) if len(sys.argv) > 2 else D
    kind = sys.argv[3] if len(sys.argv) > 3 else "bitpipe"
    if kind == "bitpipe":
        dump(build_bitpipe(D, N))
    else:
        dump(build_chimera(D, N))
