"""Scratch experiment: do the builders hit the analytic makespans exactly?"""
from fractions import Fraction

from pipesched.builders import (
    build_1f1b, build_bitpipe, build_chimera, build_gpipe,
    build_interleaved_looping, build_v_shaped, merge_bidirectional,
)
from pipesched.fusion import list_schedule
from pipesched.schedules import TaskKind, Direction


def simulate_makespan(sched):
    starts = list_schedule(sched.per_device, sched.dependencies, sched.canonical_duration)
    return max(s + sched.canonical_duration(t) for t, s in starts.items()), starts


def compute_per_device(sched):
    tot = [Fraction(0)] * sched.D
    for d, row in enumerate(sched.per_device):
        for t in row:
            tot[d] += sched.canonical_duration(t)
    return tot


def check(name, sched, target):
    mk, _ = simulate_makespan(sched)
    comp = compute_per_device(sched)
    ratio = 1 - sum(comp) / (sched.D * mk)
    grid_mk = None
    if sched.starts:
        grid_mk = max(s + sched.canonical_duration(t) for t, s in sched.starts.items())
    ok = "OK " if mk == target else "FAIL"
    print(f"{ok} {name:38s} sim={str(mk):>8s} grid={str(grid_mk):>8s} target={str(target):>8s} ratio={ratio}")
    return mk == target


def main():
    fails = 0
    for D in (2, 4, 8):
        for N in (D, 2 * D, 4 * D):
            t = 3 * Fraction(N + D - 1)
            fails += not check(f"gpipe D={D} N={N}", build_gpipe(D, N), t)
            fails += not check(f"1f1b D={D} N={N}", build_1f1b(D, N), t)
            for v in (2,):
                t = 3 * N + Fraction(3 * (D - 1), v)
                fails += not check(f"looping D={D} N={N} v={v}",
                                   build_interleaved_looping(D, N, v), t)
            t = 3 * N + 2 * (D - 2)
            fails += not check(f"chimera D={D} N={N}", build_chimera(D, N), t)
            t = 3 * N + (D - 2)
            fails += not check(f"bitpipe D={D} N={N}", build_bitpipe(D, N), t)
            if N >= 2 * D:
                t = 3 * N + Fraction(3 * (D - 2), 4)
                fails += not check(f"bitpipe-ef D={D} N={N}",
                                   build_bitpipe(D, N, early_forward=True), t)
    print("total fails:", fails)


if __name__ == "__main__":
    main()
