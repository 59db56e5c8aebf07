"""Compiled vs pure-Python kernel timings.

    python benchmarks/bench_kernels.py [--sizes 6,7,8,9] [--steps 20000] [--repeat 3]

Times the exhaustive partition search over seeded random worlds of each size
and a block of training steps on the confounder world, and checks that both
backends return the same answer.
"""

import argparse
import time

import numpy as np

from ibpl import _backend, _pykernels
from ibpl.partition_ib import TIE_TOL, identical_rows_matrix
from ibpl.prob_core import mutual_information
from ibpl.world_gen import WorldSpec, build_confounder_world, build_random_world


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_search(n, repeat, backends):
    w = build_random_world(WorldSpec(n, 6, (), 1.0, seed=n))
    args = (w.p_x, w.joint.mass, identical_rows_matrix(w), 0.3 * mutual_information(w), TIE_TOL)
    res = {name: best_of(lambda: mod.exhaustive_search(*args), repeat) for name, mod in backends}
    answers = {tuple(out[0].tolist()) for _, out in res.values()}
    assert len(answers) == 1, "backends disagree on the search result"
    return {name: t for name, (t, _) in res.items()}


def bench_train(steps, repeat, backends):
    w = build_confounder_world()
    rng = np.random.default_rng(0)
    tables = [rng.normal(0, 0.1, s) for s in ((4, 4), (4, 6), (4, 4))]
    flags = (rng.random(steps) < 0.7).astype(np.uint8)
    joint = np.ascontiguousarray(w.joint.mass)
    finals = {}
    times = {}
    for name, mod in backends:
        def run():
            W, V, U = (t.copy() for t in tables)
            mod.run_steps(W, V, U, joint, flags, 0.73, 0.5, np.zeros((steps, 3)))
            return W
        times[name], finals[name] = best_of(run, repeat)
    ref = next(iter(finals.values()))
    for W in finals.values():
        assert np.allclose(W, ref, atol=1e-8), "backends disagree on trained logits"
    return times


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="6,7,8,9")
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    backends = [("python", _pykernels)]
    if _backend.compiled_available():
        backends.append(("compiled", _backend.get("compiled")))
    else:
        print("compiled kernels not built; timing the fallback only")

    names = [b for b, _ in backends]
    header = f"{'kernel':<28}" + "".join(f"{n:>12}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)

    def row(label, times):
        line = f"{label:<28}" + "".join(f"{times[n] * 1e3:>10.1f}ms" for n in names)
        if len(names) == 2:
            line += f"{times['python'] / times['compiled']:>9.1f}x"
        print(line)

    for n in (int(s) for s in args.sizes.split(",")):
        row(f"exhaustive search |X|={n}", bench_search(n, args.repeat, backends))
    row(f"train {args.steps} steps", bench_train(args.steps, args.repeat, backends))


if __name__ == "__main__":
    main()
