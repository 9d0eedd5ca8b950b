"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_backends.py [--trials 2000] [--repeat 3]

Both backends get the same noise arrays; the script also reports the largest
difference in their outputs.
"""

import argparse
import time

import numpy as np

from powersched import kernels
from powersched.dp import gauss_hermite
from powersched.presets import paper_attack, paper_channel, paper_model
from powersched.sched import ConstantPower, GreedyKnown, GreedyMean
from powersched.sim import ExperimentSpec, cached_noise, prepare


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def bench_simulate(trials, repeat):
    base = ExperimentSpec(paper_model(), paper_channel(), paper_attack(), GreedyKnown(),
                          lam=1.0, T=196, trials=trials)
    for sched in (GreedyKnown(), GreedyMean(), ConstantPower(2.0)):
        prep = prepare(base.replace(sched=sched))
        noise = cached_noise(base.model, base.dist, base.T, base.master_seed, 0, trials)
        kernels.simulate_batch(prep.params, noise, backend="numba")  # compile
        tn, a = best_of(lambda: kernels.simulate_batch(prep.params, noise, backend="numba")[0], repeat)
        tp, b = best_of(lambda: kernels.simulate_batch(prep.params, noise, backend="numpy")[0], repeat)
        print(f"simulate_batch {sched.kind:13s} trials={trials:6d}  numba {tn:8.3f}s  "
              f"numpy {tp:8.3f}s  speedup {tp / tn:6.1f}x  max|diff| {np.max(np.abs(a - b)):.1e}")


def bench_bellman(n_e, repeat):
    egrid = np.linspace(-0.5, 0.5, n_e)
    wn, wq = gauss_hermite(16, 0.001)
    a_nodes, _ = paper_attack().quantize()
    Vbar = 10 * egrid**2
    args = (Vbar, egrid, 1.3, 2.5 * (1.3 * egrid) ** 2, wn, wq, a_nodes, 1.0, 0.9, 3.0, 1.0, 3.0)
    kernels.bellman_sweep(*args, backend="numba")
    tn, a = best_of(lambda: kernels.bellman_sweep(*args, backend="numba")[0], repeat)
    tp, b = best_of(lambda: kernels.bellman_sweep(*args, backend="numpy")[0], repeat)
    print(f"bellman_sweep  n_e={n_e:5d}            numba {tn:8.4f}s  numpy {tp:8.4f}s  "
          f"speedup {tp / tn:6.1f}x  max|diff| {np.max(np.abs(a - b)):.1e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    bench_simulate(args.trials, args.repeat)
    for n_e in (257, 1025):
        bench_bellman(n_e, args.repeat)


if __name__ == "__main__":
    main()
