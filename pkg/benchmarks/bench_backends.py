"""Compare the numba and numpy tape kernels on a differentiable rollout.

Times a forward + reverse pass of a 200-step double-pendulum rollout (the
workload behind every optimizer in the package) on each backend, checks
that both produce the same loss and gradients, and prints a small table.

    python3 benchmarks/bench_backends.py [--steps 200] [--repeat 5]
"""
import argparse
import time

import numpy as np

from diffpbd._backend import HAVE_NUMBA
from diffpbd.chain import SimConfig, pendulum_chain
from diffpbd.optimize import LossSpec, step_tracking_loss
from diffpbd.rollout import checkpoint_rollout, fixed_chain_step


def workload(steps):
    chain = pendulum_chain([1.0, 0.8], [1.0, 0.5], angles=[0.3, -0.2])
    spec = LossSpec(1.0, 0.02, 0.0)
    prog = fixed_chain_step(chain, SimConfig(), n_aux=4, loss=lambda ch, u, p, a: step_tracking_loss(
        ch, a[:2], a[2:], spec))
    rng = np.random.default_rng(0)
    U = rng.normal(0.0, 1.0, (steps, 2))
    aux = np.hstack([rng.normal(0.0, 0.3, (steps, 2)), np.zeros((steps, 2))])
    return prog, chain.state_vector(), U, aux


def bench(backend, prog, s0, U, aux, repeat):
    res = checkpoint_rollout(prog, s0, U, [], aux, backend=backend)  # warm-up / JIT compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        res = checkpoint_rollout(prog, s0, U, [], aux, backend=backend)
        times.append(time.perf_counter() - t0)
    return min(times), res


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    prog, s0, U, aux = workload(args.steps)
    print(f"tape: {prog.program.n_nodes} nodes per step, {args.steps} steps, best of {args.repeat}")
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    results = {b: bench(b, prog, s0, U, aux, args.repeat) for b in backends}
    base = results["numpy"][0]
    print("backend   seconds   speedup")
    for b, (t, _) in results.items():
        print(f"{b:<8} {t:8.4f}   {base / t:6.2f}x")
    if "numba" in results:
        a, b = results["numpy"][1], results["numba"][1]
        diff = max(abs(a.loss - b.loss), float(np.abs(a.grad_controls - b.grad_controls).max()))
        print(f"max |numpy - numba| over loss and gradients: {diff:.3e}")
    else:
        print("numba not installed; only the numpy backend was timed")


if __name__ == "__main__":
    main()
