"""Throughput comparison of the two-loop recursion backends.

Times the kernel in isolation across (dimension, memory) grids and then a
full warm-started local solve with each backend forced, since the kernel sits
inside the per-round, per-agent solver loop.

Run:
    python3 benchmarks/bench_backends.py
"""

from __future__ import annotations

import time

import numpy as np

from caden._accel import available_backends
from caden.losses import QuadraticLoss
from caden import solvers
from caden.solvers import LocalSubproblem, solve_lbfgs


def _history(rng, k, d):
    s = rng.standard_normal((k, d))
    y = s @ np.diag(rng.uniform(0.5, 3.0, d))
    rho = 1.0 / np.einsum("ij,ij->i", s, y)
    return s, y, rho


def bench_kernel(repeats: int = 20_000) -> None:
    backends = available_backends()
    print(f"two_loop_direction kernel ({repeats} calls per cell)")
    header = "  ".join(f"{name:>10s}" for name in backends)
    print(f"{'d':>6s} {'memory':>6s}  {header}  {'speedup':>8s}")
    rng = np.random.default_rng(0)
    for d in (50, 500, 2000):
        for memory in (5, 10):
            s, y, rho = _history(rng, memory, d)
            grad = rng.standard_normal(d)
            times = {}
            for name, fn in backends.items():
                fn(s, y, rho, 1.0, grad)  # warm once
                start = time.perf_counter()
                for _ in range(repeats):
                    fn(s, y, rho, 1.0, grad)
                times[name] = (time.perf_counter() - start) / repeats
            cells = "  ".join(f"{times[name] * 1e6:8.2f}us" for name in backends)
            speedup = (
                f"{times['python'] / times['compiled']:7.2f}x"
                if "compiled" in times
                else "     n/a"
            )
            print(f"{d:>6d} {memory:>6d}  {cells}  {speedup}")


def bench_solve(rounds: int = 300) -> None:
    print(f"\nfull local solve, tau=5, d=500 ({rounds} solves per backend)")
    rng = np.random.default_rng(1)
    d = 500
    loss = QuadraticLoss(q=rng.uniform(0.5, 5.0, d), a=rng.standard_normal(d))
    problem = LocalSubproblem(
        loss=loss, phi=rng.standard_normal(d), anchors=rng.standard_normal((3, d)), mu_z=2.0
    )
    x0 = rng.standard_normal(d)
    original = solvers.two_loop_direction
    try:
        for name, fn in available_backends().items():
            solvers.two_loop_direction = fn
            solve_lbfgs(problem, x0, tau=5)  # warm once
            start = time.perf_counter()
            for _ in range(rounds):
                solve_lbfgs(problem, x0, tau=5)
            per = (time.perf_counter() - start) / rounds
            print(f"  {name:>10s}: {per * 1e3:7.3f} ms per solve")
    finally:
        solvers.two_loop_direction = original


if __name__ == "__main__":
    bench_kernel()
    bench_solve()
