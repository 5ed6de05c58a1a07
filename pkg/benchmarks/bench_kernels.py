"""Benchmark the numba-compiled kernels against the pure-numpy fallback.

The acceleration flag (CPTKIT_NO_NUMBA) is read once, before the first
cptkit import, so the two paths cannot coexist for the composite kernels:
their undecorated bodies still dispatch to whatever the module globals
are. Composite workloads are therefore timed in one subprocess per mode.
Leaf kernels call nothing but numpy, so their ``.py_func`` is the genuine
fallback and is additionally compared in-process.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
"""

import argparse
import json
import math
import os
import subprocess
import sys
import time

_WORKLOADS = ("liouvillian-build", "steady-grid", "trajectory")


def _fmt_time(seconds: float) -> str:
    if seconds >= 1.0:
        return f"{seconds:8.2f} s "
    if seconds >= 1e-3:
        return f"{seconds * 1e3:8.2f} ms"
    return f"{seconds * 1e6:8.2f} us"


def _best_of(fn, repeats: int) -> float:
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_worker(repeats: int, grid_points: int) -> dict:
    """Time the workloads in this process and report JSON on stdout."""
    import numpy as np

    from cptkit import _kernels
    from cptkit._accel import NUMBA_ENABLED
    from cptkit.constants import TWO_PI
    from cptkit.cpt import FixedRates, boltzmann_gamma_plus

    fixed = FixedRates.from_lifetime(4.55e-9, 2.4)
    omega_c = TWO_PI * 19.3e6
    omega_d = TWO_PI * 164e6
    gamma_minus = 1.0 / 31e-12
    gamma_plus = boltzmann_gamma_plus(gamma_minus, 831e9, 3.86)
    jumps = _kernels.jump_stack(
        gamma_plus, gamma_minus, fixed.gamma_c, fixed.gamma_d_opt, 0.0
    )
    ham = _kernels.hamiltonian_matrix(omega_c, omega_d, 0.0, TWO_PI * 1e9)
    detunings = np.linspace(-TWO_PI * 5e9, TWO_PI * 5e9, grid_points)
    liou = _kernels.build_liouvillian(ham, jumps)
    x0 = np.zeros(9, dtype=np.complex128)
    x0[0] = 1.0
    checkpoints = np.array([1e-6])

    def w_build():
        for _ in range(200):
            _kernels.build_liouvillian(ham, jumps)

    def w_grid():
        _kernels.cpt_rho33_direct(
            omega_c, omega_d, gamma_plus, gamma_minus,
            fixed.gamma_c, fixed.gamma_d_opt, 0.0, 0.0, detunings,
        )

    def w_traj():
        _kernels.integrate_liouvillian(
            liou, x0, 0.0, checkpoints, 1e-9, 1e-12, 50_000_000, 1e-6
        )

    results = {}
    for name, fn in (
        ("liouvillian-build", w_build),
        ("steady-grid", w_grid),
        ("trajectory", w_traj),
    ):
        fn()  # warmup: triggers compilation on the numba path
        results[name] = _best_of(fn, repeats)

    leaf = None
    if NUMBA_ENABLED:
        # leaf kernels call only numpy, so .py_func is the true fallback
        def args_solve():
            return (liou,)

        def args_kron():
            return (ham, np.conj(jumps[1]))

        leaf = {}
        for name, kern, args in (
            ("kron3", _kernels._kron3, args_kron()),
            ("steady-state-solve", _kernels.steady_state_solve, args_solve()),
        ):
            kern(*args)
            kern.py_func(*args)

            def jit_call(k=kern, a=args):
                for _ in range(500):
                    k(*a)

            def py_call(k=kern, a=args):
                for _ in range(500):
                    k.py_func(*a)

            leaf[name] = {
                "jit": _best_of(jit_call, repeats) / 500.0,
                "py": _best_of(py_call, repeats) / 500.0,
            }

    try:
        import numba

        numba_version = numba.__version__
    except ImportError:
        numba_version = None
    return {
        "numba_enabled": NUMBA_ENABLED,
        "numba_version": numba_version,
        "results": results,
        "leaf": leaf,
    }


def _spawn(mode: str, repeats: int, grid_points: int) -> dict:
    env = dict(os.environ)
    env["CPTKIT_NO_NUMBA"] = "0" if mode == "numba" else "1"
    proc = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--worker",
         "--repeats", str(repeats), "--grid-points", str(grid_points)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(proc.stdout)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5,
                    help="timing repeats per workload (best-of)")
    ap.add_argument("--grid-points", type=int, default=201,
                    help="detuning grid size for the steady-grid workload")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)

    if args.worker:
        print(json.dumps(run_worker(args.repeats, args.grid_points)))
        return 0

    print("kernel benchmark: numba path vs pure-numpy fallback")
    fast = _spawn("numba", args.repeats, args.grid_points)
    slow = _spawn("numpy", args.repeats, args.grid_points)
    if not fast["numba_enabled"]:
        print("note: numba unavailable; both columns ran the fallback")
    else:
        print(f"numba {fast['numba_version']}, "
              f"{args.repeats} repeats (best-of), "
              f"{args.grid_points}-point grid")

    print(f"\n{'workload':<28}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for name in _WORKLOADS:
        a = fast["results"][name]
        b = slow["results"][name]
        print(f"{name:<28}{_fmt_time(a):>12}{_fmt_time(b):>12}{b / a:>9.1f}x")

    if fast["leaf"]:
        print("\nleaf kernels, in-process (jitted vs .py_func), per call:")
        for name, entry in fast["leaf"].items():
            a, b = entry["jit"], entry["py"]
            print(f"{name:<28}{_fmt_time(a):>12}{_fmt_time(b):>12}{b / a:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
