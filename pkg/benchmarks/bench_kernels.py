"""Time full adaptive trials under the compiled and pure-Python kernels.

Both backends produce bit-identical trajectories; this measures only the
wall-clock gap. Run from the repository root:

    python3 benchmarks/bench_kernels.py --preset sim1a --trials 20
"""

from __future__ import annotations

import argparse
import time

from nof1trial import _kernels, preset_config
from nof1trial.harness import run_adaptive_trial


def time_backend(loop, config, trials: int, base_seed: int):
    """Mean per-trial seconds and the final-checkpoint estimates."""
    previous = _kernels.segment_loop
    _kernels.segment_loop = loop
    try:
        run_adaptive_trial(config, base_seed)  # warm-up, excluded from timing
        psi = []
        start = time.perf_counter()
        for i in range(trials):
            result = run_adaptive_trial(config, base_seed + i)
            psi.append(result.reports[-1].psi_hat)
        elapsed = time.perf_counter() - start
    finally:
        _kernels.segment_loop = previous
    return elapsed / trials, psi


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--preset", choices=("sim1a", "sim1b"), default="sim1a")
    parser.add_argument("--trials", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    config = preset_config(args.preset)
    rows = [("python", _kernels.python_segment_loop)]
    if _kernels.native_segment_loop is not None:
        rows.append(("native", _kernels.native_segment_loop))
    else:
        print("compiled kernel unavailable; timing the fallback only")

    results = {}
    for name, loop in rows:
        per_trial, psi = time_backend(loop, config, args.trials, args.seed)
        results[name] = (per_trial, psi)
        print(f"{name:>7}: {1e3 * per_trial:8.2f} ms/trial over {args.trials} trials")

    if len(results) == 2:
        py_time, py_psi = results["python"]
        nat_time, nat_psi = results["native"]
        print(f"speedup: {py_time / nat_time:.2f}x")
        if py_psi != nat_psi:
            print("MISMATCH: backends disagree on final estimates")
            return 1
        print("backends agree on every final estimate")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
