"""Time the hot kernels under both backends.

Each backend runs in its own interpreter because the choice is fixed at
import time by FAULTWARN_BACKEND.  Usage:

    python3 benchmarks/bench_backends.py [--seconds 2.0] [--json out.json]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best_of(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def measure(seconds):
    from faultwarn import _accel
    from faultwarn.decision import HysteresisPolicy, run_hysteresis
    from faultwarn.encoder.kernels import pav_kernel
    from faultwarn.encoder.model import StreamingScorer, StreamState, advance
    from faultwarn.encoder.params import EncoderParams

    rng = np.random.default_rng(0)
    fs = 20000
    n = int(seconds * fs)
    x = rng.standard_normal((2, n))
    params = EncoderParams.impulse(channels=2)

    # warm-up compiles (or loads the cache) outside the timed region
    advance(params, StreamState.fresh(params), x[:, :64])
    t_scan = _best_of(lambda: advance(params, StreamState.fresh(params), x))

    def stream():
        sc = StreamingScorer(params, 2048, 256)
        for k in range((n - 2048) // 256 + 1):
            sc.push(sc.new_samples(x, k))

    t_stream = _best_of(stream, repeats=1)

    scores = rng.standard_normal(200_000)
    times = np.arange(scores.size) * 0.0128
    policy = HysteresisPolicy(tau_on=2.5, delta=0.5)
    run_hysteresis(scores[:10], times[:10], policy)
    t_hyst = _best_of(lambda: run_hysteresis(scores, times, policy))

    y = (rng.random(100_000) < 0.3).astype(float)
    pav_kernel(y[:10], np.ones(10))
    t_pav = _best_of(lambda: pav_kernel(y, np.ones_like(y)))

    return {
        "backend": _accel.backend_name(),
        "samples": n,
        "encoder_scan_us_per_sample": 1e6 * t_scan / n,
        "streaming_replay_s": t_stream,
        "realtime_factor": seconds / t_stream,
        "hysteresis_ns_per_score": 1e9 * t_hyst / scores.size,
        "pav_ns_per_point": 1e9 * t_pav / y.size,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seconds", type=float, default=2.0, help="signal length at 20 kHz")
    ap.add_argument("--json", default=None)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        print(json.dumps(measure(args.seconds)))
        return

    rows = []
    for backend in ("numba", "numpy"):
        env = dict(os.environ, FAULTWARN_BACKEND=backend)
        out = subprocess.run(
            [sys.executable, __file__, "--child", "--seconds", str(args.seconds)],
            env=env,
            check=True,
            capture_output=True,
            text=True,
        )
        rows.append(json.loads(out.stdout.strip().splitlines()[-1]))

    keys = [k for k in rows[0] if k not in ("backend", "samples")]
    print(f"{'metric':34s} {'numba':>14s} {'numpy':>14s} {'speedup':>9s}")
    for k in keys:
        a, b = rows[0][k], rows[1][k]
        faster_is_bigger = k == "realtime_factor"
        speed = a / b if faster_is_bigger else b / a
        print(f"{k:34s} {a:14.4g} {b:14.4g} {speed:8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
