"""Benchmark: compiled kernel core vs numpy fallback.

Run from the repo root:  python benchmarks/bench_kernels.py

Times the two per-tick hot loops (lidar ray casting, density clustering) on
simulator-shaped workloads and a full poster-fixture run under each backend.
The two backends return bit-identical results; this script is about speed.
"""

from __future__ import annotations

import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

REPO = Path(__file__).resolve().parent.parent


def bench(fn, *args, repeat=5, inner=20):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def scan_workload(rng, n_rays, n_segments):
    ang = rng.uniform(-np.pi, np.pi, n_rays)
    segs = np.ascontiguousarray(rng.uniform(-40, 40, (n_segments, 4)))
    return np.cos(ang), np.sin(ang), segs


def cluster_workload(rng, n_points):
    # a few dense blobs plus background, like a real scan
    blobs = [rng.normal(c, 0.3, (n_points // 4, 2))
             for c in ((10, 2), (25, -4), (15, 8))]
    noise = rng.uniform(-40, 40, (n_points - 3 * (n_points // 4), 2))
    pts = np.vstack(blobs + [noise])
    return (np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1]))


def main() -> int:
    from failop.kernels import pure

    try:
        from failop.kernels import _core as core
    except ImportError:
        print("compiled kernels not built; run pip install -e . with a compiler")
        return 1

    rng = np.random.default_rng(0)
    rows = []

    for n_rays, n_segs in ((360, 16), (360, 64), (1440, 64)):
        dx, dy, segs = scan_workload(rng, n_rays, n_segs)
        tp = bench(pure.scan_rays, 0.0, 0.0, dx, dy, segs)
        tc = bench(core.scan_rays, 0.0, 0.0, dx, dy, segs)
        assert np.array_equal(pure.scan_rays(0, 0, dx, dy, segs),
                              core.scan_rays(0, 0, dx, dy, segs))
        rows.append((f"scan_rays {n_rays}x{n_segs}", tp, tc))

    for n in (120, 360, 1000):
        xs, ys = cluster_workload(rng, n)
        tp = bench(pure.cluster_labels, xs, ys, 0.7, 3)
        tc = bench(core.cluster_labels, xs, ys, 0.7, 3)
        assert np.array_equal(pure.cluster_labels(xs, ys, 0.7, 3),
                              core.cluster_labels(xs, ys, 0.7, 3))
        rows.append((f"cluster_labels n={n}", tp, tc))

    print(f"{'kernel workload':<28}{'pure':>12}{'compiled':>12}{'speedup':>9}")
    for name, tp, tc in rows:
        print(f"{name:<28}{tp * 1e6:>10.1f}us{tc * 1e6:>10.1f}us"
              f"{tp / tc:>8.1f}x")

    print("\nfull poster-fixture run (cli, subprocess):")
    for backend in ("pure", "compiled"):
        env = dict(os.environ, FAILOP_KERNELS=backend)
        t0 = time.perf_counter()
        subprocess.run([sys.executable, "-m", "failop.cli", "run",
                        "--scenario", str(REPO / "scenarios" / "poster.scn"),
                        "--out", f"/tmp/failop-bench-{backend}"],
                       env=env, check=True, capture_output=True)
        print(f"  {backend:<10}{time.perf_counter() - t0:>8.2f}s")
    a = Path(f"/tmp/failop-bench-pure/runlog.ndjson").read_bytes()
    b = Path(f"/tmp/failop-bench-compiled/runlog.ndjson").read_bytes()
    print(f"  run logs byte-identical: {a == b}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
