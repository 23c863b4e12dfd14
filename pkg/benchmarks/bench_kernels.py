"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Inputs are KITTI-sized: a 375x1242 image with 5500 superpixels and the
matching CRF system. Each row reports the best of ``--repeat`` runs.
"""

import argparse
import math
import time

import numpy as np
from skimage.color import rgb2lab

from crfdepth import _fallback, synthetic
from crfdepth.pipeline import Frame, run_complete
from crfdepth.superpixel import _grid_seeds, _search_bounds

try:
    from crfdepth import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def slic_inputs(scene, n):
    lab = np.ascontiguousarray(rgb2lab(scene.image.pixels), dtype=np.float64)
    h, w = lab.shape[:2]
    step = math.sqrt(h * w / n)
    seeds = _grid_seeds(h, w, n)
    iy = np.minimum(seeds[:, 0].astype(np.int64), h - 1)
    ix = np.minimum(seeds[:, 1].astype(np.int64), w - 1)
    centers = np.ascontiguousarray(np.hstack([lab[iy, ix], seeds]))
    return lab, centers, _search_bounds(centers, step, h, w), (10.0 / step) ** 2


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--superpixels", type=int, default=5500)
    args = parser.parse_args()
    if _kernels is None:
        raise SystemExit("compiled extension missing: pip install -e . --no-build-isolation")

    scene = synthetic.make_scene(1242, 375)
    lab, centers, bounds, ratio = slic_inputs(scene, args.superpixels)
    h, w = lab.shape[:2]

    def assign(impl):
        labels = np.zeros((h, w), dtype=np.int64)
        dist = np.full((h, w), np.inf)
        impl.slic_assign(lab, centers, bounds, ratio, labels, dist)
        return labels

    labels = assign(_kernels)
    assert np.array_equal(labels, assign(_fallback))

    cfg = synthetic.FIXTURE_CONFIG.with_(n_superpixels=args.superpixels)
    frame = Frame(scene.image, scene.cloud, scene.calib, scene.ground_truth, "bench")
    a = run_complete(frame, cfg).system.A
    x = np.random.default_rng(0).normal(size=a.n_cols)
    csr = (a.row_offsets, a.col_indices, a.values, x)
    assert np.array_equal(_kernels.csr_matvec(*csr), _fallback.csr_matvec(*csr))

    rows = [
        ("slic_assign (one sweep)", lambda impl: assign(impl)),
        (f"csr_matvec (n={a.n_rows}, nnz={a.nnz})", lambda impl: impl.csr_matvec(*csr)),
        ("label_components", lambda impl: impl.label_components(labels)),
    ]
    print(f"{'kernel':<38}{'cython ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, fn in rows:
        fast = best_of(lambda: fn(_kernels), args.repeat)
        slow = best_of(lambda: fn(_fallback), args.repeat)
        print(f"{name:<38}{1e3 * fast:>12.3f}{1e3 * slow:>12.3f}{slow / fast:>9.1f}x")


if __name__ == "__main__":
    main()
