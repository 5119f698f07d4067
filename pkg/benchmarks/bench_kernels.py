"""Compare the compiled and pure-Python kernels.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times combination scoring at the 3-candidates-per-landmark worst case
(K = 8, 6561 combinations), strict local-maximum detection on a heatmap
channel, and the full refine pipeline under each backend.
"""
import argparse
import timeit

import numpy as np

from elbowssr.harness import HarnessConfig, render_heatmaps, sample_landmark_instance, stream
from elbowssr.heatmap import DecodeConfig, HeatmapStack, image_to_heatmap
from elbowssr.kernels import available_backends
from elbowssr.ssr import build_reference_bank, refine_landmarks


def _bank(cfg):
    shapes = [sample_landmark_instance(cfg, stream(0, 0, i)) for i in range(2030)]
    return build_reference_bank(shapes, 0.033, seed=0)


def _three_peaks(cfg):
    # true peak plus two weaker decoys per channel, all above threshold
    gt = sample_landmark_instance(cfg, stream(0, 1, 0))
    values = np.array(render_heatmaps(gt, cfg).values)
    w, h = cfg.heatmap_size
    ys, xs = np.mgrid[0:h, 0:w]
    for k, (x, y) in enumerate(image_to_heatmap(gt.points, cfg.heatmap_size, cfg.image_size)):
        for amp, dx in ((0.95, 10), (0.9, -10)):
            cx = np.clip(x + dx, 3, w - 4)
            g = amp * np.exp(-((xs - cx) ** 2 + (ys - y - 6) ** 2) / (2 * cfg.gaussian_sigma ** 2))
            values[k] = np.maximum(values[k], g)
    return HeatmapStack(values)


def _best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number * 1e3


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    cfg = HarnessConfig()
    bank = _bank(cfg)
    h = _three_peaks(cfg)
    rng = np.random.default_rng(0)
    cand = rng.uniform(0, 160, size=(8, 3, 2))
    counts = np.full(8, 3, dtype=np.int64)
    channel = np.ascontiguousarray(h.values[0], dtype=np.float64)

    rows = []
    for name, mod in sorted(available_backends().items()):
        score = _best(lambda: mod.score_combinations(cand, counts, bank.mean_projection, 2, 1e-8),
                      args.repeat, 5)
        maxima = _best(lambda: mod.strict_local_maxima(channel), args.repeat, 50)
        refine = _best(lambda: refine_landmarks(h, DecodeConfig(), bank, cfg.image_size, backend=mod),
                       args.repeat, 5)
        rows.append((name, score, maxima, refine))

    print(f"{'backend':<8} {'score 3^8 (ms)':>15} {'local max (ms)':>15} {'refine (ms)':>12}")
    for name, score, maxima, refine in rows:
        print(f"{name:<8} {score:>15.3f} {maxima:>15.3f} {refine:>12.3f}")
    by_name = {r[0]: r[1:] for r in rows}
    if len(by_name) == 2:
        ratios = [p / c for p, c in zip(by_name["python"], by_name["cython"])]
        print(f"{'speed-up':<8} " + " ".join(f"{r:>{w}.1f}x" for r, w in zip(ratios, (14, 14, 11))))


if __name__ == "__main__":
    main()
