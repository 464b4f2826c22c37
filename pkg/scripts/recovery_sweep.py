"""Two-Gaussian recovery across seeds and bin counts.

For each setting prints the fitted component count, the error of the two
heaviest means, JSD(model, histogram) and the JSD of the *true* density against
the same histogram.  The last column is the sampling-noise floor: no model can
be expected to beat it by much.

    python scripts/recovery_sweep.py --seeds 5 --bins 200 100 64
"""
import argparse

import numpy as np

from vdfgmm import histogram as h
from vdfgmm import metrics, wgmm
from vdfgmm import synthdata as sd

TRUE_MEANS = np.array([[-2.0, 0.0], [2.0, 0.0]])


def run(seed: int, n_bins: int, particles: int, threshold: float):
    spec = sd.ScenarioSpec((sd._component(0.5, TRUE_MEANS[0], np.eye(2)),
                            sd._component(0.5, TRUE_MEANS[1], np.eye(2))), particles, seed, 2)
    p = sd.generate(spec)
    hist = h.bin_particles(p, "uv", n_bins, h.default_ranges(p, "uv"))
    res = wgmm.fit(h.to_weighted_points(hist),
                   wgmm.FitConfig(initial_components=12, prune_threshold=threshold, seed=seed),
                   p.nominal_temperature)
    model = res.model
    heavy = model.means[np.argsort(-model.weights)[:2]]
    heavy = heavy[np.argsort(heavy[:, 0])]
    truth = wgmm.GmmModel([0.5, 0.5], TRUE_MEANS, [np.eye(2)] * 2)
    return (model.n_components, float(np.abs(heavy - TRUE_MEANS).max()),
            metrics.jsd_model_vs_histogram(model, hist), metrics.jsd_model_vs_histogram(truth, hist),
            res.iterations_used)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--bins", type=int, nargs="+", default=[200, 100])
    ap.add_argument("--particles", type=int, default=100_000)
    ap.add_argument("--threshold", type=float, default=0.005)
    args = ap.parse_args()

    print(f"{'bins':>5} {'seed':>5} {'M_hat':>6} {'mean_err':>9} {'jsd_fit':>8} {'jsd_true':>9} {'iters':>6}")
    for n_bins in args.bins:
        for seed in range(args.seeds):
            m, err, j, j_true, its = run(seed, n_bins, args.particles, args.threshold)
            print(f"{n_bins:5d} {seed:5d} {m:6d} {err:9.3f} {j:8.4f} {j_true:9.4f} {its:6d}")


if __name__ == "__main__":
    main()
