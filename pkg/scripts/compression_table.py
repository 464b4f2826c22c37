"""Compression ratio and fidelity of the GMM codec vs baselines as N grows.

Runs the benchmark at several particle counts and prints the rows side by side.
The GMM payload size is fixed by (M, d), so its ratio against raw particles
grows linearly with N while the histogram and lossless baselines do not.

    python scripts/compression_table.py --particles 10000 100000 1000000
"""
import argparse
import tempfile

from vdfgmm.pipeline import PipelineConfig, run_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--particles", type=int, nargs="+", default=[10_000, 100_000, 1_000_000])
    ap.add_argument("--scenario", default="bump-on-tail")
    ap.add_argument("--bins", type=int, default=100)
    ap.add_argument("--components", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'N':>9} {'codec':>9} {'input':>9} {'bytes_in':>10} {'bytes_out':>9} {'ratio':>10} {'jsd_orig':>9}")
    for n in args.particles:
        cfg = PipelineConfig(scenario=args.scenario, particles=n, dimension=2, bins=args.bins,
                             components=args.components, prune_threshold=0.0, repeat=1, seed=args.seed)
        with tempfile.TemporaryDirectory() as tmp:
            rows = run_benchmark(cfg.updated({"out_dir": tmp}))
        for r in rows:
            print(f"{n:9d} {r.codec:>9} {r.input:>9} {r.bytes_in:10d} {r.bytes_out:9d} "
                  f"{r.ratio:10.1f} {r.jsd_vs_original:9.4f}")


if __name__ == "__main__":
    main()
