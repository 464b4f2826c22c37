"""Iterations per cycle with and without warm start, on a drifting beam.

    python scripts/warm_start_demo.py --cycles 8 --drift 0.05
"""
import argparse
import tempfile

from vdfgmm.pipeline import PipelineConfig, run_timeseries


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--scenario", default="drifting-beam")
    ap.add_argument("--particles", type=int, default=100_000)
    ap.add_argument("--bins", type=int, default=100)
    ap.add_argument("--cycles", type=int, default=6)
    ap.add_argument("--drift", type=float, default=0.05, help="per-cycle shift of the u mean")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    base = PipelineConfig(scenario=args.scenario, particles=args.particles, dimension=2, bins=args.bins,
                          cycles=args.cycles, seed=args.seed, drift=(args.drift, 0.0))
    with tempfile.TemporaryDirectory() as tmp:
        warm = run_timeseries(base.updated({"out_dir": f"{tmp}/warm"}))["cycles"]
        cold = run_timeseries(base.updated({"out_dir": f"{tmp}/cold", "warm_start": False}))["cycles"]

    print(f"{'cycle':>5} {'warm_iters':>10} {'cold_iters':>10} {'warm_M':>6} {'warm_jsd':>9}")
    for w, c in zip(warm, cold):
        print(f"{w['cycle']:5d} {w['iterations']:10d} {c['iterations']:10d} {w['components']:6d} "
              f"{w['jsd_vs_histogram']:9.4f}")
    print(f"total iterations: warm {sum(w['iterations'] for w in warm)}, "
          f"cold {sum(c['iterations'] for c in cold)}")


if __name__ == "__main__":
    main()
