"""Requested vs achieved PFA on homogeneous exponential clutter.

    python3 scripts/run_calibration.py --out results/calibration --trials 4
"""

import argparse

from cfarkit.bench import calibration_sweep
from cfarkit.detector import Strategy
from cfarkit.simulator import SceneSpec
from cfarkit.stencil import StencilSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="results/calibration")
    ap.add_argument("--size", type=int, default=1024)
    ap.add_argument("--trials", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int)
    args = ap.parse_args()

    stencils = [StencilSpec(1, 1, 1, 1), StencilSpec(1, 1, 2, 2), StencilSpec(3, 3, 1, 2), StencilSpec(1, 1, 3, 5)]
    report = calibration_sweep(
        stencils,
        [Strategy.CA, Strategy.SOCA, Strategy.GOCA, Strategy.OS],
        [1e-2, 1e-3, 1e-4],
        SceneSpec(args.size, args.size, seed=args.seed),
        args.trials,
        threads=args.threads,
    )
    report.write(args.out)
    print(report.summary(), end="")


if __name__ == "__main__":
    main()
