"""ROC points for CA and OS on a K-clutter scene with a grid of point targets.

    python3 scripts/run_roc.py --out results/roc
"""

import argparse
import os

import numpy as np

from cfarkit.bench import roc_points
from cfarkit.detector import DetectorConfig, Strategy
from cfarkit.simulator import Heterogeneous, SceneSpec, TargetSpec
from cfarkit.stencil import StencilSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="results/roc")
    ap.add_argument("--size", type=int, default=512)
    ap.add_argument("--multiplier", type=float, default=15.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    step = 32
    targets = [TargetSpec(r, c, 2, 2, args.multiplier) for r in range(16, args.size - 16, step) for c in range(16, args.size - 16, step)]
    scene = SceneSpec(args.size, args.size, background=Heterogeneous(4.0, 4.0), targets=targets, seed=args.seed)
    stencil = StencilSpec(1, 1, 3, 3)
    grid = np.geomspace(1.5, 60.0, 25)
    for strategy in (Strategy.CA, Strategy.OS):
        report = roc_points(scene, stencil, DetectorConfig(strategy=strategy), grid)
        report.experiment_id = f"roc_{strategy.value}"
        outdir = os.path.join(args.out, strategy.value)
        report.write(outdir)
        print(report.summary(), end="")


if __name__ == "__main__":
    main()
