"""How often goodness-of-fit ranking recovers the generating family.

    python3 scripts/model_selection.py --out results/selection --trials 100
"""

import argparse

from cfarkit.bench import model_selection_study
from cfarkit.models import Exponential, LogNormal, Weibull


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="results/selection")
    ap.add_argument("--samples", type=int, default=10_000)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--statistic", choices=["cvm", "ad"], default="cvm")
    args = ap.parse_args()

    generators = {"exp": Exponential(1.0), "weibull": Weibull(2.0, 1.0), "lognormal": LogNormal(0.0, 0.5)}
    report = model_selection_study(
        generators, ["exp", "weibull", "lognormal"], args.samples, args.trials, seed=args.seed, statistic=args.statistic
    )
    report.write(args.out)
    print(report.summary(), end="")


if __name__ == "__main__":
    main()
