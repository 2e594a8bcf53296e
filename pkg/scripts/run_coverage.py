"""Coverage of credible and prediction intervals over simulated replications.

    python scripts/run_coverage.py --preset m1 --family student_t --replications 100 --n-jobs 4

``--profile full`` runs 1000 replications; expect many hours on a laptop.
"""

import argparse
import json
import logging

from mtarmix.cli import DEFAULT_TRUE_EXTRA, rounded
from mtarmix.gibbs import ChainControl
from mtarmix.model_core import ModelSpec
from mtarmix.simlab import make_m1, make_m1_ar, make_m2, coverage_experiment
from mtarmix.stats_kernel import NoiseFamily

PRESETS = {"m1": make_m1, "m2": make_m2, "m1_ar": make_m1_ar}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", choices=sorted(PRESETS), default="m1")
    ap.add_argument("--family", default="gaussian")
    ap.add_argument("--extra", type=float, nargs="*", help="true extra parameters of the noise law")
    ap.add_argument("--T", type=int, default=1000)
    ap.add_argument("--replications", type=int, default=100)
    ap.add_argument("--profile", choices=["desk", "full"], default="desk")
    ap.add_argument("--iterations", type=int, default=None)
    ap.add_argument("--burn-in", type=int, default=500)
    ap.add_argument("--horizon", type=int, default=10)
    ap.add_argument("--h-max", type=int, default=3, help="largest delay the fitted model considers")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-jobs", type=int, default=1)
    ap.add_argument("--out", default=None, help="write the report as JSON here")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    fam = NoiseFamily.parse(args.family)
    extra = args.extra or DEFAULT_TRUE_EXTRA[args.preset].get(fam)
    truth = PRESETS[args.preset](fam, extra)
    s = truth.spec
    fit_spec = ModelSpec(s.l, s.p, s.q, s.d, 0, max(args.h_max, truth.h), fam)
    iters = args.iterations or (2000 if fam is NoiseFamily.SYMMETRIC_HYPERBOLIC else 1500)
    reps = 1000 if args.profile == "full" else args.replications
    rep = coverage_experiment(truth, T=args.T, replications=reps,
                              control=ChainControl(iters, args.burn_in), horizon=args.horizon,
                              seed=args.seed, n_jobs=args.n_jobs, fit_spec=fit_spec)

    print(f"{args.preset} / {fam.value} / T={args.T}: {rep.replications} replications, {rep.failures} failed")
    for name, cov in rep.coverage.items():
        print(f"  {name:<16} {cov:6.1f}")
    print("threshold bias:", " ".join(f"{b:+.5f}" for b in rep.threshold_bias))
    if rep.extra_relative_bias.size:
        print("extra relative bias (%):", " ".join(f"{b:+.2f}" for b in rep.extra_relative_bias))
    print(f"delay hit rate: {rep.delay_hit_rate:.1f}%")
    print("prediction coverage by step (rows) and coordinate (columns):")
    for i, row in enumerate(rep.prediction_coverage, start=1):
        print(f"  {i:>3} " + " ".join(f"{v:6.1f}" for v in row))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(rounded(rep.to_dict()), fh, indent=2)


if __name__ == "__main__":
    main()
