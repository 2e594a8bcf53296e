"""How often DIC and WAIC pick the true regime count or autoregressive order.

    python scripts/run_selection.py --experiment regimes --replications 50 --n-jobs 4
    python scripts/run_selection.py --experiment orders --family student_t
"""

import argparse
import json
import logging

from mtarmix.cli import DEFAULT_TRUE_EXTRA, rounded
from mtarmix.gibbs import ChainControl
from mtarmix.simlab import make_m1_ar, order_candidates, regime_count_candidates, selection_experiment
from mtarmix.stats_kernel import NoiseFamily


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--experiment", choices=["regimes", "orders"], default="regimes")
    ap.add_argument("--family", default="student_t")
    ap.add_argument("--extra", type=float, nargs="*")
    ap.add_argument("--T", type=int, default=1000)
    ap.add_argument("--replications", type=int, default=50)
    ap.add_argument("--iterations", type=int, default=1500)
    ap.add_argument("--burn-in", type=int, default=500)
    ap.add_argument("--dic-h", choices=["mode", "mean_rounded"], default="mode")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-jobs", type=int, default=1)
    ap.add_argument("--out", default=None)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    fam = NoiseFamily.parse(args.family)
    truth = make_m1_ar(fam, args.extra or DEFAULT_TRUE_EXTRA["m1_ar"].get(fam))
    if args.experiment == "regimes":
        cands, true_index = regime_count_candidates(fam, p=1, max_l=4), truth.spec.l - 1
    else:
        cands, true_index = order_candidates(truth.spec.l, fam, (1, 2, 3)), truth.spec.p[0] - 1
    table = selection_experiment(truth, cands, true_index, T=args.T, replications=args.replications,
                                 control=ChainControl(args.iterations, args.burn_in), seed=args.seed,
                                 n_jobs=args.n_jobs, dic_h=args.dic_h)

    print(f"{args.experiment}: truth = {table.candidates[true_index]}, "
          f"{table.replications} replications, {table.failures} failed")
    print(f"{'candidate':<32} {'DIC %':>7} {'WAIC %':>7}")
    for i, name in enumerate(table.candidates):
        share = {c: 100.0 * sum(ch == i for ch in table.choices[c]) / max(table.replications, 1)
                 for c in ("DIC", "WAIC")}
        print(f"{name:<32} {share['DIC']:7.1f} {share['WAIC']:7.1f}")
    print("truth ranked second:", {c: f"{100 * v:.1f}%" for c, v in table.rank2.items()})
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(rounded(table.to_dict()), fh, indent=2)


if __name__ == "__main__":
    main()
