"""Sweep gamma and lambda on Synthetic A and print mean subgroup count and width.

    python3 scripts/sweep_gamma_lambda.py --runs 20
"""

import argparse
import itertools

from r2p.experiment import ExperimentConfig, run_experiment


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--gammas", default="0.01,0.05,0.1,0.2,0.5")
    p.add_argument("--lambdas", default="0,0.25,0.5,0.75,1")
    p.add_argument("--dataset", default="synthetic-a")
    args = p.parse_args()

    gammas = [float(g) for g in args.gammas.split(",")]
    lambdas = [float(v) for v in args.lambdas.split(",")]
    print(f"{'gamma':>6} {'lambda':>6} {'#SG':>6} {'width':>8} {'coverage':>8}")
    for g, lam in itertools.product(gammas, lambdas):
        cfg = ExperimentConfig(dataset=args.dataset, methods=("r2p",), runs=args.runs, gamma=g, lam=lam)
        agg = run_experiment(cfg).aggregate["r2p"]
        width = agg["ci_width"]["mean"]
        print(f"{g:>6g} {lam:>6g} {agg['n_subgroups']['mean']:>6.2f} "
              f"{width if width is not None else float('inf'):>8.3f} {agg['coverage']['mean']:>8.3f}")


if __name__ == "__main__":
    main()
