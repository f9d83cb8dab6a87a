"""Price of anarchy against the cost scale theta on the upper-level Blotto game.

Solves the equilibrium with both solvers at each grid point and prints the
largest disagreement alongside welfare and PoA.
"""
import argparse

import numpy as np

from lossy_tullock.casestudy import CaseStudyConfig, CaseStudyResult, run_poa


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=20)
    ap.add_argument("--theta-min", type=float, default=0.1)
    ap.add_argument("--theta-max", type=float, default=12.0)
    ap.add_argument("--epsilon", type=float, default=1.0)
    args = ap.parse_args()

    cfg = CaseStudyConfig.default(theta_points=args.points, theta_min=args.theta_min,
                                  theta_max=args.theta_max, region_epsilon=args.epsilon)
    res = CaseStudyResult(cfg)
    run_poa(cfg, res)
    print(f"{'theta':>8} {'welf_so':>12} {'welf_ne':>12} {'poa':>9} {'solver gap':>11} configs")
    for (theta, so, ne, poa), m in zip(res.poa_rows, res.method_rows):
        print(f"{theta:8.3f} {so:12.2f} {ne:12.2f} {poa:9.6f} {m[1]:11.2e} {m[3]:>7d}")
    gaps = np.array([m[1] for m in res.method_rows])
    print(f"largest solver disagreement {np.nanmax(gaps):.2e}")


if __name__ == "__main__":
    main()
