"""Run the three-company case study and write CSV tables plus a manifest.

    python scripts/run_case_study.py --out results/case_study
    python scripts/run_case_study.py --parts poa --theta-points 40
"""
import argparse
import time

from lossy_tullock.casestudy import PARTS, CaseStudyConfig, emit_results, run_case_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/case_study")
    ap.add_argument("--parts", nargs="+", default=list(PARTS), choices=PARTS)
    ap.add_argument("--theta-points", type=int)
    ap.add_argument("--epsilon", type=float, help="fictitious participation in every region")
    ap.add_argument("--n-jobs", type=int)
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()

    cfg = CaseStudyConfig.default(theta_points=args.theta_points, region_epsilon=args.epsilon,
                                  n_jobs=args.n_jobs, seed=args.seed)
    t0 = time.perf_counter()
    result = run_case_study(cfg, args.parts)
    files = emit_results(result, args.out)
    print(f"config {cfg.digest()[:12]}  ({cfg.profile_label})")
    for row in result.poa_rows[:: max(1, len(result.poa_rows) // 5)]:
        print(f"theta {row[0]:7.3f}  PoA {row[3]:.6f}")
    for row in result.horizon_rows:
        print(f"T={row[0]}  profits {[round(float(v), 2) for v in row[1:-1]]}  lost {row[-1]:.2f}")
    print(f"wrote {len(files)} files to {args.out} in {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
