"""Time the semi-analytical Blotto solver against projected-gradient iteration."""
import argparse

from lossy_tullock.blotto import benchmark_methods
from lossy_tullock.casestudy import CaseStudyConfig
from lossy_tullock.solver import SolverConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--theta", type=float, default=1.0)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--gamma-bar", type=float, default=SolverConfig.gamma_bar)
    args = ap.parse_args()

    spec = CaseStudyConfig.default().blotto(args.theta)
    rep = benchmark_methods(spec, SolverConfig(gamma_bar=args.gamma_bar), repeats=args.repeats)
    print(f"semi-analytical  {rep.semi_analytical_time * 1e3:9.3f} ms  "
          f"{rep.semi_analytical_evaluations} root evaluations, "
          f"{rep.configurations_tried} configuration(s)")
    print(f"iterative        {rep.iterative_time * 1e3:9.3f} ms  "
          f"{rep.iterative_inner_steps} inner steps")
    print(f"speedup {rep.speedup:.0f}x, max allocation difference {rep.agreement:.2e}")


if __name__ == "__main__":
    main()
