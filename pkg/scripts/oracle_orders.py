"""Order-by-order LVE partial sums on a tiny lattice next to both brute-force oracles.

Shows how the truncation error shrinks with n_max and stays inside the certified tail.

    python scripts/oracle_orders.py --lam 0.02 0.05 0.1
"""
import argparse

from lvelab.gaussian import RngStream
from lvelab.kernels import ModelParams
from lvelab.lattice import LatticeSpec
from lvelab.lve_engine import EvalBudget, two_point
from lvelab.oracle import TinyModel, oracle_two_point_quadrature, oracle_two_point_sigma


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lam", type=float, nargs="+", default=[0.02, 0.05])
    ap.add_argument("--pair", type=int, nargs=2, default=[2, 3])
    ap.add_argument("--outer", type=int, default=2000)
    ap.add_argument("--sigma-samples", type=int, default=200000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = LatticeSpec(1.0, 3.0)
    y1, y2 = args.pair
    budget = EvalBudget(outer_samples=args.outer)
    for i, lam in enumerate(args.lam):
        p = ModelParams(1.0, lam)
        quad = oracle_two_point_quadrature(TinyModel(spec, p), lam, y1, y2)
        sig = oracle_two_point_sigma(spec, p, y1, y2, args.sigma_samples, RngStream(args.seed, (i, 0))).ratio
        print(f"lam={lam}  quadrature={quad.value:.6f} ({quad.nodes} nodes)  "
              f"sigma-oracle={sig.mean.real:.6f}+-{sig.std_err:.6f}")
        for n_max in range(3):
            res = two_point(p, spec, y1, y2, n_max, budget, RngStream(args.seed, (i, 1)))
            s = res.partial_sum
            print(f"  n_max={n_max}  S={s.mean.real:.6f}+-{s.std_err:.6f}  "
                  f"|S-quad|={abs(s.mean - quad.value):.2e}  tail={res.tail:.2e}")


if __name__ == "__main__":
    main()
