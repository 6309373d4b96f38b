"""Compare weighted sampler output with exact enumeration on small grids.

For each case, prints the total-variation distance between the weighted
sample and the enumerated target, plus the runtime.

    python scripts/exactness.py [--nsims 20000] [--seed 0]
"""
import argparse
import math
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from oracles import bipartitions_by_mask, equal_partitions, grid_edges, tau_det, weighted_tv  # noqa: E402

from redistsim.constraints import ConstraintSpec  # noqa: E402
from redistsim.sampler import SamplerParams, smc_sample  # noqa: E402
from redistsim.synthetic import grid_map  # noqa: E402


def cases():
    e44 = grid_edges(4, 4)
    yield "4x4 k=2", 4, 4, 2, 1.0, lambda: bipartitions_by_mask(16, e44, 8)
    e34 = grid_edges(3, 4)
    yield "3x4 k=2", 3, 4, 2, 1.0, lambda: equal_partitions(12, e34, 2)
    yield "3x4 k=3", 3, 4, 3, 1.0, lambda: equal_partitions(12, e34, 3)
    yield "3x4 k=2 rho=0.5", 3, 4, 2, 0.5, lambda: equal_partitions(
        12, e34, 2, weight=lambda parts: math.prod(tau_det(p, e34) ** 0.5 for p in parts))
    yield "4x4 k=4", 4, 4, 4, 1.0, lambda: equal_partitions(16, e44, 4)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--nsims", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    print(f"{'case':<18}{'plans':>8}{'TV':>9}{'seconds':>9}")
    for name, rows, cols, k, rho, target in cases():
        exact = target()
        rmap = grid_map(rows, cols, k, pop_tol=0.001)
        t0 = time.perf_counter()
        e = smc_sample(rmap, ConstraintSpec(pop_tol=0.001, rho=rho),
                       SamplerParams(nsims=a.nsims, nchains=1, seed=a.seed, final_resample=False))
        tv = weighted_tv(e.plans, e.weights, exact)
        print(f"{name:<18}{len(exact):>8}{tv:>9.4f}{time.perf_counter() - t0:>9.1f}")


if __name__ == "__main__":
    main()
