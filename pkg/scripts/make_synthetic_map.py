"""Write a synthetic grid map (attributes, adjacency, geometry) plus a run config.

    python scripts/make_synthetic_map.py OUT_DIR --rows 10 --cols 10 --ndists 4
"""
import argparse

from redistsim.synthetic import write_instance


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("out")
    ap.add_argument("--rows", type=int, default=10)
    ap.add_argument("--cols", type=int, default=10)
    ap.add_argument("--ndists", type=int, default=4)
    ap.add_argument("--pop-tol", type=float, default=0.05)
    ap.add_argument("--counties", type=int, nargs=2, metavar=("BLOCK_ROWS", "BLOCK_COLS"))
    ap.add_argument("--nsims", type=int, default=500)
    ap.add_argument("--chains", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    path = write_instance(a.out, a.rows, a.cols, a.ndists, a.pop_tol, a.counties, a.seed, a.nsims, a.chains)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
