"""Finite-difference check of every attention kernel."""
import argparse

from rigkit.kernels.gradcheck import KERNELS, run_gradcheck


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()
    failed = 0
    for name in sorted(KERNELS):
        res = run_gradcheck(name, args.seeds, args.threads)
        failed += not res.passed
        print(f"{name}: max_rel_error {res.max_error:.3e} tol {res.tolerance:.0e} {'pass' if res.passed else 'FAIL'}")
    raise SystemExit(1 if failed else 0)


if __name__ == "__main__":
    main()
