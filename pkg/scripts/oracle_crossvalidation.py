"""Boundary-element gap eigenvalues on the unit sphere against the radial oracle.

    python3 scripts/oracle_crossvalidation.py --level 3 --etas 0.5,1,3
"""
import argparse

from diracshell.suites import spectral_crossvalidation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--level", type=int, default=2)
    ap.add_argument("--etas", default="0.5,1,3")
    ap.add_argument("--n-grid", type=int, default=301)
    args = ap.parse_args()
    etas = tuple(float(e) for e in args.etas.split(","))
    rep = spectral_crossvalidation(args.level, etas, n_grid=args.n_grid)
    print(f"{'eta':>5} {'oracle':>14} {'deg':>4} {'bem':>14} {'mult':>5} {'error':>10}")
    for r in rep["rows"]:
        if "oracle" in r:
            print(f"{r['eta']:5g} {r['oracle']:14.10f} {r['degeneracy']:4d} {r['bem']:14.10f} "
                  f"{r['multiplicity']:5d} {r['error']:10.2e}")
        else:
            print(f"{r['eta']:5g} spurious resolved roots: {len(r['spurious'])}, "
                  f"unresolved grid-scale crossings: {len(r['unresolved_crossings'])}")
    print("all matched" if rep["passed"] else "MISMATCH")


if __name__ == "__main__":
    main()
