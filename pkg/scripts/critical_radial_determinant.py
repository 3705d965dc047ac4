"""Behaviour of the radial matching determinant at the critical strengths eta = +-2.

Open experiment: does the determinant vanish identically in some sector?  For
each sector the script samples the determinant over the gap and reports its
range and sign changes; it makes no eigenvalue claim.  For eta = 2 the
determinant reduces to ``2 (1 - ri re)`` with the Bessel ratios of the
matching condition, so it vanishes identically only if ``ri re = 1`` on the
whole gap.
"""
import argparse

import numpy as np

from diracshell.radial import RadialSector, radial_matching_det


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--K", type=int, default=8)
    ap.add_argument("--n", type=int, default=2001)
    args = ap.parse_args()
    lams = np.linspace(-0.999, 0.999, args.n)
    print(f"{'eta':>4} {'kappa':>6} {'min |det|':>12} {'max |det|':>12} {'sign changes':>13} {'first root':>12}")
    for eta in (2.0, -2.0):
        for k in range(1, args.K + 1):
            for ks in (-k, k):
                sec = RadialSector(ks, 1.0, 1.0, eta)
                d = np.array([radial_matching_det(x, sec) for x in lams])
                ch = np.nonzero(np.sign(d[:-1]) != np.sign(d[1:]))[0]
                first = f"{lams[ch[0]]:.6f}" if len(ch) else "-"
                print(f"{eta:4g} {ks:6d} {np.abs(d).min():12.3e} {np.abs(d).max():12.3e} {len(ch):13d} {first:>12}")


if __name__ == "__main__":
    main()
