"""Gap eigenvalues of the delta-shell Dirac operator on a sphere, sector by sector.

For a sphere of radius ``R`` the problem separates into spin-orbit sectors
``kappa_so`` (nonzero integers).  In each sector a solution has the form
``(G(r) Omega_{kappa}, i F(r) Omega_{-kappa})`` and the radial system is

    G' + (1 + kappa)/r G = (lam + m) F,
    F' + (1 - kappa)/r F = (m - lam) G.

In the gap, with ``q = sqrt(m^2 - lam^2)``, the regular interior solution is
``G = i_l(qr)``, ``F = q i_lb(qr)/(m + lam)`` and the decaying exterior solution
is ``G = k_l(qr)``, ``F = -q k_lb(qr)/(m + lam)``, where ``l(l+1) = kappa(kappa+1)``
and ``lb = l - sign(kappa)``.  The jump condition turns into a 2x2 linear
system for the two amplitudes.  The derivation is written out in
``docs/radial_reduction.md``.

Only ratios of Bessel functions enter (the determinant is divided by the
positive product ``i_l k_l``), so nothing overflows or underflows near the
band edges or for large ``|kappa|``.  The ratios come from the three-term
recurrences: backward (continued fraction) for ``i_n`` and forward for ``k_n``.
No code is shared with the boundary-element path.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "RadialSector", "sector_orders", "bessel_i_ratio", "bessel_k_ratio",
    "radial_matching_det", "radial_matching_det_unscaled", "sector_roots",
    "OracleRoot", "oracle_spectrum", "merge_roots", "oracle_to_json",
]


@dataclass(frozen=True)
class RadialSector:
    kappa_so: int
    R: float = 1.0
    m: float = 1.0
    eta: float = 1.0

    def __post_init__(self):
        if int(self.kappa_so) != self.kappa_so or self.kappa_so == 0:
            raise ValueError("kappa_so must be a nonzero integer")
        if not (self.R > 0 and self.m > 0):
            raise ValueError("R and m must be positive")
        if not np.isfinite(self.eta):
            raise ValueError("eta must be finite")


def sector_orders(kappa_so: int) -> tuple[int, int]:
    """Bessel orders ``(l, lb)`` carried by the upper and lower radial components."""
    k = int(kappa_so)
    if k > 0:
        return k, k - 1
    if k < 0:
        return -k - 1, -k
    raise ValueError("kappa_so must be nonzero")


def _i_up_ratios(nmax: int, x: float) -> np.ndarray:
    """u[n] = i_{n+1}(x) / i_n(x) for n = 0..nmax, by backward recurrence."""
    start = nmax + int(2 * x) + 60
    u = 0.0
    out = np.empty(nmax + 1)
    for n in range(start, -1, -1):
        # i_{n-1}/i_n = (2n+1)/x + i_{n+1}/i_n
        if n <= nmax:
            out[n] = u
        u = 1.0 / ((2 * n + 1) / x + u)
    return out


def _k_up_ratios(nmax: int, x: float) -> np.ndarray:
    """s[n] = k_{n+1}(x) / k_n(x) for n = 0..nmax, by forward recurrence."""
    out = np.empty(nmax + 1)
    s = 1.0 + 1.0 / x
    out[0] = s
    for n in range(1, nmax + 1):
        s = 1.0 / s + (2 * n + 1) / x
        out[n] = s
    return out


def bessel_i_ratio(l: int, lb: int, x: float) -> float:
    """i_lb(x) / i_l(x) for ``|l - lb| = 1`` and ``x > 0``."""
    if x <= 0:
        raise ValueError("x must be positive")
    u = _i_up_ratios(max(l, lb), x)
    if lb == l + 1:
        return float(u[l])
    if lb == l - 1:
        return float(1.0 / u[lb])
    raise ValueError("orders must differ by one")


def bessel_k_ratio(l: int, lb: int, x: float) -> float:
    """k_lb(x) / k_l(x) for ``|l - lb| = 1`` and ``x > 0``."""
    if x <= 0:
        raise ValueError("x must be positive")
    s = _k_up_ratios(max(l, lb), x)
    if lb == l + 1:
        return float(s[l])
    if lb == l - 1:
        return float(1.0 / s[lb])
    raise ValueError("orders must differ by one")


def _check_gap(lam, m):
    lam = float(lam)
    if not -m < lam < m:
        raise ValueError(f"lambda={lam} is outside the gap (-{m}, {m})")
    return lam


def radial_matching_det(lam: float, sector: RadialSector) -> float:
    """Matching determinant divided by ``i_l(qR) k_l(qR) > 0`` (same sign and zeros)."""
    m, R, h = sector.m, sector.R, 0.5 * sector.eta
    lam = _check_gap(lam, m)
    q = np.sqrt(m * m - lam * lam)
    t = q / (m + lam)
    l, lb = sector_orders(sector.kappa_so)
    x = q * R
    ri = t * bessel_i_ratio(l, lb, x)  # F_in / G_in
    re = t * bessel_k_ratio(l, lb, x)  # -F_out / G_out
    return float((h + ri) * (1.0 - h * re) - (h + re) * (h * ri - 1.0))


def radial_matching_det_unscaled(lam: float, sector: RadialSector) -> float:
    """The same determinant built from scipy's Bessel functions (cross-check only)."""
    from scipy.special import spherical_in, spherical_kn

    m, R, h = sector.m, sector.R, 0.5 * sector.eta
    lam = _check_gap(lam, m)
    q = np.sqrt(m * m - lam * lam)
    l, lb = sector_orders(sector.kappa_so)
    x = q * R
    gi, fi = spherical_in(l, x), q * spherical_in(lb, x) / (m + lam)
    ge, fe = spherical_kn(l, x), -q * spherical_kn(lb, x) / (m + lam)
    return float((h * gi + fi) * (h * fe + ge) - (h * ge - fe) * (h * fi - gi))


def sector_roots(sector: RadialSector, *, n_grid: int = 4001, edge: float = 1e-3,
                 xtol: float = 1e-13) -> list[float]:
    """All sign changes of the determinant on ``[-m(1-edge), m(1-edge)]``, refined by brentq."""
    m = sector.m
    lams = np.linspace(-m * (1 - edge), m * (1 - edge), n_grid)
    d = np.array([radial_matching_det(x, sector) for x in lams])
    roots = []
    for i in np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) <= 0)[0]:
        a, b = lams[i], lams[i + 1]
        if d[i] == 0.0:
            roots.append(float(a))
            continue
        if d[i + 1] == 0.0:
            continue  # picked up at the next interval
        roots.append(float(brentq(radial_matching_det, a, b, args=(sector,), xtol=xtol * m,
                                  rtol=4 * np.finfo(float).eps)))
    return roots


@dataclass(frozen=True)
class OracleRoot:
    lam: float
    kappa_so: int
    degeneracy: int


def oracle_spectrum(R: float = 1.0, m: float = 1.0, eta: float = 1.0, K: int = 12, *,
                    n_grid: int = 4001, edge: float = 1e-3, xtol: float = 1e-13) -> list[OracleRoot]:
    """Gap eigenvalues for sectors ``1 <= |kappa_so| <= K``, sorted by lambda."""
    if K < 1:
        raise ValueError("K must be at least 1")
    out = []
    for k in range(1, K + 1):
        for ks in (-k, k):
            sec = RadialSector(ks, R, m, eta)
            for lam in sector_roots(sec, n_grid=n_grid, edge=edge, xtol=xtol):
                out.append(OracleRoot(lam, ks, 2 * abs(ks)))
    return sorted(out, key=lambda r: (r.lam, r.kappa_so))


def merge_roots(roots: list[OracleRoot], tol: float = 1e-6) -> list[tuple[float, int]]:
    """Cluster coincident roots; returns ``(lambda, total degeneracy)`` pairs."""
    merged: list[list] = []
    for r in sorted(roots, key=lambda r: r.lam):
        if merged and abs(r.lam - merged[-1][0]) <= tol:
            merged[-1][1] += r.degeneracy
        else:
            merged.append([r.lam, r.degeneracy])
    return [(float(a), int(b)) for a, b in merged]


def oracle_to_json(roots: list[OracleRoot], *, R: float, m: float, eta: float, K: int,
                   extra: dict | None = None) -> str:
    sectors: dict[str, list[float]] = {}
    for r in roots:
        sectors.setdefault(str(r.kappa_so), []).append(r.lam)
    doc = {"eta": eta, "R": R, "m": m, "K": K, "roots": [asdict(r) for r in roots],
           "roots_per_sector": sectors}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True)
