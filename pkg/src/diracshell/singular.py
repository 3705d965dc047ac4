"""Explicit singular sequences for band energies |lam| >= m.

    psi_n(x) = n^{-3/2} chi(|x - x_n| / n) exp(i kappa x.e1) v,
    v = (kappa alpha_1 + m beta + lam) zeta,   kappa = sqrt(lam^2 - m^2) >= 0,
    x_n = (R + n^2) e1.

Because ``(kappa alpha_1 + m beta - lam) v = 0`` only the derivative of the
cutoff survives in ``(A - lam) psi_n``, which is ``O(1/n)`` in L2 while
``||psi_n||`` does not depend on ``n``.  ``chi`` is a C^2 quintic bump equal to
1 on [0, 1/2] and 0 on [1, inf).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .algebra import ALPHA, BETA, I4, alpha_dot_many, basis_spinor
from .kernel import SpectralPoint, fd_dirac_apply
from .surface import smoothstep5

__all__ = [
    "chi", "chi_prime", "SingularSequenceSpec", "make_spec", "eval_psi", "eval_residual",
    "ball_quadrature", "psi_norm", "psi_norm_closed_form", "residual_norm", "slope_fit",
    "weak_null_check", "fd_residual_check", "residual_table_csv",
]


def chi(r):
    r = np.asarray(r, dtype=float)
    return 1.0 - smoothstep5(np.clip(2.0 * r - 1.0, 0.0, 1.0))


def chi_prime(r):
    r = np.asarray(r, dtype=float)
    u = np.clip(2.0 * r - 1.0, 0.0, 1.0)
    return -2.0 * 30.0 * u * u * (1.0 - u) ** 2


def _vector(lam, m, zeta):
    kappa = np.sqrt(max(lam * lam - m * m, 0.0))
    return (kappa * ALPHA[0] + m * BETA + lam * I4) @ np.asarray(zeta, dtype=complex)


@dataclass(frozen=True)
class SingularSequenceSpec:
    lam: float
    m: float = 1.0
    R: float = 1.0
    n: int = 2
    zeta: tuple = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.m > 0 or not self.R > 0:
            raise ValueError("m and R must be positive")
        if abs(self.lam) < self.m:
            raise ValueError(f"lambda={self.lam} is in the gap; singular sequences need |lambda| >= m")
        if int(self.n) != self.n or self.n < 2:
            # the support ball B(x_n, n) stays off the enclosing ball only for n > 1
            raise ValueError("n must be an integer >= 2")
        if np.linalg.norm(_vector(self.lam, self.m, self.zeta)) == 0:
            raise ValueError("(kappa alpha_1 + m beta + lambda) zeta vanishes; choose another zeta")

    @property
    def kappa(self) -> float:
        return float(np.sqrt(max(self.lam ** 2 - self.m ** 2, 0.0)))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.R + self.n ** 2, 0.0, 0.0])

    @property
    def v(self) -> np.ndarray:
        return _vector(self.lam, self.m, self.zeta)


def make_spec(lam: float, n: int, *, m: float = 1.0, R: float = 1.0, zeta=None) -> SingularSequenceSpec:
    """Sequence parameters with ``zeta = e_1`` unless that is annihilated, then the next basis spinor."""
    cands = [zeta] if zeta is not None else [tuple(basis_spinor(k)) for k in range(4)]
    for z in cands:
        if np.linalg.norm(_vector(lam, m, z)) > 0:
            return SingularSequenceSpec(float(lam), m, R, int(n), tuple(complex(c) for c in z))
    raise ValueError("no admissible zeta")


def eval_psi(spec: SingularSequenceSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x - spec.center, axis=-1)
    ph = np.exp(1j * spec.kappa * x[..., 0])
    amp = spec.n ** -1.5 * chi(r / spec.n) * ph
    return amp[..., None] * spec.v


def eval_residual(spec: SingularSequenceSpec, x) -> np.ndarray:
    """Closed form of (A - lam) psi_n: only the chi' term survives."""
    x = np.asarray(x, dtype=float)
    d = x - spec.center
    r = np.linalg.norm(d, axis=-1)
    rhat = d / np.where(r > 0, r, 1.0)[..., None]
    amp = -1j * spec.n ** -2.5 * np.exp(1j * spec.kappa * x[..., 0]) * chi_prime(r / spec.n)
    return amp[..., None] * (alpha_dot_many(rhat) @ spec.v)


def ball_quadrature(center, radius, n_r: int = 12, n_t: int = 8, n_p: int = 8):
    """Points and weights on B(center, radius), radial GL split at radius/2."""
    xs, ws = np.polynomial.legendre.leggauss(n_r)
    rs, wr = [], []
    for a, b in ((0.0, 0.5 * radius), (0.5 * radius, radius)):
        rs.append(a + (xs + 1) * (b - a) / 2)
        wr.append(ws * (b - a) / 2)
    r = np.concatenate(rs)
    wr = np.concatenate(wr) * r * r
    mu, wmu = np.polynomial.legendre.leggauss(n_t)
    ph = 2 * np.pi * np.arange(n_p) / n_p
    st = np.sqrt(1 - mu * mu)
    om = np.stack([np.outer(st, np.cos(ph)), np.outer(st, np.sin(ph)),
                   np.outer(mu, np.ones(n_p))], -1).reshape(-1, 3)
    wo = np.outer(wmu, np.full(n_p, 2 * np.pi / n_p)).reshape(-1)
    pts = np.asarray(center)[None, None, :] + r[:, None, None] * om[None]
    return pts.reshape(-1, 3), (wr[:, None] * wo[None]).reshape(-1)


def psi_norm(spec: SingularSequenceSpec, **q) -> float:
    pts, w = ball_quadrature(spec.center, spec.n, **q)
    return float(np.sqrt(np.sum(w * np.sum(np.abs(eval_psi(spec, pts)) ** 2, -1))))


def psi_norm_closed_form(spec: SingularSequenceSpec) -> float:
    """|v| (int_{B(0,1)} chi(|y|)^2 dy)^{1/2}."""
    xs, ws = np.polynomial.legendre.leggauss(12)
    tot = 1.0 / 3.0 * 0.125  # int_0^{1/2} r^2 dr
    r = 0.75 + 0.25 * xs
    tot += np.sum(0.25 * ws * chi(r) ** 2 * r * r)
    return float(np.linalg.norm(spec.v) * np.sqrt(4 * np.pi * tot))


def residual_norm(spec: SingularSequenceSpec, **q) -> float:
    pts, w = ball_quadrature(spec.center, spec.n, **q)
    return float(np.sqrt(np.sum(w * np.sum(np.abs(eval_residual(spec, pts)) ** 2, -1))))


def slope_fit(ns, values) -> float:
    """Least-squares slope of log(values) against log(ns)."""
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(values, float)), 1)[0])


@dataclass
class OverlapReport:
    disjoint: bool
    separation: float
    radius_sum: float
    inner_product: complex
    meta: dict = field(default_factory=dict)


def weak_null_check(s1: SingularSequenceSpec, s2: SingularSequenceSpec, **q) -> OverlapReport:
    """Support balls are disjoint (touching allowed) and the L2 inner product vanishes."""
    sep = float(np.linalg.norm(s1.center - s2.center))
    rs = float(s1.n + s2.n)
    pts, w = ball_quadrature(s1.center, s1.n, **q)
    ip = complex(np.sum(w * np.sum(np.conj(eval_psi(s1, pts)) * eval_psi(s2, pts), -1)))
    return OverlapReport(sep >= rs, sep, rs, ip)


def fd_residual_check(spec: SingularSequenceSpec, points, h: float) -> float:
    """Max |(-i alpha.grad_FD + m beta - lam) psi - closed form| over points."""
    sp = SpectralPoint(complex(spec.lam), spec.m)
    err = 0.0
    for x in np.atleast_2d(points):
        fd = fd_dirac_apply(lambda y: eval_psi(spec, y), x, h, sp)
        err = max(err, float(np.linalg.norm(fd - eval_residual(spec, x))))
    return err


def residual_table_csv(lam: float, ns=(2, 4, 8, 16), *, m: float = 1.0, R: float = 1.0) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "psi_norm", "residual_norm", "ratio"])
    for n in ns:
        s = make_spec(lam, n, m=m, R=R)
        a, b = psi_norm(s), residual_norm(s)
        w.writerow([n, f"{a:.12g}", f"{b:.12g}", f"{b / a:.12g}"])
    return buf.getvalue()
