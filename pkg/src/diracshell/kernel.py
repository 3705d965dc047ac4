"""Free Dirac resolvent kernel, its branch rule and the anticommutator kernel.

The free kernel is split as

    G_lam(x) = (lam + m beta) g(r) + i (alpha . x) h(r),
    g(r) = exp(i kappa r) / (4 pi r),
    h(r) = (1 - i kappa r) exp(i kappa r) / (4 pi r^3),

which is how the assembly code consumes it (four scalar channels per pair of
points instead of a 4x4 block).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import ALPHA, BETA, I4, alpha_dot_many

__all__ = [
    "SpectralPoint", "branch_sqrt", "green_scalars", "green_kernel",
    "green_kernel_many", "pv_part", "weak_part", "kernel_pde_residual",
    "anticomm_kernel", "anticomm_kernel_many", "fd_dirac_apply",
]


def branch_sqrt(lam: complex, m: float = 1.0) -> complex:
    """kappa = sqrt(lam^2 - m^2) with Im kappa > 0 off the bands.

    On the bands (real ``|lam| >= m``) the boundary value ``kappa >= 0`` is
    returned.
    """
    lam = complex(lam)
    z = lam * lam - m * m
    if lam.imag == 0.0 and abs(lam.real) >= m:
        return complex(np.sqrt(max(z.real, 0.0)), 0.0)
    k = complex(np.sqrt(z))
    if k.imag < 0 or (k.imag == 0 and k.real < 0):
        k = -k
    return k


@dataclass(frozen=True)
class SpectralPoint:
    """A spectral parameter together with its branch value kappa."""

    lam: complex
    m: float = 1.0
    kappa: complex = field(init=False)

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("mass must be positive")
        object.__setattr__(self, "lam", complex(self.lam))
        object.__setattr__(self, "kappa", branch_sqrt(self.lam, self.m))

    @property
    def on_band(self) -> bool:
        return self.lam.imag == 0.0 and abs(self.lam.real) >= self.m

    @property
    def in_gap(self) -> bool:
        return self.lam.imag == 0.0 and abs(self.lam.real) < self.m

    def conj(self) -> "SpectralPoint":
        return SpectralPoint(self.lam.conjugate(), self.m)

    def require_off_band(self):
        if self.on_band:
            raise ValueError(
                f"lambda={self.lam} lies on the spectrum (-inf,-m] U [m,inf) of the free operator"
            )
        return self


def _as_point(lam, m=1.0) -> SpectralPoint:
    return lam if isinstance(lam, SpectralPoint) else SpectralPoint(lam, m)


def green_scalars(kappa: complex, r):
    """Return ``(g, h)`` evaluated at distances ``r`` (array)."""
    r = np.asarray(r, dtype=float)
    e = np.exp(1j * kappa * r) / (4.0 * np.pi * r)
    return e, (1.0 - 1j * kappa * r) * e / (r * r)


def green_kernel_many(sp: SpectralPoint, x) -> np.ndarray:
    """G_lam at an array of nonzero points, shape (..., 3) -> (..., 4, 4)."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise ValueError("the kernel is singular at x = 0")
    g, h = green_scalars(sp.kappa, r)
    scal = sp.lam * I4 + sp.m * BETA
    return g[..., None, None] * scal + 1j * h[..., None, None] * alpha_dot_many(x)


def green_kernel(lam, x, m: float = 1.0) -> np.ndarray:
    """G_lam(x) for a single point ``x != 0``, written out as a 4x4 matrix."""
    sp = _as_point(lam, m)
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ValueError("x must be a 3-vector")
    return green_kernel_many(sp, x[None])[0]


def pv_part(x) -> np.ndarray:
    """Odd, strongly singular part i (alpha . x) / (4 pi |x|^3), shape (..., 4, 4)."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    return 1j * alpha_dot_many(x) / (4.0 * np.pi * r[..., None, None] ** 3)


def weak_part(lam, x, m: float = 1.0) -> np.ndarray:
    """Remainder G_lam - P, which is O(1/|x|) near the origin."""
    sp = _as_point(lam, m)
    return green_kernel_many(sp, x) - pv_part(x)


def fd_dirac_apply(fun, x, h: float, sp: SpectralPoint) -> np.ndarray:
    """(-i alpha.grad + m beta - lam) applied to ``fun`` at ``x`` with central differences.

    ``fun`` maps a 3-vector to an array whose leading axis is the spinor index
    (a 4-vector or a 4x4 matrix).
    """
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x))
    out = (sp.m * BETA) @ f0.reshape(4, -1) - sp.lam * f0.reshape(4, -1)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        d = (np.asarray(fun(x + e)) - np.asarray(fun(x - e))).reshape(4, -1) / (2 * h)
        out = out - 1j * ALPHA[k] @ d
    return out.reshape(f0.shape)


def kernel_pde_residual(lam, x, h: float, m: float = 1.0) -> float:
    """Largest column norm of (-i alpha.grad_FD + m beta - lam) G_lam at ``x``."""
    sp = _as_point(lam, m)
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(x) <= 10 * h:
        raise ValueError("need |x| > 10 h")
    r = fd_dirac_apply(lambda y: green_kernel(sp, y), x, h, sp)
    return float(np.max(np.linalg.norm(r, axis=0)))


def anticomm_kernel_many(x, z, nu_x, nu_z, m: float = 1.0) -> np.ndarray:
    """Kernel K(x, z) of alpha.nu M(0) + M(0) alpha.nu, vectorised over leading axes."""
    x, z = np.asarray(x, float), np.asarray(z, float)
    nu_x, nu_z = np.asarray(nu_x, float), np.asarray(nu_z, float)
    v = x - z
    r = np.linalg.norm(v, axis=-1)
    if np.any(r == 0):
        raise ValueError("K(x, z) is undefined for x = z")
    g0 = green_kernel_many(SpectralPoint(0.0, m), v)
    out = g0 @ alpha_dot_many(nu_z - nu_x)
    scal = 1j * np.exp(-m * r) / (2 * np.pi * r ** 3) * (1 + m * r) * np.sum(nu_x * v, axis=-1)
    return out + scal[..., None, None] * I4


def anticomm_kernel(x, z, nu_x, nu_z, m: float = 1.0) -> np.ndarray:
    return anticomm_kernel_many(
        np.asarray(x, float)[None], np.asarray(z, float)[None],
        np.asarray(nu_x, float)[None], np.asarray(nu_z, float)[None], m,
    )[0]
