"""Dirac matrices in the standard (Dirac) representation and small spinor helpers.

Every matrix is a dense ``(4, 4)`` complex128 array.  The module-level constants
are read-only so they can be shared freely.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "I2", "I4", "SIGMA", "ALPHA", "BETA", "SPIN3",
    "PhysicalParams", "dirac_matrices", "alpha_dot", "alpha_dot_many",
    "check_anticommutation", "band_projector_factor", "spin_rotation_z",
    "spinor_norm", "basis_spinor",
]

I2 = np.eye(2, dtype=complex)
I4 = np.eye(4, dtype=complex)

SIGMA = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


def _offdiag(s):
    z = np.zeros((2, 2), dtype=complex)
    return np.block([[z, s], [s, z]])


ALPHA = np.stack([_offdiag(s) for s in SIGMA])
BETA = np.block([[I2, np.zeros((2, 2))], [np.zeros((2, 2)), -I2]]).astype(complex)
# Spin matrix diag(sigma_3, sigma_3); generates rotations about the z axis.
SPIN3 = np.diag([1.0, -1.0, 1.0, -1.0]).astype(complex)

for _a in (I2, I4, SIGMA, ALPHA, BETA, SPIN3):
    _a.setflags(write=False)


@dataclass(frozen=True)
class PhysicalParams:
    """Mass ``m`` (units with c = hbar = 1) and shell strength ``eta``."""

    m: float = 1.0
    eta: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.m) and self.m > 0):
            raise ValueError(f"mass must be positive, got m={self.m!r}")
        if not np.isfinite(self.eta):
            raise ValueError(f"eta must be finite, got {self.eta!r}")


def dirac_matrices():
    """Return copies of ``(alpha1, alpha2, alpha3, beta)``."""
    return ALPHA[0].copy(), ALPHA[1].copy(), ALPHA[2].copy(), BETA.copy()


def alpha_dot(x) -> np.ndarray:
    """alpha . x for a single real 3-vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ValueError("alpha_dot expects a 3-vector")
    return np.tensordot(x, ALPHA, axes=(0, 0))


def alpha_dot_many(x) -> np.ndarray:
    """Vectorised alpha . x for an array of shape (..., 3); returns (..., 4, 4)."""
    x = np.asarray(x, dtype=float)
    return np.tensordot(x, ALPHA, axes=(-1, 0))


def check_anticommutation() -> float:
    """Largest Frobenius residual of the Clifford relations among alpha_j and beta."""
    res = 0.0
    for j in range(3):
        for k in range(3):
            r = ALPHA[j] @ ALPHA[k] + ALPHA[k] @ ALPHA[j] - 2.0 * (j == k) * I4
            res = max(res, np.linalg.norm(r))
        res = max(res, np.linalg.norm(ALPHA[j] @ BETA + BETA @ ALPHA[j]))
    res = max(res, np.linalg.norm(BETA @ BETA - I4))
    return float(res)


def band_projector_factor(lam: float, sign: int, m: float = 1.0) -> np.ndarray:
    """The factor ``kappa*alpha1 + m*beta + sign*lam`` for a band energy.

    ``kappa = sqrt(lam^2 - m^2) >= 0``.  Two factors of opposite sign multiply
    to zero because ``(kappa*alpha1 + m*beta)^2 = lam^2``.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    lam = complex(lam)
    if abs(lam.imag) > 0 or abs(lam.real) < m:
        raise ValueError(f"lambda={lam} is not a band point (|lambda| >= m required)")
    lam = lam.real
    kappa = np.sqrt(max(lam * lam - m * m, 0.0))
    return kappa * ALPHA[0] + m * BETA + sign * lam * I4


def spin_rotation_z(psi) -> np.ndarray:
    """Spinor representative U(psi) of the rotation by ``psi`` about e3.

    ``U G(x) U^H = G(R x)`` for the free kernel; ``U(2 pi) = -I``.  Accepts an
    array of angles and returns diagonals of shape (..., 4).
    """
    psi = np.asarray(psi, dtype=float)
    ph = np.exp(-0.5j * psi)[..., None]
    return np.where(np.array([True, False, True, False]), ph, np.conj(ph))


def spinor_norm(v) -> float:
    return float(np.linalg.norm(np.asarray(v, dtype=complex)))


def basis_spinor(k: int) -> np.ndarray:
    e = np.zeros(4, dtype=complex)
    e[k] = 1.0
    return e
