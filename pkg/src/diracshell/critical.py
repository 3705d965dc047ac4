"""Diagnostics for the critical strengths eta = +-2.

* compactness of ``D(lam)^2 - 1/4`` through the decay of its singular values,
* the weakly singular anticommutator ``A_cal = A_nu D(0) + D(0) A_nu`` and the
  factorisation ``D(0)^2 - 1/4 = D(0) A_nu A_cal``,
* smoothing of ``A_cal`` on a flat face (it vanishes identically there),
* near-kernel counts of ``I +- 2 D(0)``, the discrete witness of essential
  spectrum at 0 for surfaces with a flat part.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .layer import (anticomm_operator, assemble_M, band_projector, identity_operator,
                    normal_operator, scaled, unscaled)
from .operators import DiscreteOperator
from .surface import SurfaceMesh

__all__ = [
    "DecayProfile", "compactness_profile", "operator_profile", "anticommutator_matrix",
    "consistency_residual", "factorization_residual", "conjugation_residual",
    "flat_block_norm", "flat_smoothing_test", "SmoothingReport", "near_kernel_count",
    "profiles_to_csv", "tail_index",
]


def tail_index(N: int) -> int:
    """1-based index ``ceil(N/2)`` with ``N`` the number of panels."""
    return int(np.ceil(N / 2))


@dataclass
class DecayProfile:
    values: np.ndarray
    level: int
    tag: str
    N: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float))[::-1]
        if np.any(v < 0):
            raise ValueError("singular values must be nonnegative")
        self.values = v

    def tail_ratio(self, index: int | None = None) -> float:
        """``s_k / s_1`` with ``k = ceil(N/2)`` (N = panel count) unless given."""
        k = tail_index(self.N) if index is None else int(index)
        return float(self.values[k - 1] / self.values[0])


def compactness_profile(lam, mesh: SurfaceMesh, *, m: float = 1.0, **kw) -> DecayProfile:
    """Singular values of ``D(lam)^2 - 1/4``."""
    D = assemble_M(lam, mesh, m=m, **kw)
    I = identity_operator(mesh, D.layout)
    return DecayProfile((D @ D - 0.25 * I).svdvals(), mesh.level, "D^2-1/4", mesh.N,
                        {"lambda": complex(lam).real if complex(lam).imag == 0 else str(complex(lam)),
                         "surface_id": mesh.surface_id})


def operator_profile(lam, mesh: SurfaceMesh, *, m: float = 1.0, **kw) -> DecayProfile:
    """Singular values of ``D(lam)`` itself (no decay expected)."""
    D = assemble_M(lam, mesh, m=m, **kw)
    return DecayProfile(D.svdvals(), mesh.level, "D", mesh.N, {"surface_id": mesh.surface_id})


def anticommutator_matrix(mesh: SurfaceMesh, m: float = 1.0, layout: str | None = None) -> DiscreteOperator:
    """Nystrom matrix of the weakly singular kernel of ``A_nu D(0) + D(0) A_nu``."""
    return anticomm_operator(mesh, m=m, layout=layout)


def _pieces(mesh, m, **kw):
    D = assemble_M(0.0, mesh, m=m, **kw)
    A = normal_operator(mesh, D.layout)
    I = identity_operator(mesh, D.layout)
    return D, A, I


def consistency_residual(mesh: SurfaceMesh, m: float = 1.0, **kw) -> float:
    """``||A_cal - (A_nu D + D A_nu)||_2 / ||A_cal||_2`` at lambda = 0."""
    D, A, _ = _pieces(mesh, m, **kw)
    Ac = anticomm_operator(mesh, m=m, layout=D.layout)
    return (Ac - (A @ D + D @ A)).norm2() / Ac.norm2()


def factorization_residual(mesh: SurfaceMesh, m: float = 1.0, **kw) -> float:
    """``||(D^2 - 1/4) - D A_nu A_cal||_2`` at lambda = 0."""
    D, A, I = _pieces(mesh, m, **kw)
    Ac = anticomm_operator(mesh, m=m, layout=D.layout)
    return ((D @ D - 0.25 * I) - D @ A @ Ac).norm2()


def conjugation_residual(mesh: SurfaceMesh, m: float = 1.0, restrict: bool = False, **kw) -> float:
    """``||(I/2 + D)(2 A_nu D) - A_nu(-I/2 + D)||_2`` at lambda = 0.

    This is the matrix adjoint of ``-2 M A_nu (1/2 + M) = -(-1/2 + M) A_nu``;
    it maps the kernel of ``I - 2D`` onto that of ``I + 2D``.  With
    ``restrict`` the residual is taken on band-limited densities only.
    """
    D, A, I = _pieces(mesh, m, **kw)
    E = (0.5 * I + D) @ (2.0 * (A @ D)) - A @ (D - 0.5 * I)
    if not restrict:
        return E.norm2()
    P = band_projector(mesh, D.layout)
    return float(max(np.linalg.norm(P[j] @ E.data[j] @ P[j], 2) for j in range(len(P))))


def flat_block_norm(mesh: SurfaceMesh, m: float = 1.0) -> dict:
    """Largest entry of A_cal between panels of the same flat face, and overall."""
    if not mesh.flat.any():
        return {"flat_flat_max": None, "overall_max": None, "skipped": "no flat patch"}
    Ac = anticomm_operator(mesh, m=m, layout="dense").dense().reshape(mesh.N, 4, mesh.N, 4)
    mags = np.max(np.abs(Ac), axis=(1, 3))
    out = {"overall_max": float(mags.max())}
    worst = 0.0
    for sgn in (1.0, -1.0):
        face = mesh.flat & (np.sign(mesh.normals[:, 2]) == sgn)
        if face.any():
            worst = max(worst, float(mags[np.ix_(face, face)].max()))
    out["flat_flat_max"] = worst
    return out


@dataclass
class SmoothingReport:
    skipped: str | None
    ratio: float | None = None
    seminorm_phi: float | None = None
    seminorm_Aphi: float | None = None
    n_panels: int = 0


def _grid_seminorm(mesh, vals, mask):
    """Discrete H^1 surrogate: differences of neighbours along rings and meridians, over distance."""
    nt, nph = mesh.n_theta, mesh.n_phi
    V = mesh.mesh_to_grid(vals).reshape(nt, nph, 4)
    X = mesh.mesh_to_grid(np.asarray(mesh.points)).reshape(nt, nph, 3)
    W = mesh.mesh_to_grid(np.asarray(mesh.weights)).reshape(nt, nph)
    M = mesh.mesh_to_grid(mask).reshape(nt, nph)
    tot = 0.0
    # azimuthal neighbours (periodic)
    dv = V - np.roll(V, -1, axis=1)
    dx = np.linalg.norm(X - np.roll(X, -1, axis=1), axis=-1)
    mm = M & np.roll(M, -1, axis=1)
    tot += np.sum((W * np.sum(np.abs(dv) ** 2, -1) / dx ** 2)[mm])
    # meridian neighbours
    dv = V[1:] - V[:-1]
    dx = np.linalg.norm(X[1:] - X[:-1], axis=-1)
    mm = M[1:] & M[:-1]
    tot += np.sum((0.5 * (W[1:] + W[:-1]) * np.sum(np.abs(dv) ** 2, -1) / dx ** 2)[mm])
    return float(np.sqrt(tot))


def flat_smoothing_test(mesh: SurfaceMesh, *, seed: int = 0, m: float = 1.0, margin: float = 0.2,
                        phi=None) -> SmoothingReport:
    """Seminorm of ``A_cal phi`` over that of a rough ``phi`` on an interior flat subpatch.

    The subpatch is the part of the top face at distance ``margin * a`` from its
    edge.  A panelwise random unit-variance density is used unless ``phi`` is given.
    """
    if not mesh.flat.any() or mesh.spec is None or mesh.spec.kind != "coin":
        return SmoothingReport(skipped="surface has no flat patch")
    rng = np.random.default_rng(seed)
    if phi is None:
        phi = (rng.standard_normal((mesh.N, 4)) + 1j * rng.standard_normal((mesh.N, 4))) / np.sqrt(2)
    phi = np.asarray(phi, dtype=complex).reshape(mesh.N, 4)
    Ac = anticomm_operator(mesh, m=m)
    Aphi = unscaled(mesh, Ac.apply(scaled(mesh, phi)))
    a, d = mesh.spec.a, mesh.spec.delta
    rho = np.hypot(mesh.points[:, 0], mesh.points[:, 1])
    sub = mesh.flat & (mesh.normals[:, 2] > 0) & (rho < (a - d) * (1 - margin))
    s_phi = _grid_seminorm(mesh, phi, sub)
    s_A = _grid_seminorm(mesh, Aphi, sub)
    return SmoothingReport(None, s_A / s_phi if s_phi > 0 else 0.0, s_phi, s_A, int(sub.sum()))


def near_kernel_count(sign: int, mesh: SurfaceMesh, epsilon: float | None = None, *, lam: float = 0.0,
                      m: float = 1.0, **kw) -> int:
    """Number of singular values of ``I + 2 sign D(lam)`` below ``epsilon``.

    ``epsilon`` defaults to the bs-solver threshold of the mesh's level.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if epsilon is None:
        from .bs import threshold

        epsilon = threshold(mesh, m=m)
    D = assemble_M(lam, mesh, m=m, **kw)
    s = (identity_operator(mesh, D.layout) + (2.0 * sign) * D).svdvals()
    return int(np.sum(s < epsilon))


def profiles_to_csv(profiles: list[DecayProfile]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "singular_value", "level", "tag", "N"])
    for p in profiles:
        for i, v in enumerate(p.values, start=1):
            w.writerow([i, f"{v:.12g}", p.level, p.tag, p.N])
    return buf.getvalue()
