"""Birman-Schwinger gap scans and the Krein resolvent formula.

For a shell strength ``eta`` the point ``lam`` in the gap is an eigenvalue of
the shell operator exactly when ``(1/eta) I + D(lam)`` is singular.  For the
critical strengths ``eta = 2 s`` (``s = +-1``) the normalised matrix
``I + 2 s D(lam)`` is used instead.

For real ``lam`` in the gap ``D(lam)`` is Hermitian, its eigenvalues increase
with ``lam`` and ``eig(B) = 1/eta + eig(D)``.  A scan therefore computes the
spectrum of ``D`` once per grid point and reads off ``s_min`` for any number of
strengths; a root shows up as a change in the number of negative eigenvalues
of ``B`` (a bracket), which is then refined by root finding on the eigenvalue
that crosses zero.  Local minima of ``s_min`` below the threshold that carry no
sign change are refined by golden-section search as well.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import erfcx

from .algebra import ALPHA, BETA, I4, alpha_dot_many
from .kernel import SpectralPoint, green_kernel_many
from .layer import (BoundaryDensity, PolarRule, apply_gamma, assemble_M, band_projector,
                    default_layout, identity_operator, normal_operator, numerical_traces,
                    scaled, unscaled)
from .operators import DiscreteOperator
from .surface import SurfaceMesh, SurfaceSpec, build_mesh

__all__ = [
    "NumericalRefusal", "BSMatrix", "bs_matrix", "identity_floor", "threshold",
    "gap_spectra", "GapRoot", "GapScanResult", "scan_gap", "scan_many", "critical_scan",
    "default_grid", "GaussianSource", "free_resolvent", "free_resolvent_quadrature",
    "KreinResult", "krein_resolvent_apply", "krein_jump_residual", "fd_pde_residual",
]


class NumericalRefusal(RuntimeError):
    """Raised when a computation is refused because a matrix is numerically singular."""


def _critical_sign(eta: float):
    if eta == 2.0:
        return 1
    if eta == -2.0:
        return -1
    return None


# ---------------------------------------------------------------------------
# Birman-Schwinger matrices
# ---------------------------------------------------------------------------

@dataclass
class BSMatrix:
    op: DiscreteOperator
    eta: float
    lam: complex
    critical: int | None = None  # +-1 for the normalised critical form I +- 2D
    mesh_id: str = ""

    @property
    def tag(self) -> str:
        if self.critical is not None:
            return f"I{'+' if self.critical > 0 else '-'}2D"
        return "1/eta+D"

    def smin(self) -> float:
        return float(self.op.svdvals()[-1])

    def hermitian_defect(self) -> float:
        return self.op.hermitian_defect()


def bs_matrix(eta: float, lam, mesh: SurfaceMesh, *, m: float = 1.0, scheme: str = "polar",
              normalise_critical: bool = True, **kw) -> BSMatrix:
    """``(1/eta) I + D(lam)``; for ``eta = +-2`` the normalised ``I +- 2 D(lam)`` by default."""
    eta = float(eta)
    if eta == 0.0:
        raise ValueError("eta = 0 is the free operator (no shell); nothing to solve")
    D = assemble_M(lam, mesh, m=m, scheme=scheme, **kw)
    I = identity_operator(mesh, D.layout)
    sgn = _critical_sign(eta)
    if sgn is not None and normalise_critical:
        op = I + (2.0 * sgn) * D
        return BSMatrix(op, eta, complex(lam), sgn, mesh.surface_id)
    return BSMatrix(D + (1.0 / eta) * I, eta, complex(lam), None, mesh.surface_id)


@lru_cache(maxsize=16)
def _identity_floor_cached(n: int, level: int, m: float, scheme: str, rule: PolarRule) -> float:
    mesh = build_mesh(SurfaceSpec("sphere", R=1.0, n=n), level)
    D = assemble_M(0.0, mesh, m=m, scheme=scheme, rule=rule)
    A = normal_operator(mesh, D.layout)
    E = ((-4.0) * (D @ A @ D @ A) - identity_operator(mesh, D.layout)).data
    P = band_projector(mesh, D.layout)
    return float(max(np.linalg.norm(P[j] @ E[j] @ P[j], 2) for j in range(len(P))))


def identity_floor(level: int, *, n: int = 4, m: float = 1.0, scheme: str = "polar",
                   rule: PolarRule = PolarRule()) -> float:
    """Residual of ``-4 (D(0) A_nu)^2 = I`` on the unit sphere, restricted to resolved densities.

    The restriction is the orthogonal projector onto band-limited densities
    (:func:`band_projector`); the full 2-norm is dominated by grid-scale modes
    and stays O(1) under refinement.
    """
    return _identity_floor_cached(int(n), int(level), float(m), scheme, rule)


def threshold(mesh: SurfaceMesh, *, m: float = 1.0, factor: float = 10.0, scheme: str = "polar",
              rule: PolarRule = PolarRule()) -> float:
    """Numerical-zero threshold: ``factor`` times the identity floor at the mesh's level."""
    n = mesh.spec.n if mesh.spec is not None else 4
    return factor * identity_floor(mesh.level, n=n, m=m, scheme=scheme, rule=rule)


# ---------------------------------------------------------------------------
# gap scans
# ---------------------------------------------------------------------------

def default_grid(m: float = 1.0, n: int = 200, edge: float = 0.95) -> np.ndarray:
    return np.linspace(-edge * m, edge * m, n)


def gap_spectra(mesh: SurfaceMesh, grid, *, m: float = 1.0, scheme: str = "polar", **kw) -> np.ndarray:
    """Sorted eigenvalues of the Hermitian D(lam) at every grid point, shape (len(grid), 4N)."""
    grid = np.asarray(grid, dtype=float)
    if np.any(np.abs(grid) >= m):
        raise ValueError("grid must lie inside the gap (-m, m)")
    return np.stack([assemble_M(float(x), mesh, m=m, scheme=scheme, **kw).eigvalsh() for x in grid])


RESOLUTION_CUTOFF = 0.5


@dataclass
class GapRoot:
    lam: float
    bracket: tuple[float, float]
    smin: float
    multiplicity: int
    near_zero: int
    kind: str = "crossing"  # "crossing" (sign change) or "minimum" (touching, golden section)
    refined: bool = True
    unresolved_fraction: float = 0.0  # energy of the null vectors outside the band-limited subspace

    @property
    def resolved(self) -> bool:
        return self.unresolved_fraction < RESOLUTION_CUTOFF


@dataclass
class GapScanResult:
    eta: float
    samples: list[tuple[float, float]]
    eigenvalues: list[GapRoot]
    tau: float
    critical: int | None = None
    meta: dict = field(default_factory=dict)
    unresolved: list[GapRoot] = field(default_factory=list)

    def roots(self) -> np.ndarray:
        return np.array([r.lam for r in self.eigenvalues])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda", "s_min", "eta", "tau"])
        for lam, s in self.samples:
            w.writerow([f"{lam:.12g}", f"{s:.12g}", f"{self.eta:.12g}", f"{self.tau:.6g}"])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "eta": self.eta, "critical": self.critical, "tau": self.tau,
            "eigenvalues": [asdict(r) for r in self.eigenvalues], "meta": self.meta,
            "unresolved_crossings": [asdict(r) for r in self.unresolved],
            "n_samples": len(self.samples),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _bs_eigs(eigD, eta, crit):
    if crit is not None:
        return 1.0 + 2.0 * crit * eigD
    return 1.0 / eta + eigD


def _scan(eta, crit, mesh, grid, *, m, scheme, tau, spectra, dlam, merge_tol, kw):
    grid = np.asarray(grid, dtype=float)
    if spectra is None:
        spectra = gap_spectra(mesh, grid, m=m, scheme=scheme, **kw)
    if tau is None:
        tau = threshold(mesh, m=m, scheme=scheme)
    E = _bs_eigs(spectra, eta, crit)
    smin = np.min(np.abs(E), axis=1)
    neg = np.sum(E < 0, axis=1)

    def eig_at(lam):
        d = assemble_M(float(lam), mesh, m=m, scheme=scheme, **kw).eigvalsh()
        return np.sort(_bs_eigs(d, eta, crit))

    P = band_projector(mesh) if mesh.structured else None

    def tail_fraction(lam, k):
        """Largest out-of-band energy among the k eigenvectors of B(lam) nearest to zero."""
        if P is None:
            return 0.0
        D = assemble_M(float(lam), mesh, m=m, scheme=scheme, **kw).data
        cand = []
        for j in range(len(D)):
            w, V = np.linalg.eigh(D[j])
            b = np.abs(_bs_eigs(w, eta, crit))
            for i in np.argsort(b)[:k]:
                cand.append((b[i], j, V[:, i]))
        cand.sort(key=lambda t: t[0])
        return float(max(np.linalg.norm(v - P[j] @ v) for _, j, v in cand[:k]))

    found = []
    for i in range(len(grid) - 1):
        a, b = grid[i], grid[i + 1]
        if neg[i] == neg[i + 1]:
            continue
        lo, hi = sorted((int(neg[i]), int(neg[i + 1])))
        for p in range(lo, hi):
            # sorted eigenvalue number p changes sign on [a, b]
            lam = brentq(lambda x: eig_at(x)[p], a, b, xtol=dlam, rtol=4 * np.finfo(float).eps)
            found.append((lam, (float(a), float(b)), "crossing", True))
    # touching minima below tau without a sign change
    for i in range(len(grid)):
        left = smin[i - 1] if i > 0 else np.inf
        right = smin[i + 1] if i + 1 < len(grid) else np.inf
        if not (smin[i] < tau and smin[i] <= left and smin[i] <= right):
            continue
        lo_i, hi_i = max(i - 1, 0), min(i + 1, len(grid) - 1)
        if any(lo_i <= j < hi_i and neg[j] != neg[j + 1] for j in range(lo_i, hi_i)):
            continue
        at_edge = i == 0 or i == len(grid) - 1
        if at_edge:
            found.append((float(grid[i]), (float(grid[lo_i]), float(grid[hi_i])), "minimum", False))
            continue
        res = minimize_scalar(lambda x: np.min(np.abs(eig_at(x))), bracket=(grid[lo_i], grid[i], grid[hi_i]),
                              bounds=(grid[lo_i], grid[hi_i]), method="bounded",
                              options={"xatol": dlam})
        if res.fun < tau:
            found.append((float(res.x), (float(grid[lo_i]), float(grid[hi_i])), "minimum", True))
    found.sort(key=lambda t: t[0])
    roots: list[GapRoot] = []
    for lam, br, kind, ok in found:
        if roots and abs(lam - roots[-1].lam) <= merge_tol and kind == roots[-1].kind:
            roots[-1].multiplicity += 1
            continue
        e = np.abs(eig_at(lam))
        roots.append(GapRoot(float(lam), br, float(e.min()), 1, int(np.sum(e < 3 * tau)), kind, ok))
    for r in roots:
        r.unresolved_fraction = tail_fraction(r.lam, r.multiplicity)
    resolved = [r for r in roots if r.resolved]
    unresolved = [r for r in roots if not r.resolved]
    samples = [(float(x), float(s)) for x, s in zip(grid, smin)]
    meta = {"surface_id": mesh.surface_id, "level": mesh.level, "N": mesh.N, "m": m,
            "scheme": scheme, "tolerance": dlam}
    return GapScanResult(float(eta), samples, resolved, float(tau), crit, meta, unresolved)


def scan_gap(eta: float, mesh: SurfaceMesh, grid=None, *, m: float = 1.0, scheme: str = "polar",
             tau: float | None = None, spectra=None, dlam: float | None = None,
             merge_tol: float = 1e-6, **kw) -> GapScanResult:
    """Gap eigenvalues of the shell operator with strength ``eta`` (non-critical form)."""
    eta = float(eta)
    if eta == 0.0:
        raise ValueError("eta = 0 is the free operator (no shell); nothing to scan")
    grid = default_grid(m) if grid is None else grid
    dlam = 1e-6 * m if dlam is None else dlam
    return _scan(eta, None, mesh, grid, m=m, scheme=scheme, tau=tau, spectra=spectra, dlam=dlam,
                 merge_tol=merge_tol * m, kw=kw)


def scan_many(etas, mesh: SurfaceMesh, grid=None, *, m: float = 1.0, scheme: str = "polar",
              tau: float | None = None, **kw) -> dict[float, GapScanResult]:
    """Several strengths from one pass of eigenvalue computations."""
    grid = default_grid(m) if grid is None else np.asarray(grid, dtype=float)
    spectra = gap_spectra(mesh, grid, m=m, scheme=scheme, **kw)
    return {float(e): scan_gap(e, mesh, grid, m=m, scheme=scheme, tau=tau, spectra=spectra, **kw)
            for e in etas}


def critical_scan(sign: int, mesh: SurfaceMesh, grid=None, *, m: float = 1.0, scheme: str = "polar",
                  tau: float | None = None, spectra=None, dlam: float | None = None,
                  merge_tol: float = 1e-6, **kw) -> GapScanResult:
    """Same machinery on ``I + 2 sign D(lam)`` (strength ``eta = 2 sign``)."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    grid = default_grid(m) if grid is None else grid
    dlam = 1e-6 * m if dlam is None else dlam
    return _scan(2.0 * sign, sign, mesh, grid, m=m, scheme=scheme, tau=tau, spectra=spectra,
                 dlam=dlam, merge_tol=merge_tol * m, kw=kw)


# ---------------------------------------------------------------------------
# free resolvent of a Gaussian source
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianSource:
    """g(y) = zeta exp(-|y - center|^2 / (2 s^2))."""

    center: tuple = (0.0, 0.0, 0.0)
    width: float = 0.15
    zeta: tuple = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("width must be positive")

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        r2 = np.sum((y - np.asarray(self.center)) ** 2, axis=-1)
        return np.exp(-r2 / (2 * self.width ** 2))[..., None] * np.asarray(self.zeta, dtype=complex)

    @property
    def is_zero(self) -> bool:
        return not np.any(np.asarray(self.zeta))


def _radial_potential(q, s, r):
    """Phi = (e^{-q|.|}/(4 pi |.|)) * exp(-|.|^2/(2 s^2)) at distance r, and dPhi/dr.

    ``q = -i kappa`` has positive real part.  With
    ``E1,2 = exp(q^2 s^2/2 -+ q r) erfc((q s^2 -+ r)/(s sqrt 2))`` one has
    ``Phi = I/(2 q r)`` where ``I = q s^3 sqrt(pi/2) (E1 - E2)``.  Writing the
    E's through erfcx keeps the large exponentials from ever being formed.
    """
    r = np.asarray(r, dtype=float)
    rr = np.maximum(r, 1e-6 * s)  # Phi is smooth at 0; the floor only avoids 0/0
    g0 = np.exp(-rr * rr / (2 * s * s))
    z1 = (q * s * s - rr) / (s * np.sqrt(2.0))
    # for Re z1 < 0 use erfcx(z) = 2 exp(z^2) - erfcx(-z); the exponents combine to
    # q^2 s^2/2 - q r, so neither an underflowing g0 nor an overflowing erfcx is formed
    neg = np.real(z1) < 0
    E1 = np.where(neg, 2 * np.exp(q * q * s * s / 2 - q * rr) - g0 * erfcx(np.where(neg, -z1, 0)),
                  g0 * erfcx(np.where(neg, 0, z1)))
    E2 = g0 * erfcx((q * s * s + rr) / (s * np.sqrt(2.0)))
    c = np.sqrt(np.pi / 2.0) * s ** 3
    I = q * c * (E1 - E2)
    dI = q * (2 * s * s * g0 - q * c * (E1 + E2))
    phi = I / (2 * q * rr)
    dphi = dI / (2 * q * rr) - I / (2 * q * rr * rr)
    return phi, np.where(r < 1e-6 * s, 0.0, dphi)


def free_resolvent(lam, source: GaussianSource, points, *, m: float = 1.0) -> np.ndarray:
    """(A_0 - lam)^{-1} g at points, in closed form: (-i alpha.grad + m beta + lam)(Phi zeta)."""
    sp = lam if isinstance(lam, SpectralPoint) else SpectralPoint(lam, m)
    sp.require_off_band()
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    zeta = np.asarray(source.zeta, dtype=complex)
    if source.is_zero:
        return np.zeros((len(pts), 4), dtype=complex)
    v = pts - np.asarray(source.center)
    r = np.linalg.norm(v, axis=-1)
    q = -1j * sp.kappa
    phi, dphi = _radial_potential(q, source.width, r)
    rhat = np.where(r[:, None] > 0, v / np.maximum(r, 1e-300)[:, None], 0.0)
    scal = (sp.lam * I4 + sp.m * BETA) @ zeta
    grad = (-1j * alpha_dot_many(rhat)) @ zeta
    return phi[:, None] * scal[None] + dphi[:, None] * grad


def free_resolvent_quadrature(lam, source: GaussianSource, point, *, m: float = 1.0,
                              n_r: int = 80, n_t: int | None = None, n_p: int | None = None,
                              r_max: float | None = None) -> np.ndarray:
    """Cross-check of :func:`free_resolvent` by direct convolution around the target point.

    Spherical coordinates centred at the target remove the 1/r^2 singularity of
    the kernel; Gauss-Legendre in r and cos(theta), trapezoid in phi.
    """
    sp = lam if isinstance(lam, SpectralPoint) else SpectralPoint(lam, m)
    x = np.asarray(point, dtype=float)
    c = np.asarray(source.center)
    s = source.width
    r_max = r_max or (np.linalg.norm(x - c) + 9 * s)
    xr, wr = np.polynomial.legendre.leggauss(n_r)
    # split the radial integral at the distance of the centre for accuracy
    d = np.linalg.norm(x - c)
    n_ang = int(40 * max(1.0, d / (3 * s)))
    n_t = n_t or n_ang
    n_p = n_p or n_ang
    pieces = [(0.0, max(d - 5 * s, 0.0)), (max(d - 5 * s, 0.0), min(d + 5 * s, r_max)), (min(d + 5 * s, r_max), r_max)]
    mu, wmu = np.polynomial.legendre.leggauss(n_t)
    ph = 2 * np.pi * np.arange(n_p) / n_p
    st = np.sqrt(1 - mu * mu)
    om = np.stack([np.outer(st, np.cos(ph)), np.outer(st, np.sin(ph)), np.outer(mu, np.ones(n_p))], -1).reshape(-1, 3)
    wom = np.outer(wmu, np.full(n_p, 2 * np.pi / n_p)).reshape(-1)
    total = np.zeros(4, dtype=complex)
    for a, b in pieces:
        if b <= a:
            continue
        rr = a + (xr + 1) * (b - a) / 2
        wrr = wr * (b - a) / 2
        y = x[None, None, :] - rr[:, None, None] * om[None, :, :]
        G = green_kernel_many(sp, (x[None, None, :] - y).reshape(-1, 3)).reshape(len(rr), len(om), 4, 4)
        g = source(y)
        w = (wrr * rr * rr)[:, None] * wom[None, :]
        total += np.einsum("pq,pqij,pqj->i", w, G, g)
    return total


# ---------------------------------------------------------------------------
# Krein resolvent
# ---------------------------------------------------------------------------

@dataclass
class KreinResult:
    points: np.ndarray
    values: np.ndarray
    density: BoundaryDensity
    smin: float
    eta: float
    lam: complex
    meta: dict = field(default_factory=dict)
    evaluator: object = field(default=None, repr=False)

    def field(self, x) -> np.ndarray:
        """Evaluate the resolvent at new points (uses the solved boundary density)."""
        return self.evaluator(x)


def krein_resolvent_apply(eta: float, lam, source: GaussianSource, mesh: SurfaceMesh, points, *,
                          m: float = 1.0, tau: float | None = None, upsample: int = 1,
                          scheme: str = "polar", **kw) -> KreinResult:
    """(A_eta - lam)^{-1} g at ``points`` via the Krein formula.

    ``u = u0 - gamma(lam) (1/eta + D(lam))^{-1} gamma(conj lam)^* g`` with
    ``u0 = (A_0 - lam)^{-1} g``; for ``eta = 2 s`` the critical form
    ``u = u0 - s gamma(lam) (I + 2 s D(lam))^{-1} 2 gamma(conj lam)^* g`` (same thing).
    ``gamma(conj lam)^* g`` is the free resolvent restricted to the surface.
    """
    eta = float(eta)
    sp = SpectralPoint(lam, m).require_off_band()
    B = bs_matrix(eta, sp.lam, mesh, m=m, scheme=scheme, **kw)
    if tau is None:
        tau = threshold(mesh, m=m, scheme=scheme)
    smin = B.smin()
    if smin < tau:
        raise NumericalRefusal(
            f"Birman-Schwinger matrix is numerically singular at lambda={sp.lam}: s_min={smin:.3e} < tau={tau:.3e}")
    rhs = free_resolvent(sp, source, mesh.points, m=m)
    c = B.op.solve(scaled(mesh, rhs))
    if B.critical is not None:
        c = 2.0 * B.critical * c  # (s/2 + D)^{-1} = 2 s (I + 2 s D)^{-1}
    phi = BoundaryDensity(unscaled(mesh, c), mesh)
    pts = np.atleast_2d(np.asarray(points, dtype=float))

    def _eval(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return free_resolvent(sp, source, x, m=m) - apply_gamma(sp, phi, x, upsample=upsample).values

    return KreinResult(pts, _eval(pts), phi, smin, eta, sp.lam,
                       {"surface_id": mesh.surface_id, "level": mesh.level, "N": mesh.N, "tau": tau,
                        "form": B.tag, "m": m}, _eval)


def krein_jump_residual(res: KreinResult, *, offsets=(0, 1, 2, 3), c: float = 4.0) -> dict:
    """Relative residual of eta/2 (u+ + u-) + i alpha.nu (u+ - u-) on the surface."""
    mesh = res.density.mesh
    plus, minus, flags = numerical_traces(res.field, mesh, offsets=offsets, c=c)
    up, um = plus.values, minus.values
    AN = alpha_dot_many(mesh.normals)
    r = 0.5 * res.eta * (up + um) + 1j * np.einsum("nij,nj->ni", AN, up - um)
    w = mesh.weights[:, None]
    num = np.sqrt(np.sum(w * np.abs(r) ** 2))
    den = np.sqrt(np.sum(w * (np.abs(up) ** 2 + np.abs(um) ** 2)))
    return {"residual": float(num / den) if den > 0 else 0.0, "abs": float(num),
            "flagged": int(flags.sum())}


def fd_pde_residual(res: KreinResult, source: GaussianSource, x, h: float) -> float:
    """|(-i alpha.grad_FD + m beta - lam) u - g| at one off-surface point."""
    x = np.asarray(x, dtype=float)
    sp = SpectralPoint(res.lam, res.meta.get("m", 1.0))
    pts = [x]
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        pts += [x + e, x - e]
    u = res.field(np.array(pts))
    out = (sp.m * BETA - sp.lam * I4) @ u[0]
    for k in range(3):
        out = out - 1j * ALPHA[k] @ ((u[1 + 2 * k] - u[2 + 2 * k]) / (2 * h))
    return float(np.linalg.norm(out - source(x[None])[0]))
