"""Single-layer map, its adjoint and the principal-value boundary operator M(lam).

Two assembly schemes are available.

``polar`` (default)
    For every target panel the sphere parametrisation is rotated so that the
    target sits at the pole, and the surface integral is done with a
    Gauss-Legendre x trapezoid rule in the rotated polar coordinates.  The
    Jacobian ``r^2 sin t'`` of that rule cancels the 1/r^2 singularity, and the
    even number of azimuthal nodes integrates the odd part to zero exactly,
    which is the principal value.  Panel values are carried to the rotated
    nodes by double-Fourier-sphere interpolation (cos / sin series in the
    polar angle matched to the parity of the azimuthal mode), which
    reproduces band-limited densities exactly.
``disk``
    Plain point-to-point Nystrom sum with the self panel replaced by an
    inscribed flat disk of equal area: the odd part drops out and the even
    remainder integrates in closed form to ``(lam + m beta)(e^{i kappa rho} - 1)/(2 i kappa)``.
    No curvature term.  Cheap, but the resulting matrix is only first-order
    accurate and is kept as the baseline.

In both schemes the matrix ``R(lam)`` on scaled values is symmetrised as
``D(lam) = (R(lam) + R(conj lam)^H) / 2``, which makes ``D(lam)^H = D(conj lam)``
hold exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .algebra import ALPHA, BETA, I4, alpha_dot_many
from .kernel import SpectralPoint, anticomm_kernel_many, green_kernel_many, green_scalars
from .operators import DiscreteOperator, rows_to_blocks
from .surface import SurfaceMesh

__all__ = [
    "PolarRule", "BoundaryDensity", "VolumeField", "assemble_M", "normal_operator",
    "identity_operator", "anticomm_operator", "apply_gamma", "apply_gamma_star",
    "numerical_traces", "scaled", "unscaled", "save_operator", "load_operator",
    "default_layout", "volume_grid", "band_projector", "upsampled_source",
]

SCHEMES = ("polar", "disk")


@dataclass(frozen=True)
class PolarRule:
    """Rotated-pole rule: ``n_theta + extra_theta`` polar nodes, ``phi_factor * n_phi`` azimuths."""

    extra_theta: int = 8
    phi_factor: int = 2

    def sizes(self, mesh: SurfaceMesh):
        return mesh.n_theta + self.extra_theta, self.phi_factor * mesh.n_phi


@dataclass
class BoundaryDensity:
    """Panel spinor values ``phi_i`` (not scaled by sqrt(w))."""

    values: np.ndarray
    mesh: SurfaceMesh

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex).reshape(-1, 4)
        if len(self.values) != self.mesh.N:
            raise ValueError("density length does not match the mesh")

    def l2(self) -> float:
        return float(np.sqrt(np.sum(self.mesh.weights[:, None] * np.abs(self.values) ** 2)))


@dataclass
class VolumeField:
    """Spinor values at off-surface points; ``too_close`` marks points nearer than ``d_min``."""

    points: np.ndarray
    values: np.ndarray
    too_close: np.ndarray | None = None


def scaled(mesh: SurfaceMesh, phi) -> np.ndarray:
    """Panel values (N, 4) -> scaled vector ``sqrt(w) phi`` of length 4N."""
    phi = np.asarray(phi, dtype=complex).reshape(mesh.N, 4)
    return (np.sqrt(mesh.weights)[:, None] * phi).reshape(-1)


def unscaled(mesh: SurfaceMesh, c) -> np.ndarray:
    c = np.asarray(c, dtype=complex).reshape(mesh.N, 4)
    return c / np.sqrt(mesh.weights)[:, None]


def default_layout(mesh: SurfaceMesh) -> str:
    return "fourier" if mesh.axisymmetric else "dense"


# ---------------------------------------------------------------------------
# double Fourier sphere interpolation
# ---------------------------------------------------------------------------

@lru_cache(maxsize=16)
def _dfs_theta_inverse(theta_key):
    th = np.asarray(theta_key)
    n = len(th)
    Ce = np.cos(np.outer(th, np.arange(n)))
    Co = np.sin(np.outer(th, np.arange(1, n + 1)))
    return np.linalg.inv(Ce), np.linalg.inv(Co)


def _phi_tables(n_phi: int):
    """Mode numbers and weights of the even / odd azimuthal interpolation kernels."""
    ms = np.arange(n_phi // 2 + 1)
    c = np.where((ms == 0) | (ms == n_phi // 2), 1.0, 2.0)
    even, odd = ms % 2 == 0, ms % 2 == 1
    return (ms[even], c[even]), (ms[odd], c[odd])


def dfs_interpolation(mesh: SurfaceMesh, tq, pq):
    """Factors ``(Le, Te, Lo, To)`` with value(tq, pq) = sum_ab (Le Te + Lo To)[k, a, b] F[a, b]."""
    th, ph = mesh.theta, mesh.phi
    n, nph = len(th), len(ph)
    Cei, Coi = _dfs_theta_inverse(tuple(th))
    Le = np.cos(np.outer(tq, np.arange(n))) @ Cei
    Lo = np.sin(np.outer(tq, np.arange(1, n + 1))) @ Coi
    (me, ce), (mo, co) = _phi_tables(nph)

    def kern(ms, cs):
        A = np.outer(pq, ms)
        B = np.outer(ms, ph)
        return ((np.cos(A) * cs) @ np.cos(B) + (np.sin(A) * cs) @ np.sin(B)) / nph

    return Le, kern(me, ce), Lo, kern(mo, co)


def _rotation(t, p):
    ct, st, cp, sp = np.cos(t), np.sin(t), np.cos(p), np.sin(p)
    return np.array([[cp * ct, -sp, cp * st], [sp * ct, cp, sp * st], [-st, 0.0, ct]])


@lru_cache(maxsize=8)
def _local_rule(ntp: int, nqp: int):
    x, wx = np.polynomial.legendre.leggauss(ntp)
    tp = (x + 1) * np.pi / 2
    wt = wx * np.pi / 2
    pp = 2 * np.pi * np.arange(nqp) / nqp
    TP, PP = np.meshgrid(tp, pp, indexing="ij")
    loc = np.stack([np.sin(TP) * np.cos(PP), np.sin(TP) * np.sin(PP), np.cos(TP)], -1).reshape(-1, 3)
    om = (wt[:, None] * np.sin(TP) * 2 * np.pi / nqp).reshape(-1)
    return tp, loc, om


def _targets(mesh: SurfaceMesh, meridian: bool):
    nt, nph = mesh.n_theta, mesh.n_phi
    if meridian:
        return [(a, 0) for a in range(nt)]
    return [(a, b) for a in range(nt) for b in range(nph)]


def _target_geometry(mesh, a, b, rule):
    ntp, nqp = rule.sizes(mesh)
    tp, loc, om = _local_rule(ntp, nqp)
    Q = _rotation(mesh.theta[a], mesh.phi[b])
    sq = loc @ Q.T
    y, _, J = mesh.spec.geometry(sq)
    return sq, y, J * om, tp


def _grid_points(mesh):
    return mesh.mesh_to_grid(np.asarray(mesh.points))


def _contract(coef, Le, Te, Lo, To):
    """out[c, a, b] = sum_k coef[c, k] (Le[k,a] Te[k,b] + Lo[k,a] To[k,b])."""
    nc = coef.shape[0]
    out = None
    for L, T in ((Le, Te), (Lo, To)):
        X = (coef[:, :, None] * L[None]).transpose(0, 2, 1).reshape(nc * L.shape[1], -1)
        part = X @ T
        out = part if out is None else out + part
    return out.reshape(nc, Le.shape[1], Te.shape[1])


def _polar_rows_general(sp: SpectralPoint, mesh: SurfaceMesh, targets, rule: PolarRule):
    """Raw channel rows s[c, t, j] (grid order) for the given targets."""
    xg = _grid_points(mesh)
    nph = mesh.n_phi
    out = np.empty((4, len(targets), mesh.N), dtype=complex)
    for it, (a, b) in enumerate(targets):
        sq, y, wJ, _ = _target_geometry(mesh, a, b, rule)
        v = xg[a * nph + b] - y
        r = np.linalg.norm(v, axis=1)
        g, h = green_scalars(sp.kappa, r)
        coef = np.concatenate([(wJ * g)[None], (wJ * h)[None] * v.T], axis=0)
        tq = np.arccos(np.clip(sq[:, 2], -1.0, 1.0))
        pq = np.arctan2(sq[:, 1], sq[:, 0])
        Le, Te, Lo, To = dfs_interpolation(mesh, tq, pq)
        re = _contract(coef.real, Le, Te, Lo, To)
        im = _contract(coef.imag, Le, Te, Lo, To)
        out[:, it, :] = (re + 1j * im).reshape(4, -1)
    return out


@lru_cache(maxsize=4)
def _radial_tables(spec, level: int, rule: PolarRule):
    """For spheres: lambda-free tables S[a, c, p, j] and distances r[p] on the meridian."""
    from .surface import build_mesh

    mesh = build_mesh(spec, level)
    xg = _grid_points(mesh)
    nt, nph = mesh.n_theta, mesh.n_phi
    ntp, nqp = rule.sizes(mesh)
    S = np.empty((nt, 4, ntp, mesh.N))
    for a in range(nt):
        sq, y, wJ, tp = _target_geometry(mesh, a, 0, rule)
        v = xg[a * nph] - y
        coef = np.concatenate([wJ[None], wJ[None] * v.T], axis=0).reshape(4, ntp, nqp)
        tq = np.arccos(np.clip(sq[:, 2], -1.0, 1.0))
        pq = np.arctan2(sq[:, 1], sq[:, 0])
        Le, Te, Lo, To = dfs_interpolation(mesh, tq, pq)
        acc = 0.0
        for L, T in ((Le, Te), (Lo, To)):
            L = L.reshape(ntp, nqp, nt)
            T = T.reshape(ntp, nqp, nph)
            X = coef[:, :, :, None] * L[None]  # (c, p, q, a')
            X = X.transpose(1, 0, 3, 2).reshape(ntp, 4 * nt, nqp)
            acc = acc + np.matmul(X, T)  # (p, c*a', b)
        S[a] = acc.reshape(ntp, 4, nt * nph).transpose(1, 0, 2)
    r = 2.0 * spec.R * np.sin(_local_rule(ntp, nqp)[0] / 2.0)
    return S, r


def _radial_table_bytes(mesh, rule):
    ntp, _ = rule.sizes(mesh)
    return mesh.n_theta * 4 * ntp * mesh.N * 8


def _polar_rows_radial(sp, mesh, rule):
    S, r = _radial_tables(mesh.spec, mesh.level, rule)
    g, h = green_scalars(sp.kappa, r)
    s0 = np.einsum("p,apj->aj", g, S[:, 0])
    sv = np.einsum("p,acpj->caj", h, S[:, 1:])
    return np.concatenate([s0[None], sv], axis=0)


def _disk_rows(sp, mesh, targets):
    xg = _grid_points(mesh)
    wg = mesh.mesh_to_grid(np.asarray(mesh.weights))
    nph = mesh.n_phi if mesh.structured else 1
    out = np.empty((4, len(targets), mesh.N), dtype=complex)
    rho = np.sqrt(wg / np.pi)
    self_val = (np.exp(1j * sp.kappa * rho) - 1.0) / (2j * sp.kappa)
    for it, ti in enumerate(targets):
        i = ti[0] * nph + ti[1] if isinstance(ti, tuple) else ti
        v = xg[i] - xg
        r = np.linalg.norm(v, axis=1)
        r[i] = 1.0
        g, h = green_scalars(sp.kappa, r)
        out[0, it] = wg * g
        out[1:, it] = (wg * h)[None] * v.T
        out[0, it, i] = self_val[i]
        out[1:, it, i] = 0.0
    return out


def _channel_blocks(sp):
    return np.stack([sp.lam * I4 + sp.m * BETA, 1j * ALPHA[0], 1j * ALPHA[1], 1j * ALPHA[2]])


def _raw_rows(sp, mesh, scheme, meridian, rule):
    if scheme == "disk":
        targets = _targets(mesh, meridian) if mesh.structured else list(range(mesh.N))
        return _disk_rows(sp, mesh, targets)
    if not mesh.structured:
        raise ValueError("the polar scheme needs a parametrised (structured) mesh")
    if (mesh.spec.radial_only and meridian and _radial_table_bytes(mesh, rule) < 4e8
            and mesh.level == _level_of(mesh)):
        return _polar_rows_radial(sp, mesh, rule)
    return _polar_rows_general(sp, mesh, _targets(mesh, meridian), rule)


def _level_of(mesh):
    return int(round(np.log2(mesh.n_theta / mesh.spec.n)))


def _rows_to_operator(sp, mesh, rows, layout):
    """Channel rows (raw, grid order) -> operator on scaled values."""
    wg = mesh.mesh_to_grid(np.asarray(mesh.weights))
    sw = np.sqrt(wg)
    T = rows.shape[1]
    tgt = np.arange(T) * (mesh.n_phi if layout == "fourier" else 1)
    rows = rows * (sw[tgt][None, :, None] / sw[None, None, :])
    blocks4 = np.einsum("cij,cst->ijst", rows, _channel_blocks(sp), optimize=True)
    if layout == "fourier":
        return rows_to_blocks(mesh, blocks4)
    N = mesh.N
    D = blocks4.transpose(0, 2, 1, 3).reshape(4 * N, 4 * N)
    # grid order -> mesh order
    gi = mesh.grid_index if mesh.grid_index is not None else np.arange(N)
    idx = (4 * gi[:, None] + np.arange(4)[None, :]).reshape(-1)
    return D[np.ix_(idx, idx)][None]


@lru_cache(maxsize=24)
def _assemble_cached(spec, level, lam, m, scheme, layout, rule):
    from .surface import build_mesh

    mesh = build_mesh(spec, level)
    return _assemble_raw(SpectralPoint(lam, m), mesh, scheme, layout, rule)


def _assemble_raw(sp, mesh, scheme, layout, rule):
    meridian = layout == "fourier"
    R = _rows_to_operator(sp, mesh, _raw_rows(sp, mesh, scheme, meridian, rule), layout)
    if sp.lam.imag == 0.0:
        Rt = np.conj(np.swapaxes(R, -1, -2))
    else:
        spc = sp.conj()
        Rc = _rows_to_operator(spc, mesh, _raw_rows(spc, mesh, scheme, meridian, rule), layout)
        Rt = np.conj(np.swapaxes(Rc, -1, -2))
    D = 0.5 * (R + Rt)
    if scheme == "polar":
        # keep the accurate (collocation) side on band-limited densities:
        # D = (R + Rt)/2 + (P_perp K P_V - P_V K P_perp)/2 with K = R - Rt
        P = band_projector(mesh, layout)
        K = R - Rt
        KP = K @ P
        PK = P @ K
        D = D + 0.5 * ((KP - P @ KP) - (PK - PK @ P))
    return D


@lru_cache(maxsize=8)
def _legendre_ring_bases(spec, level: int):
    """Orthonormal ring bases Q_m for every azimuthal order |m| < n_theta (scaled values)."""
    from .surface import build_mesh

    mesh = build_mesh(spec, level)
    nt = mesh.n_theta
    wg = mesh.mesh_to_grid(np.asarray(mesh.weights)).reshape(nt, mesh.n_phi)[:, 0]
    mu = np.cos(mesh.theta)
    leg = np.polynomial.legendre.legvander(mu, nt - 1)
    out = []
    for m in range(nt):
        B = np.sqrt(wg)[:, None] * (1.0 - mu * mu)[:, None] ** (m / 2.0) * leg[:, : nt - m]
        Q, _ = np.linalg.qr(B)
        out.append(Q)
    return out


def band_projector(mesh: SurfaceMesh, layout: str | None = None) -> np.ndarray:
    """Orthogonal projector (scaled values) onto samples of band-limited densities.

    A density is band-limited when, as a function on the parameter sphere, it
    is a spherical-harmonic polynomial of degree below ``n_theta`` in every
    spinor component.
    """
    layout = layout or default_layout(mesh)
    nt, nph = mesh.n_theta, mesh.n_phi
    if layout == "fourier":
        from .operators import mode_index

        Q = _legendre_ring_bases(mesh.spec, _level_of(mesh))
        idx = mode_index(nph)
        P = np.zeros((nph, nt, 4, nt, 4))
        for j in range(nph):
            for s in range(4):
                n = idx[j, s]
                m = n if n <= nph // 2 else n - nph
                if abs(m) < nt:
                    q = Q[abs(m)]
                    P[j, :, s, :, s] = q @ q.T
        return P.reshape(nph, 4 * nt, 4 * nt)
    # dense: scalar projector on panel values, tensored with I4
    wg = np.asarray(mesh.weights)
    gi = mesh.grid_index
    a_idx, b_idx = gi // nph, gi % nph
    mu = np.cos(mesh.theta[a_idx])
    ph = mesh.phi[b_idx]
    leg = np.polynomial.legendre.legvander(mu, nt - 1)
    cols = []
    for m in range(-(nt - 1), nt):
        am = abs(m)
        ang = np.cos(m * ph) if m >= 0 else np.sin(am * ph)
        cols.append((1 - mu * mu)[:, None] ** (am / 2.0) * leg[:, : nt - am] * ang[:, None])
    B = np.sqrt(wg)[:, None] * np.concatenate(cols, axis=1)
    Q, _ = np.linalg.qr(B)
    Ps = Q @ Q.T
    return np.kron(Ps, np.eye(4))[None]


def assemble_M(lam, mesh: SurfaceMesh, *, m: float = 1.0, scheme: str = "polar",
               layout: str | None = None, rule: PolarRule = PolarRule(),
               cache: bool = True) -> DiscreteOperator:
    """Discrete boundary operator D(lam) acting on scaled panel values."""
    sp = lam if isinstance(lam, SpectralPoint) else SpectralPoint(lam, m)
    sp.require_off_band()
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    layout = layout or default_layout(mesh)
    if layout == "fourier" and not mesh.axisymmetric:
        raise ValueError("fourier layout needs an axisymmetric structured mesh")
    if cache and mesh.structured and mesh.level == _level_of(mesh):
        data = _assemble_cached(mesh.spec, mesh.level, sp.lam, sp.m, scheme, layout, rule)
        if layout == "dense":
            data = _regrid_dense(mesh, data)
    else:
        data = _assemble_raw(sp, mesh, scheme, layout, rule)
    tag = f"{scheme}" + (f"(+{rule.extra_theta},x{rule.phi_factor})" if scheme == "polar" else "")
    return DiscreteOperator(data.copy(), layout, mesh, lam=sp, scheme=tag, tag="M")


def _regrid_dense(mesh, data):
    """Cached dense data is in canonical (grid) order; permute to the mesh's order."""
    gi = mesh.grid_index
    if np.array_equal(gi, np.arange(mesh.N)):
        return data
    idx = (4 * gi[:, None] + np.arange(4)[None, :]).reshape(-1)
    return data[:, idx][:, :, idx]


def normal_operator(mesh: SurfaceMesh, layout: str | None = None) -> DiscreteOperator:
    """A_nu: block-diagonal multiplication by alpha . nu."""
    layout = layout or default_layout(mesh)
    if layout == "dense":
        D = np.zeros((4 * mesh.N, 4 * mesh.N), dtype=complex)
        blocks = alpha_dot_many(mesh.normals)
        for i in range(mesh.N):
            D[4 * i:4 * i + 4, 4 * i:4 * i + 4] = blocks[i]
        return DiscreteOperator(D, "dense", mesh, tag="A")
    nug = mesh.mesh_to_grid(np.asarray(mesh.normals)).reshape(mesh.n_theta, mesh.n_phi, 3)[:, 0]
    nt = mesh.n_theta
    B = np.zeros((4 * nt, 4 * nt), dtype=complex)
    for a, blk in enumerate(alpha_dot_many(nug)):
        B[4 * a:4 * a + 4, 4 * a:4 * a + 4] = blk
    return DiscreteOperator(np.broadcast_to(B, (mesh.n_phi, 4 * nt, 4 * nt)).copy(), "fourier",
                            mesh, tag="A")


def identity_operator(mesh: SurfaceMesh, layout: str | None = None) -> DiscreteOperator:
    return DiscreteOperator.identity(mesh, layout or default_layout(mesh))


def anticomm_operator(mesh: SurfaceMesh, m: float = 1.0, layout: str | None = None) -> DiscreteOperator:
    """Nystrom matrix of the weakly singular kernel K on scaled values (zero self term)."""
    layout = layout or default_layout(mesh)
    xg = _grid_points(mesh)
    ng = mesh.mesh_to_grid(np.asarray(mesh.normals))
    wg = mesh.mesh_to_grid(np.asarray(mesh.weights))
    sw = np.sqrt(wg)
    N = mesh.N
    targets = np.arange(mesh.n_theta) * mesh.n_phi if layout == "fourier" else np.arange(N)
    rows = np.zeros((len(targets), N, 4, 4), dtype=complex)
    for it, i in enumerate(targets):
        mask = np.arange(N) != i
        K = anticomm_kernel_many(xg[i][None], xg[mask], ng[i][None], ng[mask], m)
        rows[it, mask] = K * (sw[i] * sw[mask])[:, None, None]
    if layout == "fourier":
        data = rows_to_blocks(mesh, rows)
    else:
        D = rows.transpose(0, 2, 1, 3).reshape(4 * N, 4 * N)
        gi = mesh.grid_index if mesh.grid_index is not None else np.arange(N)
        idx = (4 * gi[:, None] + np.arange(4)[None, :]).reshape(-1)
        data = D[np.ix_(idx, idx)]
    return DiscreteOperator(data, layout, mesh, lam=SpectralPoint(0.0, m), scheme="nystrom",
                            tag="Acal")


# ---------------------------------------------------------------------------
# off-surface evaluation
# ---------------------------------------------------------------------------

def _distance_flags(mesh, pts, factor=2.0):
    pts = np.atleast_2d(pts)
    diam = mesh.diam if mesh.diam is not None else np.sqrt(mesh.weights)
    flags = np.zeros(len(pts), dtype=bool)
    for s in range(0, len(pts), 512):
        d = np.linalg.norm(pts[s:s + 512, None, :] - mesh.points[None], axis=-1)
        j = np.argmin(d, axis=1)
        flags[s:s + 512] = d[np.arange(len(j)), j] < factor * diam[j] * (1 - 1e-9)
    return flags


def upsampled_source(phi: BoundaryDensity, factor: int):
    """Density resampled on a finer product grid by spectral (double Fourier sphere) interpolation.

    Returns ``(points, weights, values)`` of a quadrature with ``factor`` times
    more rings and azimuths.  Used to evaluate single layers close to the
    surface, where the panel rule itself is not accurate.
    """
    mesh = phi.mesh
    if factor == 1:
        return mesh.points, mesh.weights, phi.values
    if not mesh.structured:
        raise ValueError("upsampling needs a parametrised (structured) mesh")
    nt, nph = factor * mesh.n_theta, factor * mesh.n_phi
    mu, wmu = np.polynomial.legendre.leggauss(nt)
    th = np.arccos(-mu)
    ph = 2 * np.pi * np.arange(nph) / nph
    Le, _, Lo, _ = dfs_interpolation(mesh, th, np.zeros(1))
    _, Te, _, To = dfs_interpolation(mesh, np.zeros(1), ph)
    F = mesh.mesh_to_grid(phi.values).reshape(mesh.n_theta, mesh.n_phi, 4)
    vals = (np.einsum("pa,abs,qb->pqs", Le, F, Te, optimize=True)
            + np.einsum("pa,abs,qb->pqs", Lo, F, To, optimize=True)).reshape(-1, 4)
    T, P = np.meshgrid(th, ph, indexing="ij")
    s = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1).reshape(-1, 3)
    x, _, J = mesh.spec.geometry(s)
    w = (wmu[:, None] * np.full(nph, 2 * np.pi / nph)[None]).reshape(-1) * J
    return x, w, vals


def apply_gamma(lam, phi, points, *, m: float = 1.0, strict: bool = False,
                chunk: int = 256, upsample: int = 1) -> VolumeField:
    """Quadrature sum of G_lam(x - x_j) w_j phi_j at off-surface points.

    With ``upsample > 1`` the sum runs over a spectrally resampled density
    (see :func:`upsampled_source`).
    """
    sp = lam if isinstance(lam, SpectralPoint) else SpectralPoint(lam, m)
    mesh = phi.mesh
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    flags = _distance_flags(mesh, pts)
    if strict and flags.any():
        raise ValueError(f"{int(flags.sum())} evaluation points are closer than 2 panel diameters to the surface")
    src, wts, vals = upsampled_source(phi, upsample)
    wphi = wts[:, None] * vals
    scal = sp.lam * I4 + sp.m * BETA
    out = np.empty((len(pts), 4), dtype=complex)
    chunk = max(1, chunk * mesh.N // len(src))
    for s in range(0, len(pts), chunk):
        v = pts[s:s + chunk, None, :] - src[None]
        r = np.linalg.norm(v, axis=-1)
        g, h = green_scalars(sp.kappa, r)
        u = (g @ wphi) @ scal.T
        # i alpha . v h  applied to w phi
        for c in range(3):
            u = u + 1j * ((h * v[..., c]) @ wphi) @ ALPHA[c].T
        out[s:s + chunk] = u
    return VolumeField(pts, out, flags)


def volume_grid(mesh: SurfaceMesh, n: int = 24, pad: float = 0.5, exclude: float = 1.0):
    """Tensor Gauss grid on the bounding box minus a tube of ``exclude`` panel diameters."""
    lo = mesh.points.min(axis=0) - pad
    hi = mesh.points.max(axis=0) + pad
    x, w = np.polynomial.legendre.leggauss(n)
    axes, wts = [], []
    for k in range(3):
        axes.append(lo[k] + (x + 1) * (hi[k] - lo[k]) / 2)
        wts.append(w * (hi[k] - lo[k]) / 2)
    P = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)
    W = np.einsum("i,j,k->ijk", *wts).reshape(-1)
    keep = ~_distance_flags(mesh, P, factor=exclude)
    return P[keep], W[keep]


def apply_gamma_star(lam, f_values, points, weights, mesh: SurfaceMesh, *, m: float = 1.0,
                     chunk: int = 64) -> BoundaryDensity:
    """Volume quadrature of int G_{conj lam}(x - y) f(y) dy at every panel point."""
    sp = lam if isinstance(lam, SpectralPoint) else SpectralPoint(lam, m)
    spc = sp.conj()
    f = np.asarray(f_values, dtype=complex).reshape(-1, 4) * np.asarray(weights)[:, None]
    pts = np.asarray(points, dtype=float)
    scal = spc.lam * I4 + spc.m * BETA
    out = np.empty((mesh.N, 4), dtype=complex)
    for s in range(0, mesh.N, chunk):
        v = mesh.points[s:s + chunk, None, :] - pts[None]
        r = np.linalg.norm(v, axis=-1)
        g, h = green_scalars(spc.kappa, r)
        u = (g @ f) @ scal.T
        for c in range(3):
            u = u + 1j * ((h * v[..., c]) @ f) @ ALPHA[c].T
        out[s:s + chunk] = u
    return BoundaryDensity(out, mesh)


def numerical_traces(evaluator, mesh: SurfaceMesh, offsets=(0, 1), c: float = 4.0):
    """One-sided traces by evaluation at ``x_i -+ t nu_i`` and linear Richardson extrapolation.

    ``offsets`` are the exponents k of ``t_k = c 2^-k diam_i``.  The inner side
    (``x - t nu``) gives ``trace_plus``.  Returns ``(plus, minus, flags)``;
    ``flags`` marks panels whose successive differences do not shrink.
    """
    ks = sorted(offsets)
    if len(ks) < 2:
        raise ValueError("need at least two offsets")
    diam = mesh.diam if mesh.diam is not None else np.sqrt(mesh.weights)
    res = {}
    for side, sgn in (("plus", -1.0), ("minus", 1.0)):
        vals = []
        for k in ks:
            t = c * 2.0 ** (-k) * diam
            vals.append(np.asarray(evaluator(mesh.points + sgn * t[:, None] * mesh.normals)).reshape(-1, 4))
        f1, f2 = vals[-2], vals[-1]
        ratio = 2.0 ** (ks[-1] - ks[-2])
        res[side] = (ratio * f2 - f1) / (ratio - 1.0)
        flag = ~np.all(np.isfinite(res[side]), axis=1)
        for k in range(len(vals) - 2):
            d0 = np.linalg.norm(vals[k + 1] - vals[k], axis=1)
            d1 = np.linalg.norm(vals[k + 2] - vals[k + 1], axis=1)
            flag |= d1 > d0
        res[side + "_flag"] = flag
    return (BoundaryDensity(res["plus"], mesh), BoundaryDensity(res["minus"], mesh),
            res["plus_flag"] | res["minus_flag"])


# ---------------------------------------------------------------------------
# dumps
# ---------------------------------------------------------------------------

def save_operator(op: DiscreteOperator, path, fmt: str = "npz") -> None:
    lam = None if op.lam is None else op.lam.lam
    header = f"lambda={lam!r} mesh={op.mesh.surface_id} level={op.mesh.level} scheme={op.scheme} tag={op.tag}"
    D = op.dense()
    if fmt == "npz":
        np.savez_compressed(path, matrix=D, header=np.array(header))
    elif fmt == "txt":
        np.savetxt(path, D.view(float), header=header + " layout=re,im interleaved")
    else:
        raise ValueError("fmt must be npz or txt")


def load_operator(path):
    """Returns ``(matrix, header)``."""
    path = str(path)
    if path.endswith(".npz"):
        z = np.load(path)
        return z["matrix"], str(z["header"])
    with open(path) as fh:
        header = fh.readline().lstrip("# ").strip()
    M = np.loadtxt(path).view(complex)
    return M, header
