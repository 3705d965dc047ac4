"""Closed test surfaces and their product-grid quadratures.

Every built-in surface is parametrised over the unit sphere, ``X(s)`` with
``s = (sin t cos p, sin t sin p, cos t)``.  The grid is Gauss-Legendre in
``mu = cos t`` times uniform in ``p`` with ``n_phi = 2 n_theta`` so that the
weights are ``w = w_mu * dphi * J`` where ``J`` is the area density of ``X``
relative to the round measure.  Keeping the sphere parametrisation around lets
the layer assembly place quadrature nodes anywhere on the surface.

The coin is a surface of revolution: two flat disks ``z = +-h`` of radius
``a - delta`` and a rim whose tangent angle follows the quintic smoothstep,
so the profile curve is C^3 across the disk/rim seams.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate

__all__ = [
    "SurfaceSpec", "SurfaceMesh", "build_mesh", "mesh_diagnostics",
    "exact_area", "save_mesh", "load_mesh", "smoothstep5",
]

KINDS = ("sphere", "ellipsoid", "coin")


def smoothstep5(u):
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (10.0 - 15.0 * u + 6.0 * u * u)


_GX, _GW = np.polynomial.legendre.leggauss(40)
_GX = 0.5 * (_GX + 1.0)
_GW = 0.5 * _GW


def _rim_integrals(u):
    """X(u) = int_0^u cos(pi Q), Z(u) = int_0^u sin(pi Q) by fixed Gauss rule."""
    u = np.asarray(u, dtype=float)
    s = u[..., None] * _GX
    ang = np.pi * smoothstep5(s)
    return u * (np.cos(ang) @ _GW), u * (np.sin(ang) @ _GW)


@dataclass(frozen=True)
class SurfaceSpec:
    """Geometry description.

    sphere: ``R``; ellipsoid: semi-axes ``a, b, c``; coin: outer radius ``a``,
    half thickness ``h`` and rim width ``delta``.  ``n`` is the number of polar
    rings at level 0 (it doubles with every level).
    """

    kind: str = "sphere"
    R: float = 1.0
    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    h: float = 0.3
    delta: float = 0.2
    n: int = 4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if int(self.n) != self.n or self.n < 2 or self.n % 2:
            raise ValueError("base resolution n must be an even integer >= 2")
        vals = {"sphere": ("R",), "ellipsoid": ("a", "b", "c"), "coin": ("a", "h", "delta")}[self.kind]
        for name in vals:
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{self.kind}: parameter {name} must be positive, got {v!r}")
        if self.kind == "coin" and not self.delta < min(self.a, self.h):
            raise ValueError("coin: need delta < min(a, h)")

    @property
    def surface_id(self) -> str:
        if self.kind == "sphere":
            return f"sphere(R={self.R:g})"
        if self.kind == "ellipsoid":
            return f"ellipsoid(a={self.a:g},b={self.b:g},c={self.c:g})"
        return f"coin(a={self.a:g},h={self.h:g},delta={self.delta:g})"

    @property
    def axisymmetric(self) -> bool:
        return self.kind != "ellipsoid" or self.a == self.b

    @property
    def radial_only(self) -> bool:
        """Distances between surface points depend on the rotated polar angle only."""
        return self.kind == "sphere"

    def to_dict(self) -> dict:
        return asdict(self)

    # ---- coin profile -------------------------------------------------
    @cached_property
    def _coin(self):
        a, h, d = self.a, self.h, self.delta
        xh, _ = _rim_integrals(0.5)
        _, z1 = _rim_integrals(1.0)
        th1 = (a - d) * xh * np.pi / (d + 2.0 * (a - d) * xh)
        return float(xh), float(z1), float(th1)

    @property
    def seam_angle(self) -> float:
        """Polar parameter angle where the top disk meets the rim (coin only)."""
        return self._coin[2]

    def coin_profile(self, t):
        """(rho, z, rho_t, z_t) of the coin meridian at parameter angles ``t``."""
        a, h, d = self.a, self.h, self.delta
        xh, z1, th1 = self._coin
        t = np.asarray(t, dtype=float)
        top, bot = t < th1, t > np.pi - th1
        rim = ~(top | bot)
        span = np.pi - 2.0 * th1
        u = np.clip((t - th1) / span, 0.0, 1.0)
        X, Z = _rim_integrals(u)
        ang = np.pi * smoothstep5(u)
        sr, sz = d / xh, 2.0 * h / z1
        rho = np.where(top, (a - d) * t / th1, np.where(bot, (a - d) * (np.pi - t) / th1,
                                                        (a - d) + sr * X))
        z = np.where(top, h, np.where(bot, -h, h - sz * Z))
        rho_t = np.where(top, (a - d) / th1, np.where(bot, -(a - d) / th1, sr * np.cos(ang) / span))
        z_t = np.where(rim, -sz * np.sin(ang) / span, 0.0)
        return rho, z, rho_t, z_t

    # ---- generic evaluation --------------------------------------------
    def geometry(self, s):
        """Surface point, unit normal and area density for unit vectors ``s`` (..., 3)."""
        s = np.asarray(s, dtype=float)
        if self.kind == "sphere":
            return self.R * s, s.copy(), np.full(s.shape[:-1], self.R * self.R)
        if self.kind == "ellipsoid":
            ax = np.array([self.a, self.b, self.c])
            x = s * ax
            n = s / ax
            nn = np.linalg.norm(n, axis=-1)
            J = np.prod(ax) * nn
            return x, n / nn[..., None], J
        t = np.arccos(np.clip(s[..., 2], -1.0, 1.0))
        p = np.arctan2(s[..., 1], s[..., 0])
        return self._coin_eval(t, p)

    def _coin_eval(self, t, p):
        rho, z, rt, zt = self.coin_profile(t)
        cp, sp = np.cos(p), np.sin(p)
        x = np.stack([rho * cp, rho * sp, z], axis=-1)
        speed = np.hypot(rt, zt)
        nu = np.stack([-zt * cp, -zt * sp, rt], axis=-1) / speed[..., None]
        th1 = self.seam_angle
        flat_top, flat_bot = t < th1, t > np.pi - th1
        nu[flat_top] = (0.0, 0.0, 1.0)
        nu[flat_bot] = (0.0, 0.0, -1.0)
        st = np.sin(t)
        ratio = np.where(st > 1e-12, rho / np.where(st > 1e-12, st, 1.0), np.abs(rt))
        return x, nu, speed * ratio

    def speeds(self, t, p):
        """|X_t| and |X_p| at parameter angles (used for panel diameters)."""
        t, p = np.broadcast_arrays(np.asarray(t, float), np.asarray(p, float))
        if self.kind == "sphere":
            return np.full(t.shape, self.R), self.R * np.sin(t)
        if self.kind == "ellipsoid":
            ct, st, cp, sp = np.cos(t), np.sin(t), np.cos(p), np.sin(p)
            xt = np.stack([self.a * ct * cp, self.b * ct * sp, -self.c * st], -1)
            xp = np.stack([-self.a * st * sp, self.b * st * cp, 0 * st], -1)
            return np.linalg.norm(xt, axis=-1), np.linalg.norm(xp, axis=-1)
        rho, _, rt, zt = self.coin_profile(t)
        return np.hypot(rt, zt), np.abs(rho)

    def patch_of(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind != "coin":
            return np.full(t.shape, "curved", dtype="<U6")
        th1 = self.seam_angle
        return np.where((t < th1) | (t > np.pi - th1), "flat", "curved")

    def implicit_residual(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "sphere":
            return np.linalg.norm(x, axis=-1) / self.R - 1.0
        if self.kind == "ellipsoid":
            return np.sqrt(np.sum((x / np.array([self.a, self.b, self.c])) ** 2, axis=-1)) - 1.0
        raise ValueError("no implicit form for the coin")

    def interior_point(self) -> np.ndarray:
        return np.zeros(3)


def exact_area(spec: SurfaceSpec) -> float:
    """Reference area (closed form or adaptive quadrature)."""
    if spec.kind == "sphere":
        return 4.0 * np.pi * spec.R ** 2
    if spec.kind == "coin":
        th1 = spec.seam_angle

        def f(t):
            rho, _, rt, zt = spec.coin_profile(np.array([t]))
            return 2 * np.pi * rho[0] * np.hypot(rt[0], zt[0])

        rim, _ = integrate.quad(f, th1, np.pi - th1, epsabs=1e-13, epsrel=1e-13, limit=200)
        return 2.0 * np.pi * (spec.a - spec.delta) ** 2 + rim

    def ring(t):
        s = np.stack([np.sin(t) * np.cos(_P), np.sin(t) * np.sin(_P), np.full_like(_P, np.cos(t))], -1)
        return np.sin(t) * spec.geometry(s)[2].mean() * 2 * np.pi

    val, _ = integrate.quad(ring, 0.0, np.pi, epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


_P = 2 * np.pi * np.arange(256) / 256


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Point/normal/weight quadrature of a closed surface.

    Panels are stored in ``order``; ``grid_index[i]`` is the position of panel
    ``i`` in the structured ring-major grid (ring ``a``, azimuth ``b``) at
    index ``a * n_phi + b``.
    """

    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    patch: np.ndarray
    level: int
    surface_id: str
    spec: SurfaceSpec | None = None
    theta: np.ndarray | None = None
    phi: np.ndarray | None = None
    diam: np.ndarray | None = None
    grid_index: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("points", "normals", "weights", "patch", "theta", "phi", "diam", "grid_index"):
            v = getattr(self, name)
            if isinstance(v, np.ndarray):
                v.setflags(write=False)

    @property
    def N(self) -> int:
        return len(self.weights)

    @property
    def n_theta(self) -> int:
        return 0 if self.theta is None else len(self.theta)

    @property
    def n_phi(self) -> int:
        return 0 if self.phi is None else len(self.phi)

    @property
    def structured(self) -> bool:
        return self.spec is not None and self.theta is not None and self.grid_index is not None

    @property
    def axisymmetric(self) -> bool:
        return self.structured and self.spec.axisymmetric

    @property
    def flat(self) -> np.ndarray:
        return self.patch == "flat"

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    def permuted(self, perm) -> "SurfaceMesh":
        """Same quadrature with panels listed in the order ``perm``."""
        perm = np.asarray(perm)
        return SurfaceMesh(
            self.points[perm].copy(), self.normals[perm].copy(), self.weights[perm].copy(),
            self.patch[perm].copy(), self.level, self.surface_id, self.spec, self.theta, self.phi,
            None if self.diam is None else self.diam[perm].copy(),
            None if self.grid_index is None else self.grid_index[perm].copy(), dict(self.meta),
        )

    def grid_to_mesh(self, arr_grid, axis=0):
        """Reorder an array given in grid order into panel order."""
        if self.grid_index is None:
            return arr_grid
        return np.take(arr_grid, self.grid_index, axis=axis)

    def mesh_to_grid(self, arr, axis=0):
        if self.grid_index is None:
            return arr
        inv = np.empty_like(self.grid_index)
        inv[self.grid_index] = np.arange(self.N)
        return np.take(arr, inv, axis=axis)


def _theta_grid(nt: int):
    mu, wmu = np.polynomial.legendre.leggauss(nt)
    mu, wmu = mu[::-1], wmu[::-1]
    th = np.arccos(mu)
    edges = np.concatenate([[1.0], 1.0 - np.cumsum(wmu)])
    tedges = np.arccos(np.clip(edges, -1.0, 1.0))
    return th, wmu, np.diff(tedges)


def build_mesh(spec: SurfaceSpec, level: int) -> SurfaceMesh:
    """Product grid with ``n * 2**level`` rings and twice as many azimuths."""
    if int(level) != level or level < 0:
        raise ValueError("level must be a nonnegative integer")
    nt = spec.n * 2 ** int(level)
    nph = 2 * nt
    th, wmu, dth = _theta_grid(nt)
    ph = 2.0 * np.pi * np.arange(nph) / nph
    T, P = np.meshgrid(th, ph, indexing="ij")
    s = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1).reshape(-1, 3)
    if spec.kind == "coin":
        x, nu, J = spec._coin_eval(T.reshape(-1), P.reshape(-1))
    else:
        x, nu, J = spec.geometry(s)
    w = (wmu[:, None] * np.full(nph, 2.0 * np.pi / nph)).reshape(-1) * J
    vt, vp = spec.speeds(T, P)
    diam = np.hypot(vt * dth[:, None], vp * 2.0 * np.pi / nph).reshape(-1)
    patch = np.repeat(spec.patch_of(th), nph)
    return SurfaceMesh(
        points=x, normals=nu, weights=w, patch=patch, level=int(level),
        surface_id=spec.surface_id, spec=spec, theta=th, phi=ph, diam=diam,
        grid_index=np.arange(nt * nph),
    )


def mesh_diagnostics(mesh: SurfaceMesh, levels: int | None = None) -> dict:
    """Weight range, normal consistency and an area-versus-level table."""
    w = np.asarray(mesh.weights)
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("degenerate mesh: nonpositive panel weight")
    nres = float(np.max(np.abs(np.linalg.norm(mesh.normals, axis=1) - 1.0)))
    rep = {
        "surface_id": mesh.surface_id,
        "level": mesh.level,
        "N": mesh.N,
        "min_weight": float(w.min()),
        "max_weight": float(w.max()),
        "normal_unit_residual": nres,
        "area": float(w.sum()),
    }
    if mesh.spec is None:
        return rep
    spec = mesh.spec
    c = spec.interior_point()
    rep["outward_min"] = float(np.min(np.sum(mesh.normals * (mesh.points - c), axis=1)))
    if spec.kind != "coin":
        rep["implicit_residual"] = float(np.max(np.abs(spec.implicit_residual(mesh.points))))
    ref = exact_area(spec)
    rows = []
    top = mesh.level if levels is None else levels
    for lv in range(0, top + 1):
        A = build_mesh(spec, lv).area
        rows.append({"level": lv, "area": A, "error": abs(A - ref)})
    for r0, r1 in zip(rows[:-1], rows[1:]):
        r1["ratio"] = r0["error"] / r1["error"] if r1["error"] > 0 else float("inf")
    rep["exact_area"] = ref
    rep["area_table"] = rows
    if mesh.structured:
        nt, nph = mesh.n_theta, mesh.n_phi
        nu = mesh.mesh_to_grid(np.asarray(mesh.normals)).reshape(nt, nph, 3)
        jumps = np.linalg.norm(np.diff(nu, axis=0), axis=-1).max(axis=1)
        rep["max_ring_normal_jump"] = float(jumps.max())
    return rep


# ---- text export -------------------------------------------------------

def save_mesh(mesh: SurfaceMesh, path) -> None:
    header = {
        "surface_id": mesh.surface_id, "level": mesh.level,
        "spec": None if mesh.spec is None else mesh.spec.to_dict(),
        "n_theta": mesh.n_theta, "n_phi": mesh.n_phi,
    }
    with open(path, "w") as fh:
        fh.write("# diracshell mesh\n")
        fh.write("# header " + json.dumps(header, sort_keys=True) + "\n")
        fh.write("# columns: x y z nu_x nu_y nu_z w patch grid_index\n")
        gi = mesh.grid_index if mesh.grid_index is not None else np.full(mesh.N, -1)
        for x, n, w, p, g in zip(mesh.points, mesh.normals, mesh.weights, mesh.patch, gi):
            fh.write(" ".join(repr(float(v)) for v in (*x, *n, w)) + f" {p} {int(g)}\n")


def load_mesh(path) -> SurfaceMesh:
    header = None
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("# header "):
                header = json.loads(line[len("# header "):])
            elif line.startswith("#") or not line.strip():
                continue
            else:
                rows.append(line.split())
    if header is None:
        raise ValueError(f"{path}: missing header line")
    num = np.array([[float(v) for v in r[:7]] for r in rows])
    patch = np.array([r[7] for r in rows], dtype="<U6")
    gi = np.array([int(r[8]) for r in rows])
    spec = SurfaceSpec(**header["spec"]) if header.get("spec") else None
    theta = phi = diam = None
    if spec is not None and header["n_theta"]:
        ref = build_mesh(spec, header["level"])
        theta, phi = ref.theta, ref.phi
        diam = ref.diam[gi]
    return SurfaceMesh(
        points=num[:, :3], normals=num[:, 3:6], weights=num[:, 6], patch=patch,
        level=int(header["level"]), surface_id=header["surface_id"], spec=spec,
        theta=theta, phi=phi, diam=diam, grid_index=None if np.any(gi < 0) else gi,
    )
