"""Invariant suites shared by ``verify`` and the acceptance tests.

Every suite returns a plain dict::

    {"suite": name, "passed": bool, "checks": [{"name", "passed", "value", "limit"}, ...],
     "data": {...}}

Metric helpers are cached per (surface, level) so a test session pays for each
assembly once.
"""
from __future__ import annotations

import time
from functools import lru_cache

import numpy as np

from . import algebra, kernel
from .algebra import ALPHA, BETA, alpha_dot_many
from .bs import (GaussianSource, fd_pde_residual, identity_floor, krein_jump_residual,
                 krein_resolvent_apply, scan_many, threshold)
from .critical import (compactness_profile, conjugation_residual, consistency_residual,
                       factorization_residual, flat_block_norm, flat_smoothing_test,
                       near_kernel_count)
from .kernel import SpectralPoint, green_kernel_many, kernel_pde_residual
from .layer import (BoundaryDensity, apply_gamma, assemble_M, band_projector, identity_operator,
                    normal_operator, numerical_traces, scaled, unscaled)
from .radial import merge_roots, oracle_spectrum
from .singular import fd_residual_check, make_spec, psi_norm, residual_norm, slope_fit
from .surface import SurfaceSpec, build_mesh

__all__ = [
    "SPHERE", "COIN", "SUITES", "run_suite", "algebra_suite", "kernel_suite", "layer_suite",
    "critical_suite", "singular_suite", "layer_metrics", "critical_metrics",
    "spectral_crossvalidation", "krein_study", "monotone_decreasing", "monotone_increasing",
]

SPHERE = SurfaceSpec("sphere", R=1.0, n=4)
COIN = SurfaceSpec("coin", a=1.0, h=0.3, delta=0.2, n=4)
# smooth test density for trace checks
_PHI_COEF = np.array([[1.0, 1.0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 1j], [0.5, 0, 0, 0]])


def monotone_decreasing(v) -> bool:
    v = list(v)
    return all(b < a for a, b in zip(v[:-1], v[1:]))


def monotone_increasing(v) -> bool:
    v = list(v)
    return all(b > a for a, b in zip(v[:-1], v[1:]))


def _check(name, passed, value, limit=None):
    return {"name": name, "passed": bool(passed), "value": value, "limit": limit}


def _report(name, checks, data=None):
    return {"suite": name, "passed": all(c["passed"] for c in checks), "checks": checks,
            "data": data or {}}


# ---------------------------------------------------------------------------
# algebra and kernel
# ---------------------------------------------------------------------------

def algebra_suite(seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    anti = algebra.check_anticommutation()
    band = 0.0
    for lam in rng.uniform(1.0, 5.0, 20) * rng.choice([-1, 1], 20):
        P = algebra.band_projector_factor(lam, 1) @ algebra.band_projector_factor(lam, -1)
        band = max(band, float(np.linalg.norm(P)))
    nu = rng.standard_normal((1000, 3))
    nu /= np.linalg.norm(nu, axis=1, keepdims=True)
    An = alpha_dot_many(nu)
    sq = float(np.max(np.linalg.norm(An @ An - np.eye(4), axis=(1, 2))))
    checks = [
        _check("anticommutation", anti <= 1e-15, anti, 1e-15),
        _check("band_factorization", band <= 1e-13, band, 1e-13),
        _check("alpha_nu_squared", sq <= 1e-14, sq, 1e-14),
    ]
    return _report("algebra", checks)


def kernel_suite(seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    adj = 0.0
    for _ in range(100):
        lam = complex(rng.uniform(-3, 3), rng.uniform(-1, 1))
        if lam.imag == 0 and abs(lam.real) >= 1:
            continue
        x = rng.standard_normal(3) * rng.uniform(0.1, 3)
        sp = SpectralPoint(lam, 1.0)
        G = green_kernel_many(sp, x[None])[0]
        Gc = green_kernel_many(sp.conj(), -x[None])[0]
        adj = max(adj, float(np.max(np.abs(G.conj().T - Gc)) / max(1.0, np.max(np.abs(G)))))
    hs = (0.04, 0.02, 0.01)
    orders = []
    for lam, x in ((0.3, (0.7, -0.4, 0.5)), (0.2 + 0.5j, (-0.3, 0.9, 0.2)), (-0.8, (1.1, 0.3, -0.6))):
        r = [kernel_pde_residual(lam, np.array(x), h) for h in hs]
        orders.append(float(min(np.log2(r[0] / r[1]), np.log2(r[1] / r[2]))))
    checks = [
        _check("adjoint_symmetry", adj <= 1e-13, adj, 1e-13),
        _check("fd_pde_order", min(orders) >= 1.8, orders, 1.8),
    ]
    return _report("kernel", checks)


# ---------------------------------------------------------------------------
# layer operators on the unit sphere
# ---------------------------------------------------------------------------

def _smooth_density(mesh):
    x = mesh.points
    return np.stack([1 + x[:, 0], x[:, 1] * x[:, 2], 1j * x[:, 2], 0.5 + x[:, 0] ** 2], -1).astype(complex)


@lru_cache(maxsize=16)
def layer_metrics(spec: SurfaceSpec, level: int, m: float = 1.0) -> dict:
    mesh = build_mesh(spec, level)
    lam_c = 0.3 + 0.2j
    Dc, Dcc = assemble_M(lam_c, mesh, m=m), assemble_M(np.conj(lam_c), mesh, m=m)
    pairing = float(np.max(np.abs(Dc.H.data - Dcc.data)))
    D = assemble_M(0.0, mesh, m=m)
    herm = D.hermitian_defect()
    A = normal_operator(mesh, D.layout)
    I = identity_operator(mesh, D.layout)
    Di = D.inv()
    inv_ratio = (Di + 4.0 * (A @ D @ A)).norm2() / Di.norm2()
    ev = (D @ A).eigvals()
    cluster = float(np.mean(np.minimum(np.abs(ev - 0.5j), np.abs(ev + 0.5j)) < 0.1))
    E = (-4.0) * (D @ A @ D @ A) - I
    P = band_projector(mesh, D.layout)
    resolved = float(max(np.linalg.norm(P[j] @ E.data[j] @ P[j], 2) for j in range(len(P))))
    # single-layer jump relation and average trace for a smooth density
    phi = _smooth_density(mesh)
    dens = BoundaryDensity(phi, mesh)
    ev_field = lambda p: apply_gamma(0.0, dens, p, m=m, upsample=4).values
    tp, tm, flags = numerical_traces(ev_field, mesh, offsets=(0, 1, 2, 3))
    w = mesh.weights[:, None]
    AN = alpha_dot_many(mesh.normals)
    jump = 1j * np.einsum("nij,nj->ni", AN, tp.values - tm.values) - phi
    jump_rel = float(np.sqrt(np.sum(w * np.abs(jump) ** 2) / np.sum(w * np.abs(phi) ** 2)))
    Dphi = unscaled(mesh, D.apply(scaled(mesh, phi)))
    avg = 0.5 * (tp.values + tm.values) - Dphi
    avg_rel = float(np.sqrt(np.sum(w * np.abs(avg) ** 2) / np.sum(w * np.abs(Dphi) ** 2)))
    return {
        "level": level, "N": mesh.N, "pairing_defect": pairing, "hermitian_defect": herm,
        "inverse_identity_ratio": float(inv_ratio), "identity_residual_2norm": E.norm2(),
        "identity_residual_resolved": resolved, "cluster_fraction": cluster,
        "jump_residual": jump_rel, "average_trace_residual": avg_rel, "trace_flags": int(flags.sum()),
    }


def layer_suite(levels=(1, 2, 3), m: float = 1.0) -> dict:
    rows = [layer_metrics(SPHERE, lv, m) for lv in levels]
    pair = max(max(r["pairing_defect"], r["hermitian_defect"]) for r in rows)
    inv = [r["inverse_identity_ratio"] for r in rows]
    clu = [r["cluster_fraction"] for r in rows]
    jmp = [r["jump_residual"] for r in rows]
    checks = [
        _check("hermitian_pairing", pair <= 1e-12, pair, 1e-12),
        _check("inverse_identity_decreasing", monotone_decreasing(inv), inv),
        _check("cluster_fraction_increasing", monotone_increasing(clu), clu),
        _check("jump_relation_decreasing", monotone_decreasing(jmp), jmp),
    ]
    return _report("layer", checks, {"levels": rows})


# ---------------------------------------------------------------------------
# critical strengths
# ---------------------------------------------------------------------------

@lru_cache(maxsize=16)
def critical_metrics(spec: SurfaceSpec, level: int, m: float = 1.0) -> dict:
    mesh = build_mesh(spec, level)
    eps = threshold(mesh, m=m)
    prof = compactness_profile(0.0, mesh, m=m)
    out = {
        "level": level, "N": mesh.N, "epsilon": eps,
        "tail_ratio": prof.tail_ratio(),
        "tail_ratio_matrix_index": prof.tail_ratio(int(np.ceil(4 * mesh.N / 2))),
        "factorization": factorization_residual(mesh, m),
        "consistency": consistency_residual(mesh, m),
        "conjugation": conjugation_residual(mesh, m),
        "conjugation_resolved": conjugation_residual(mesh, m, restrict=True),
        "count_plus": near_kernel_count(1, mesh, eps, m=m),
        "count_minus": near_kernel_count(-1, mesh, eps, m=m),
    }
    if mesh.flat.any():
        sm = flat_smoothing_test(mesh, seed=0, m=m)
        out["smoothing_ratio"] = sm.ratio
        if mesh.N <= 2048:
            out["flat_flat_max"] = flat_block_norm(mesh, m)["flat_flat_max"]
    return out


def critical_suite(levels=(1, 2, 3), m: float = 1.0) -> dict:
    sph = [critical_metrics(SPHERE, lv, m) for lv in levels]
    coin = [critical_metrics(COIN, lv, m) for lv in levels]
    tail = [r["tail_ratio"] for r in sph]
    fac = [r["factorization"] for r in sph]
    pm = all(abs(r["count_plus"] - r["count_minus"]) <= 1 for r in sph + coin)
    cc = [r["count_plus"] for r in coin]
    cs = [r["count_plus"] for r in sph]
    exceeds = all(a > b for a, b in zip(cc, cs))
    nondec = all(b >= a for a, b in zip(cc[:-1], cc[1:]))
    checks = [
        _check("tail_ratio_decreasing", monotone_decreasing(tail), tail),
        _check("factorization_decreasing", monotone_decreasing(fac), fac),
        _check("near_kernel_plus_minus", pm, [[r["count_plus"], r["count_minus"]] for r in sph + coin], 1),
        _check("coin_exceeds_sphere_and_nondecreasing", exceeds and nondec, {"coin": cc, "sphere": cs}),
    ]
    return _report("critical", checks, {"sphere": sph, "coin": coin})


# ---------------------------------------------------------------------------
# singular sequences
# ---------------------------------------------------------------------------

def singular_suite(lam: float = 1.7, m: float = 1.0, R: float = 1.0, seed: int = 0) -> dict:
    ns = (2, 4, 8, 16)
    specs = [make_spec(lam, n, m=m, R=R) for n in ns]
    norms = np.array([psi_norm(s) for s in specs])
    res = np.array([residual_norm(s) for s in specs])
    slope = slope_fit(ns, res / norms)
    spread = float(np.ptp(norms) / np.mean(norms))
    rng = np.random.default_rng(seed)
    s = specs[1]
    pts = s.center + rng.uniform(-s.n, s.n, (100, 3))
    errs = [fd_residual_check(s, pts, h) for h in (0.04, 0.02, 0.01)]
    order = float(min(np.log2(errs[0] / errs[1]), np.log2(errs[1] / errs[2])))
    checks = [
        _check("residual_slope", -1.2 <= slope <= -0.8, slope, [-1.2, -0.8]),
        _check("norm_n_independence", spread <= 1e-6, spread, 1e-6),
        _check("fd_agreement_order", order >= 1.8, order, 1.8),
    ]
    return _report("singular", checks, {"n": list(ns), "norms": norms.tolist(), "residuals": res.tolist(),
                                        "fd_errors": errs})


# ---------------------------------------------------------------------------
# spectral cross-validation and Krein resolvent (used by tests and the CLI)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _scans(spec, level, etas, grid_key, m):
    mesh = build_mesh(spec, level)
    return scan_many(etas, mesh, np.asarray(grid_key), m=m)


def spectral_crossvalidation(level: int = 3, etas=(0.5, 1.0, 3.0), *, m: float = 1.0, R: float = 1.0,
                             edge: float = 1e-3, n_grid: int = 301, K: int = 12, tol: float = 1e-3) -> dict:
    spec = SurfaceSpec("sphere", R=R, n=4)
    grid = tuple(np.linspace(-m * (1 - edge), m * (1 - edge), n_grid))
    scans = _scans(spec, level, tuple(float(e) for e in etas), grid, m)
    rows = []
    ok = True
    for eta in etas:
        res = scans[float(eta)]
        orc = merge_roots(oracle_spectrum(R, m, eta, K, edge=edge))
        bem = [(r.lam, r.multiplicity) for r in res.eigenvalues]
        used = set()
        for lam_o, deg in orc:
            j = int(np.argmin([abs(b - lam_o) for b, _ in bem])) if bem else -1
            err = abs(bem[j][0] - lam_o) if j >= 0 else np.inf
            mult = bem[j][1] if j >= 0 else 0
            match = err <= tol * m and abs(mult - deg) <= 1
            ok &= match
            if j >= 0 and err <= tol * m:
                used.add(j)
            rows.append({"eta": eta, "oracle": lam_o, "degeneracy": deg,
                         "bem": bem[j][0] if j >= 0 else None, "multiplicity": mult,
                         "error": float(err), "matched": bool(match)})
        spurious = [bem[j] for j in range(len(bem)) if j not in used]
        ok &= not spurious
        rows.append({"eta": eta, "spurious": spurious,
                     "unresolved_crossings": [(r.lam, r.unresolved_fraction) for r in res.unresolved],
                     "tau": res.tau})
    return {"passed": bool(ok), "rows": rows, "level": level}


@lru_cache(maxsize=8)
def krein_study(level: int, eta: float = 1.0, lam: float = 0.0, m: float = 1.0) -> dict:
    mesh = build_mesh(SPHERE, level)
    src = GaussianSource(center=(0.2, -0.1, 0.15), width=0.15, zeta=(1.0, 0.0, 0.5, 0.0))
    probe = np.array([[0.3, 0.2, -0.1]])
    res = krein_resolvent_apply(eta, lam, src, mesh, probe, m=m, upsample=4)
    jr = krein_jump_residual(res)
    hs = (0.04, 0.02, 0.01)
    pde = [fd_pde_residual(res, src, probe[0], h) for h in hs]
    return {"level": level, "jump_residual": jr["residual"], "pde_residuals": pde,
            "pde_order": float(min(np.log2(pde[0] / pde[1]), np.log2(pde[1] / pde[2]))),
            "smin": res.smin, "value": res.values[0].tolist()}


SUITES = {
    "algebra": algebra_suite,
    "kernel": kernel_suite,
    "layer": layer_suite,
    "critical": critical_suite,
    "singular": singular_suite,
}


def run_suite(name: str, **kw) -> dict:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    t0 = time.perf_counter()
    rep = SUITES[name](**kw)
    rep["runtime_s"] = time.perf_counter() - t0
    return rep
