import numpy as np
import pytest

from diracshell.algebra import alpha_dot_many
from diracshell.kernel import SpectralPoint, green_kernel_many
from diracshell.layer import (BoundaryDensity, apply_gamma, apply_gamma_star, assemble_M, band_projector,
                              identity_operator, load_operator, normal_operator, numerical_traces,
                              save_operator, scaled, unscaled, upsampled_source, volume_grid)
from diracshell.surface import SurfaceSpec, build_mesh


def test_scaled_roundtrip(sphere1, rng):
    phi = rng.standard_normal((sphere1.N, 4)) + 1j * rng.standard_normal((sphere1.N, 4))
    assert np.allclose(unscaled(sphere1, scaled(sphere1, phi)), phi)


@pytest.mark.parametrize("lam", [0.3 + 0.2j, -0.5 - 1.0j, 2.0 + 0.1j])
def test_hermitian_pairing_exact(sphere1, lam):
    D, Dc = assemble_M(lam, sphere1), assemble_M(np.conj(lam), sphere1)
    assert np.max(np.abs(D.H.data - Dc.data)) <= 1e-12


def test_gap_operator_is_hermitian(sphere1):
    for lam in (-0.9, 0.0, 0.7):
        assert assemble_M(lam, sphere1).hermitian_defect() <= 1e-12


def test_on_band_rejected(sphere1):
    with pytest.raises(ValueError):
        assemble_M(1.5, sphere1)


def test_band_projector_is_orthogonal_projector(sphere1):
    P = band_projector(sphere1)
    for Pj in P:
        assert np.allclose(Pj @ Pj, Pj, atol=1e-12)
        assert np.allclose(Pj, Pj.conj().T, atol=1e-12)


def test_dense_and_fourier_layouts_agree(sphere1):
    Df = assemble_M(0.2, sphere1, layout="fourier")
    Dd = assemble_M(0.2, sphere1, layout="dense")
    assert np.allclose(np.sort(Df.eigvalsh()), np.sort(Dd.eigvalsh()), atol=1e-10)
    c = np.random.default_rng(0).standard_normal(4 * sphere1.N).astype(complex)
    assert np.allclose(Df.apply(c), Dd.apply(c), atol=1e-10)


def test_panel_order_invariance(rng):
    mesh = build_mesh(SurfaceSpec(), 1)
    perm = rng.permutation(mesh.N)
    pm = mesh.permuted(perm)
    A = assemble_M(0.1, mesh, layout="dense").dense()
    B = assemble_M(0.1, pm, layout="dense").dense()
    idx = (4 * perm[:, None] + np.arange(4)).reshape(-1)
    assert np.allclose(B, A[np.ix_(idx, idx)], atol=1e-12)


def test_ellipsoid_uses_dense_layout():
    mesh = build_mesh(SurfaceSpec("ellipsoid", a=1.0, b=0.8, c=1.2), 0)
    D = assemble_M(0.0, mesh)
    assert D.layout == "dense"
    assert D.hermitian_defect() <= 1e-12


def test_inverse_identity_resolved_part_small(sphere1):
    D = assemble_M(0.0, sphere1)
    A = normal_operator(sphere1, D.layout)
    E = (-4.0) * (D @ A @ D @ A) - identity_operator(sphere1, D.layout)
    P = band_projector(sphere1)
    assert max(np.linalg.norm(P[j] @ E.data[j] @ P[j], 2) for j in range(len(P))) < 1e-3


def test_normal_operator_squares_to_identity(sphere1):
    A = normal_operator(sphere1)
    assert np.allclose((A @ A).data, identity_operator(sphere1).data)


def test_apply_gamma_matches_direct_sum(sphere1, rng):
    phi = BoundaryDensity(rng.standard_normal((sphere1.N, 4)) + 0j, sphere1)
    pts = np.array([[0.1, 0.2, -0.1], [2.0, 0.5, 0.3]])
    sp = SpectralPoint(0.4)
    G = green_kernel_many(sp, pts[:, None, :] - sphere1.points[None])
    direct = np.einsum("pnij,n,nj->pi", G, sphere1.weights, phi.values)
    assert np.allclose(apply_gamma(sp, phi, pts).values, direct, atol=1e-12)


def test_upsampled_source_preserves_integral(sphere1):
    vals = np.stack([1 + sphere1.points[:, 2] ** 2] * 4, -1)
    phi = BoundaryDensity(vals, sphere1)
    x, w, v = upsampled_source(phi, 4)
    exact = 4 * np.pi * (1 + 1 / 3)
    assert np.sum(w * v[:, 0]).real == pytest.approx(exact, rel=1e-10)


def test_jump_relation_improves_with_level():
    res, avg = [], []
    for lv in (1, 2):
        mesh = build_mesh(SurfaceSpec(), lv)
        x = mesh.points
        phi = np.stack([1 + x[:, 0], x[:, 1] * x[:, 2], 1j * x[:, 2], 0.5 + x[:, 0] ** 2], -1)
        dens = BoundaryDensity(phi, mesh)
        tp, tm, _ = numerical_traces(lambda p: apply_gamma(0.0, dens, p, upsample=4).values, mesh,
                                     offsets=(0, 1, 2, 3))
        jump = 1j * np.einsum("nij,nj->ni", alpha_dot_many(mesh.normals), tp.values - tm.values) - phi
        w = mesh.weights[:, None]
        res.append(np.sqrt(np.sum(w * np.abs(jump) ** 2) / np.sum(w * np.abs(phi) ** 2)))
        Dphi = unscaled(mesh, assemble_M(0.0, mesh).apply(scaled(mesh, phi)))
        a = 0.5 * (tp.values + tm.values) - Dphi
        avg.append(np.sqrt(np.sum(w * np.abs(a) ** 2) / np.sum(w * np.abs(Dphi) ** 2)))
    assert res[1] < res[0] < 0.5
    # the average of the two traces reproduces the discrete boundary operator
    assert avg[1] < avg[0] < 0.5


def test_traces_need_two_offsets(sphere1):
    with pytest.raises(ValueError):
        numerical_traces(lambda p: p, sphere1, offsets=(0,))


def test_operator_dump_roundtrip(sphere1, tmp_path):
    D = assemble_M(0.0, sphere1, layout="dense")
    for fmt, name in (("npz", "d.npz"), ("txt", "d.txt")):
        save_operator(D, tmp_path / name, fmt)
        M, header = load_operator(tmp_path / name)
        assert np.allclose(M, D.dense())
        assert "sphere" in header


def test_disk_scheme_close_on_smooth_densities(sphere1):
    Dp = assemble_M(0.0, sphere1, scheme="polar", layout="dense")
    Dk = assemble_M(0.0, sphere1, scheme="disk", layout="dense")
    x = sphere1.points
    phi = np.stack([x[:, 2], 0 * x[:, 0], x[:, 0], 1 + 0 * x[:, 0]], -1).astype(complex)
    a = unscaled(sphere1, Dp.apply(scaled(sphere1, phi)))
    b = unscaled(sphere1, Dk.apply(scaled(sphere1, phi)))
    assert np.linalg.norm(a - b) / np.linalg.norm(a) < 0.2


def test_smooth_field_has_no_jump(sphere1):
    const = np.array([1.0, 2.0j, -0.5, 0.25])
    tp, tm, flags = numerical_traces(lambda p: np.tile(const, (len(p), 1)), sphere1)
    assert np.allclose(tp.values, const) and np.allclose(tm.values, const)
    assert not flags.any()


def test_zero_density_gives_zero_field(sphere1):
    phi = BoundaryDensity(np.zeros((sphere1.N, 4)), sphere1)
    assert np.all(apply_gamma(0.3, phi, np.array([[0.1, 0, 0], [3, 0, 0]])).values == 0)


def test_gamma_decays_at_rate_m_in_gap(sphere1):
    phi = BoundaryDensity(np.tile([1.0, 0, 0, 0], (sphere1.N, 1)), sphere1)
    m = 1.3
    r = np.linspace(4.0, 9.0, 6)
    u = np.linalg.norm(apply_gamma(0.0, phi, np.outer(r, [0.6, 0.0, 0.8]), m=m).values, axis=1)
    slope = np.polyfit(r, np.log(u * r), 1)[0]
    assert slope == pytest.approx(-m, abs=0.05)


def test_gamma_star_is_volume_adjoint(sphere1, rng):
    lam = 0.3 + 0.2j
    P, W = volume_grid(sphere1, n=16, pad=0.5, exclude=1.0)
    f = np.exp(-np.sum((P - [0.3, 0.2, -0.1]) ** 2, axis=1) / 0.5)[:, None] * np.array([1, 0.5j, 0, 1])
    phi = BoundaryDensity(rng.standard_normal((sphere1.N, 4)) + 0j, sphere1)
    u = apply_gamma(lam, phi, P).values
    lhs = np.sum(W[:, None] * np.conj(u) * f)
    gs = apply_gamma_star(lam, f, P, W, sphere1).values
    rhs = np.sum(sphere1.weights[:, None] * np.conj(phi.values) * gs)
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)
