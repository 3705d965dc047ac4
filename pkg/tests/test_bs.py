import json

import numpy as np
import pytest

from diracshell.bs import (GaussianSource, NumericalRefusal, bs_matrix, critical_scan, default_grid,
                           fd_pde_residual, free_resolvent, free_resolvent_quadrature,
                           krein_resolvent_apply, scan_gap, scan_many, threshold)
from diracshell.kernel import SpectralPoint
from diracshell.surface import SurfaceSpec, build_mesh

ORACLE_ETA1 = -0.6526579386


def test_eta_zero_names_free_operator(sphere1):
    with pytest.raises(ValueError, match="free operator"):
        bs_matrix(0.0, 0.0, sphere1)
    with pytest.raises(ValueError, match="free operator"):
        scan_gap(0.0, sphere1)


def test_critical_form_is_normalised(sphere1):
    B = bs_matrix(2.0, 0.0, sphere1)
    assert B.critical == 1 and B.tag == "I+2D"
    Bm = bs_matrix(-2.0, 0.0, sphere1)
    assert Bm.tag == "I-2D"
    raw = bs_matrix(2.0, 0.0, sphere1, normalise_critical=False)
    assert np.allclose(2 * raw.op.data, B.op.data)
    assert B.hermitian_defect() <= 1e-12


def test_threshold_shrinks_with_level():
    taus = [threshold(build_mesh(SurfaceSpec(), lv)) for lv in (1, 2)]
    assert taus[1] < taus[0] < 1e-2


def test_scan_finds_oracle_root_level1(sphere1):
    res = scan_gap(1.0, sphere1, np.linspace(-0.95, 0.95, 61))
    assert len(res.eigenvalues) == 1
    r = res.eigenvalues[0]
    assert r.lam == pytest.approx(ORACLE_ETA1, abs=1e-4)
    assert r.multiplicity == 2 and r.resolved
    assert r.smin < res.tau


def test_scan_outputs(sphere1):
    res = scan_gap(1.0, sphere1, np.linspace(-0.9, 0.9, 11))
    lines = res.to_csv().strip().split("\n")
    assert lines[0] == "lambda,s_min,eta,tau" and len(lines) == 12
    doc = json.loads(res.to_json())
    assert doc["eta"] == 1.0 and doc["n_samples"] == 11


def test_scan_many_matches_single(sphere1):
    grid = np.linspace(-0.9, 0.9, 31)
    many = scan_many((1.0, -1.0), sphere1, grid)
    single = scan_gap(-1.0, sphere1, grid)
    assert np.allclose(many[-1.0].roots(), single.roots())
    assert np.allclose(many[-1.0].roots(), -many[1.0].roots(), atol=1e-6)


def test_grid_outside_gap_rejected(sphere1):
    with pytest.raises(ValueError):
        scan_gap(1.0, sphere1, np.array([0.0, 1.0]))
    assert default_grid().max() < 1


def test_critical_scan_sign_validation(sphere1):
    with pytest.raises(ValueError):
        critical_scan(0, sphere1)


# ---- Gaussian source -----------------------------------------------------

@pytest.mark.parametrize("lam", [0.0, 0.5, 0.3 + 0.4j, 2.0 + 0.5j])
@pytest.mark.parametrize("x", [(0.05, -0.02, 0.1), (0.9, 0.3, -0.2), (2.5, 0.5, 0.0)])
def test_gaussian_closed_form_matches_quadrature(lam, x):
    src = GaussianSource((0.1, 0.0, 0.05), 0.15, (1.0, 0.5j, 0.0, -0.3))
    a = free_resolvent(lam, src, np.array([x]))[0]
    b = free_resolvent_quadrature(lam, src, np.array(x))
    assert np.linalg.norm(a - b) <= 1e-8 * max(1.0, np.linalg.norm(b))


def test_free_resolvent_solves_pde():
    src = GaussianSource((0.0, 0.0, 0.0), 0.2, (1.0, 0.0, 0.0, 1.0))
    sp = SpectralPoint(0.4)
    x = np.array([0.15, -0.1, 0.2])
    from diracshell.kernel import fd_dirac_apply

    errs = [np.linalg.norm(fd_dirac_apply(lambda y: free_resolvent(sp, src, y[None])[0], x, h, sp)
                           - src(x[None])[0]) for h in (0.02, 0.01)]
    assert np.log2(errs[0] / errs[1]) > 1.8


def test_zero_source_gives_zero_field(sphere1):
    src = GaussianSource(zeta=(0, 0, 0, 0))
    assert src.is_zero
    res = krein_resolvent_apply(1.0, 0.0, src, sphere1, np.array([[0.1, 0.2, 0.3]]))
    assert np.all(res.values == 0)


def test_source_validation():
    with pytest.raises(ValueError):
        GaussianSource(width=0.0)


# ---- Krein formula -------------------------------------------------------

def test_krein_refuses_at_eigenvalue(sphere1):
    src = GaussianSource((0.2, -0.1, 0.15))
    lam = scan_gap(1.0, sphere1, np.linspace(-0.95, 0.95, 61)).eigenvalues[0].lam
    with pytest.raises(NumericalRefusal):
        krein_resolvent_apply(1.0, lam, src, sphere1, np.zeros((1, 3)))


def test_krein_pde_residual_second_order(sphere1):
    src = GaussianSource((0.2, -0.1, 0.15), 0.15, (1.0, 0.0, 0.5, 0.0))
    x = np.array([0.3, 0.2, -0.1])
    res = krein_resolvent_apply(1.0, 0.0, src, sphere1, x[None])
    e = [fd_pde_residual(res, src, x, h) for h in (0.04, 0.02, 0.01)]
    assert np.log2(e[0] / e[1]) > 1.8 and np.log2(e[1] / e[2]) > 1.8


def test_krein_field_outside_decays(sphere1):
    src = GaussianSource((0.0, 0.0, 0.0))
    res = krein_resolvent_apply(0.5, 0.0, src, sphere1, np.array([[3.0, 0, 0], [6.0, 0, 0]]))
    a, b = np.linalg.norm(res.values, axis=1)
    assert b < a * np.exp(-2.0)


def test_critical_branch_runs_on_resolved_mesh():
    mesh = build_mesh(SurfaceSpec(), 2)
    src = GaussianSource((0.2, -0.1, 0.15))
    res = krein_resolvent_apply(2.0, 0.3, src, mesh, np.array([[0.3, 0.2, -0.1]]))
    assert res.meta["form"] == "I+2D"
    assert np.all(np.isfinite(res.values))
    assert res.smin >= res.meta["tau"]


def test_critical_branch_refused_on_coarse_mesh(sphere1):
    # at level 1 the smallest singular value of I + 2 D(0.3) is a grid-scale mode below tau
    with pytest.raises(NumericalRefusal):
        krein_resolvent_apply(2.0, 0.3, GaussianSource(), sphere1, np.zeros((1, 3)))


def test_weak_coupling_has_no_gap_eigenvalue(sphere1):
    res = scan_gap(0.01, sphere1, np.linspace(-0.9, 0.9, 41))
    assert len(res.eigenvalues) == 0 and len(res.unresolved) == 0
    assert min(s for _, s in res.samples) > res.tau


def test_bs_matrix_hermitian_in_gap(sphere1):
    assert bs_matrix(1.0, 0.4, sphere1).hermitian_defect() <= 1e-12


def test_charge_conjugation_like_symmetry(sphere1):
    grid = np.linspace(-0.95, 0.95, 61)
    a = scan_gap(3.0, sphere1, grid)
    b = scan_gap(-3.0, sphere1, grid)
    assert np.allclose(sorted(a.roots()), sorted(-b.roots()), atol=1e-5)
