import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diracshell.surface import (SurfaceSpec, build_mesh, exact_area, load_mesh, mesh_diagnostics,
                                save_mesh, smoothstep5)


@pytest.mark.parametrize("spec", [SurfaceSpec("sphere", R=1.3), SurfaceSpec("ellipsoid", a=1.0, b=0.8, c=1.4),
                                  SurfaceSpec("coin", a=1.0, h=0.3, delta=0.2)])
def test_mesh_basic_invariants(spec):
    mesh = build_mesh(spec, 2)
    rep = mesh_diagnostics(mesh, levels=2)
    assert rep["N"] == mesh.N == (spec.n * 4) * (spec.n * 8)
    assert rep["min_weight"] > 0
    assert rep["normal_unit_residual"] < 1e-12
    assert rep["outward_min"] > 0
    if "implicit_residual" in rep:
        assert rep["implicit_residual"] < 1e-12


def test_sphere_area_converges_fast():
    spec = SurfaceSpec("sphere", R=1.0)
    errs = [abs(build_mesh(spec, lv).area - 4 * np.pi) for lv in (0, 1, 2)]
    assert errs[-1] < 1e-12


def test_ellipsoid_area_error_decreases():
    spec = SurfaceSpec("ellipsoid", a=1.0, b=0.8, c=1.4)
    ref = exact_area(spec)
    errs = [abs(build_mesh(spec, lv).area - ref) for lv in (0, 1, 2)]
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] / ref < 1e-6


def test_coin_area_reference_and_flat_faces():
    spec = SurfaceSpec("coin", a=1.0, h=0.3, delta=0.2)
    mesh = build_mesh(spec, 3)
    assert abs(mesh.area - exact_area(spec)) / exact_area(spec) < 1e-3
    flat = mesh.flat
    assert flat.any()
    # flat panels lie on z = +-h with vertical normals
    assert np.allclose(np.abs(mesh.points[flat, 2]), spec.h)
    assert np.allclose(np.abs(mesh.normals[flat, 2]), 1.0)


@pytest.mark.parametrize("kw", [dict(kind="torus"), dict(kind="sphere", R=-1.0), dict(kind="sphere", n=3),
                                dict(kind="coin", a=1.0, h=0.3, delta=0.5)])
def test_invalid_specs_rejected(kw):
    with pytest.raises(ValueError):
        SurfaceSpec(**kw)


def test_negative_level_rejected():
    with pytest.raises(ValueError):
        build_mesh(SurfaceSpec(), -1)


def test_permuted_mesh_keeps_geometry(rng):
    mesh = build_mesh(SurfaceSpec(), 1)
    perm = rng.permutation(mesh.N)
    pm = mesh.permuted(perm)
    assert np.allclose(pm.points, mesh.points[perm])
    assert np.allclose(pm.mesh_to_grid(pm.points), mesh.points)


def test_save_load_roundtrip(tmp_path):
    mesh = build_mesh(SurfaceSpec("coin", a=1.0, h=0.3, delta=0.2), 1)
    path = tmp_path / "coin.txt"
    save_mesh(mesh, path)
    back = load_mesh(path)
    assert back.N == mesh.N and back.surface_id == mesh.surface_id
    assert np.array_equal(back.points, mesh.points)
    assert np.array_equal(back.weights, mesh.weights)


@given(st.floats(-1, 2))
def test_smoothstep_is_monotone_and_clamped(u):
    v = smoothstep5(np.clip(u, 0, 1))
    assert 0.0 <= v <= 1.0
    assert smoothstep5(np.clip(u, 0, 1)) <= smoothstep5(min(1.0, np.clip(u, 0, 1) + 0.01)) + 1e-15
