import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diracshell.singular import (SingularSequenceSpec, chi, chi_prime, eval_psi, fd_residual_check,
                                 make_spec, psi_norm, psi_norm_closed_form, residual_norm,
                                 residual_table_csv, slope_fit, weak_null_check)

band = st.floats(1.0, 5.0).flatmap(lambda a: st.sampled_from([a, -a]))


@given(st.floats(0, 2))
def test_cutoff_profile(r):
    v = chi(r)
    assert 0 <= v <= 1
    if r <= 0.5:
        assert v == 1
    if r >= 1:
        assert v == 0


def test_cutoff_derivative_matches_fd():
    r = np.linspace(0.52, 0.98, 17)
    h = 1e-6
    assert np.allclose(chi_prime(r), (chi(r + h) - chi(r - h)) / (2 * h), atol=1e-6)


@given(band, st.sampled_from([2, 4, 8]))
def test_norm_is_n_independent(lam, n):
    s = make_spec(lam, n)
    assert psi_norm(s) == pytest.approx(psi_norm_closed_form(s), rel=1e-8)


@given(band)
def test_residual_ratio_slope(lam):
    ns = (2, 4, 8, 16)
    vals = [residual_norm(make_spec(lam, n)) / psi_norm(make_spec(lam, n)) for n in ns]
    assert -1.2 <= slope_fit(ns, vals) <= -0.8


def test_closed_form_residual_matches_fd(rng):
    s = make_spec(1.7, 4)
    pts = s.center + rng.uniform(-4, 4, (30, 3))
    e = [fd_residual_check(s, pts, h) for h in (0.04, 0.02)]
    assert np.log2(e[0] / e[1]) > 1.8


def test_supports_leave_enclosing_ball():
    s = make_spec(2.0, 2, R=1.0)
    assert np.linalg.norm(s.center) - s.n > s.R


def test_disjoint_supports_are_orthogonal():
    rep = weak_null_check(make_spec(1.5, 4), make_spec(1.5, 8))
    assert rep.disjoint and abs(rep.inner_product) == 0.0
    touch = weak_null_check(make_spec(1.5, 2), make_spec(1.5, 3))
    assert touch.separation == touch.radius_sum and touch.disjoint


def test_fallback_spinor_at_band_edge():
    s = make_spec(-1.0, 2)
    assert s.zeta != (1, 0, 0, 0)
    assert np.linalg.norm(s.v) > 0


@pytest.mark.parametrize("kw", [dict(lam=0.5), dict(lam=2.0, n=1), dict(lam=2.0, m=0.0),
                                dict(lam=-1.0, zeta=(1, 0, 0, 0))])
def test_invalid_specs(kw):
    with pytest.raises(ValueError):
        SingularSequenceSpec(**kw)


def test_psi_support():
    s = make_spec(1.3, 4)
    assert np.all(eval_psi(s, s.center + np.array([[4.01, 0, 0]])) == 0)


def test_table():
    lines = residual_table_csv(1.5).strip().split("\n")
    assert lines[0] == "n,psi_norm,residual_norm,ratio" and len(lines) == 5
