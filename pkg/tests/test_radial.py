import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import spherical_in, spherical_kn

from diracshell.radial import (RadialSector, bessel_i_ratio, bessel_k_ratio, merge_roots,
                               oracle_spectrum, oracle_to_json, radial_matching_det,
                               radial_matching_det_unscaled, sector_orders, sector_roots)

# frozen oracle values (R = m = 1), roots to 1e-9
FROZEN = {
    0.5: [(-0.9979604455, 1)],
    1.0: [(-0.6526579386, 1)],
    3.0: [(0.3338701896, -1), (0.6565345671, -2), (0.7862113423, 1)],
    -1.0: [(0.6526579386, -1)],
}


@pytest.mark.parametrize("eta", sorted(FROZEN))
def test_frozen_roots(eta):
    got = [(r.lam, r.kappa_so) for r in oracle_spectrum(1.0, 1.0, eta, K=12)]
    assert len(got) == len(FROZEN[eta])
    for (lam, k), (lam0, k0) in zip(got, FROZEN[eta]):
        assert k == k0
        assert lam == pytest.approx(lam0, abs=1e-9)


def test_degeneracy_is_twice_abs_kappa():
    for r in oracle_spectrum(1.0, 1.0, 3.0, K=4):
        assert r.degeneracy == 2 * abs(r.kappa_so)


def test_orders():
    assert sector_orders(1) == (1, 0)
    assert sector_orders(-1) == (0, 1)
    assert sector_orders(3) == (3, 2)
    with pytest.raises(ValueError):
        sector_orders(0)


@given(st.integers(0, 30), st.sampled_from([-1, 1]), st.floats(0.01, 40.0))
def test_bessel_ratios_match_scipy(l, d, x):
    lb = l + d
    if lb < 0:
        return
    ri = bessel_i_ratio(l, lb, x)
    rk = bessel_k_ratio(l, lb, x)
    with np.errstate(all="ignore"):
        ri0 = spherical_in(lb, x) / spherical_in(l, x)
        rk0 = spherical_kn(lb, x) / spherical_kn(l, x)
    if np.isfinite(ri0) and spherical_in(l, x) > 1e-250:
        assert ri == pytest.approx(ri0, rel=1e-10)
    if np.isfinite(rk0) and spherical_kn(l, x) < 1e250:
        assert rk == pytest.approx(rk0, rel=1e-10)


@given(st.integers(-8, 8).filter(bool), st.floats(-0.99, 0.99), st.floats(-4, 4).filter(lambda e: abs(e) > 0.01))
def test_scaled_and_unscaled_determinants_share_sign(k, lam, eta):
    sec = RadialSector(k, 1.0, 1.0, eta)
    a = radial_matching_det(lam, sec)
    b = radial_matching_det_unscaled(lam, sec)
    if abs(a) > 1e-8:
        assert np.sign(a) == np.sign(b)


def test_determinant_continuous_on_grid():
    sec = RadialSector(-1, 1.0, 1.0, 1.0)
    steps = []
    for n in (5001, 10001):
        lams = np.linspace(-0.999, 0.999, n)
        d = np.array([radial_matching_det(x, sec) for x in lams])
        assert np.all(np.isfinite(d))
        steps.append(np.max(np.abs(np.diff(d))))
    # no jumps: the largest increment shrinks with the spacing (a jump would keep it fixed)
    assert steps[1] / steps[0] < 0.7


def test_small_eta_has_no_gap_roots():
    assert oracle_spectrum(1.0, 1.0, 1e-3, K=12) == []


def test_roots_stable_under_halved_tolerance():
    a = oracle_spectrum(1.0, 1.0, 3.0, K=6, xtol=1e-13)
    b = oracle_spectrum(1.0, 1.0, 3.0, K=6, xtol=5e-14)
    assert all(abs(x.lam - y.lam) < 1e-9 for x, y in zip(a, b))


def test_eta_sign_mirror_symmetry():
    a = sorted(-r.lam for r in oracle_spectrum(1.0, 1.0, 1.5, K=8))
    b = sorted(r.lam for r in oracle_spectrum(1.0, 1.0, -1.5, K=8))
    assert np.allclose(a, b, atol=1e-9)


def test_roots_move_with_eta_within_sector():
    # report-style monotonicity check on a sampled range for kappa = 1
    lams = [sector_roots(RadialSector(1, 1.0, 1.0, e))[0] for e in (0.8, 1.0, 1.2, 1.4)]
    assert np.all(np.diff(lams) > 0)


def test_lambda_outside_gap_rejected():
    with pytest.raises(ValueError):
        radial_matching_det(1.0, RadialSector(1))
    with pytest.raises(ValueError):
        RadialSector(0)


def test_merge_and_json():
    roots = oracle_spectrum(1.0, 1.0, 3.0, K=4)
    merged = merge_roots(roots)
    assert [d for _, d in merged] == [2, 4, 2]
    doc = json.loads(oracle_to_json(roots, R=1.0, m=1.0, eta=3.0, K=4))
    assert doc["eta"] == 3.0 and len(doc["roots"]) == 3
    assert set(doc["roots_per_sector"]) == {"-1", "-2", "1"}
