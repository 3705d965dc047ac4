import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diracshell.algebra import (ALPHA, BETA, I4, PhysicalParams, alpha_dot, alpha_dot_many,
                                band_projector_factor, basis_spinor, check_anticommutation,
                                dirac_matrices, spin_rotation_z)
from diracshell.kernel import green_kernel

vec3 = st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3)


def test_clifford_relations_exact():
    assert check_anticommutation() <= 1e-15


def test_matrices_hermitian_and_readonly():
    for M in (*ALPHA, BETA):
        assert np.array_equal(M, M.conj().T)
    with pytest.raises(ValueError):
        BETA[0, 0] = 2.0
    a1, a2, a3, b = dirac_matrices()
    a1[0, 0] = 5.0  # copies may be modified
    assert ALPHA[0][0, 0] == 0


def test_dirac_representation_blocks():
    assert np.array_equal(BETA, np.diag([1, 1, -1, -1]).astype(complex))
    for A in ALPHA:
        assert np.all(A[:2, :2] == 0) and np.all(A[2:, 2:] == 0)


@given(vec3)
def test_alpha_dot_squares_to_norm(x):
    x = np.array(x)
    A = alpha_dot(x)
    assert np.allclose(A @ A, np.dot(x, x) * I4, atol=1e-12 * max(1.0, np.dot(x, x)))
    assert np.allclose(A, A.conj().T)


@given(vec3, vec3)
def test_alpha_dot_anticommutator(x, y):
    x, y = np.array(x), np.array(y)
    A, B = alpha_dot(x), alpha_dot(y)
    scale = max(1.0, np.linalg.norm(x) * np.linalg.norm(y))
    assert np.allclose(A @ B + B @ A, 2 * np.dot(x, y) * I4, atol=1e-12 * scale)


def test_alpha_dot_many_matches_single(rng):
    x = rng.standard_normal((7, 3))
    many = alpha_dot_many(x)
    for k in range(7):
        assert np.allclose(many[k], alpha_dot(x[k]))
    with pytest.raises(ValueError):
        alpha_dot(np.zeros(2))


@given(st.floats(1.0, 20.0), st.sampled_from([-1, 1]), st.floats(0.5, 3.0))
def test_band_factors_multiply_to_zero(lam_over_m, sgn, m):
    lam = sgn * lam_over_m * m
    P = band_projector_factor(lam, 1, m) @ band_projector_factor(lam, -1, m)
    assert np.linalg.norm(P) <= 1e-13 * max(1.0, lam * lam)


def test_band_factor_rejects_gap_points():
    with pytest.raises(ValueError):
        band_projector_factor(0.5, 1)
    with pytest.raises(ValueError):
        band_projector_factor(2.0, 0)


def test_physical_params_validation():
    PhysicalParams(1.0, -2.0)
    with pytest.raises(ValueError):
        PhysicalParams(0.0, 1.0)
    with pytest.raises(ValueError):
        PhysicalParams(1.0, float("inf"))


def test_spin_rotation_full_turn_is_minus_identity():
    assert np.allclose(spin_rotation_z(2 * np.pi), -np.ones(4))


@given(st.floats(0, 2 * np.pi), st.floats(-0.9, 0.9))
def test_kernel_rotation_covariance(psi, lam):
    x = np.array([0.3, -0.7, 0.4])
    c, s = np.cos(psi), np.sin(psi)
    Rx = np.array([c * x[0] - s * x[1], s * x[0] + c * x[1], x[2]])
    U = np.diag(spin_rotation_z(psi))
    assert np.allclose(U @ green_kernel(lam, x) @ U.conj().T, green_kernel(lam, Rx), atol=1e-13)


def test_basis_spinor():
    assert np.array_equal(basis_spinor(2), np.array([0, 0, 1, 0], dtype=complex))
