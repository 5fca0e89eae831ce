"""Rotation-group numerics: exp/log, chart matrices, action derivative."""
import numpy as np
import pytest
import scipy.linalg

from manikf.errors import ContractViolationError
from manikf.so3 import (
    mat_a,
    mat_a_inv,
    rotation_action_jacobian,
    skew,
    so3_exp,
    so3_log,
    vee,
)

from helpers import assert_close, fd_jacobian


def random_rotvec(rng, max_angle=np.pi - 1e-3):
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v) * rng.uniform(0.0, max_angle)


def test_skew_vee_roundtrip():
    v = np.array([1.0, -2.0, 3.0])
    k = skew(v)
    assert np.allclose(k, -k.T)
    assert np.allclose(vee(k), v)
    assert np.allclose(k @ np.array([0.5, 0.1, -0.4]), np.cross(v, [0.5, 0.1, -0.4]))


def test_exp_zero_is_identity():
    assert np.allclose(so3_exp(np.zeros(3)), np.eye(3))


def test_exp_matches_matrix_exponential():
    rng = np.random.default_rng(0)
    for _ in range(100):
        w = random_rotvec(rng)
        assert_close(so3_exp(w), scipy.linalg.expm(skew(w)), tol=1e-9)


def test_exp_quarter_turn():
    r = so3_exp(np.array([np.pi / 2, 0.0, 0.0]))
    assert np.allclose(r, [[1, 0, 0], [0, 0, -1], [0, 1, 0]], atol=1e-12)


def test_exp_pi_about_x():
    assert np.allclose(so3_exp(np.array([np.pi, 0, 0])), np.diag([1.0, -1.0, -1.0]))


def test_log_roundtrip_small():
    w = np.array([0.3, 0.0, 0.0])
    assert np.allclose(so3_log(so3_exp(w)), w, atol=1e-12)


def test_log_roundtrip_random():
    rng = np.random.default_rng(1)
    for _ in range(300):
        w = random_rotvec(rng)
        assert np.allclose(so3_log(so3_exp(w)), w, atol=1e-9)


def test_log_near_pi():
    rng = np.random.default_rng(2)
    for _ in range(200):
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        for angle in (np.pi - 1e-5, np.pi - 1e-9, np.pi):
            w = angle * axis
            r = so3_exp(w)
            back = so3_log(r)
            # at exactly pi the sign of the axis is a free choice
            assert min(
                np.linalg.norm(back - w), np.linalg.norm(back + w)
            ) < 1e-6, (angle, axis)
            assert_close(so3_exp(back), r, tol=1e-9)


def test_log_tiny_angles():
    rng = np.random.default_rng(3)
    for _ in range(100):
        w = rng.standard_normal(3) * 1e-6
        assert np.allclose(so3_log(so3_exp(w)), w, atol=1e-15)


def test_log_rejects_non_rotation():
    with pytest.raises(ContractViolationError):
        so3_log(np.eye(3) * 1.1)
    with pytest.raises(ContractViolationError):
        so3_log(np.diag([1.0, 1.0, -1.0]))  # det -1


def test_mat_a_zero():
    assert np.allclose(mat_a(np.zeros(3)), np.eye(3))
    assert np.allclose(mat_a_inv(np.zeros(3)), np.eye(3))


def test_mat_a_inverse_product():
    rng = np.random.default_rng(4)
    for _ in range(200):
        u = random_rotvec(rng, max_angle=np.pi - 0.01)
        assert_close(mat_a(u) @ mat_a_inv(u), np.eye(3), tol=1e-9)


def test_mat_a_perturbation_identity():
    # Exp(u + d) ~ Exp(u) (I + skew(A(u)^T d))
    rng = np.random.default_rng(5)
    for _ in range(100):
        u = random_rotvec(rng, max_angle=2.5)
        d = rng.standard_normal(3) * 1e-7
        lhs = so3_exp(u + d)
        rhs = so3_exp(u) @ (np.eye(3) + skew(mat_a(u).T @ d))
        assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_mat_a_series_branch_continuity():
    # series branch (just below the switch) must agree with the closed form
    u = 0.99e-4 * np.array([1.0, 2.0, -1.0]) / np.sqrt(6.0)
    theta = np.linalg.norm(u)
    k = skew(u)
    closed_a = (
        np.eye(3)
        + (1.0 - np.cos(theta)) / theta**2 * k
        + (1.0 - np.sin(theta) / theta) / theta**2 * (k @ k)
    )
    # naive closed form loses ~eps/theta^2 relative accuracy to cancellation,
    # so 1e-12 bounds its own error, not the series'
    assert np.max(np.abs(mat_a(u) - closed_a)) < 1e-12
    closed_exp = scipy.linalg.expm(k)
    assert np.max(np.abs(so3_exp(u) - closed_exp)) < 1e-12
    assert_close(mat_a(u) @ mat_a_inv(u), np.eye(3), tol=1e-12)


def test_rotation_action_jacobian_identity_cases():
    e3 = np.array([0.0, 0.0, 1.0])
    assert np.allclose(rotation_action_jacobian(np.eye(3), e3), -skew(e3))
    assert np.allclose(
        rotation_action_jacobian(so3_exp(np.array([0.4, -0.2, 0.9])), np.zeros(3)),
        np.zeros((3, 3)),
    )


def test_rotation_action_jacobian_fd():
    rng = np.random.default_rng(6)
    for _ in range(100):
        x = so3_exp(random_rotvec(rng))
        a = rng.standard_normal(3)
        fd = fd_jacobian(lambda u: (x @ so3_exp(u)) @ a, np.zeros(3))
        assert np.max(np.abs(fd - rotation_action_jacobian(x, a))) < 1e-6
