"""Filter-level tests: textbook Kalman equivalence, prediction charts,
iterated-update behaviour, and failure modes."""
import numpy as np
import pytest

from manikf.errors import DimensionError, UpdateSolverError
from manikf.filter import (
    FilterState,
    SystemModel,
    UpdateConfig,
    compute_G,
    compute_L,
    predict,
    update,
)
from manikf.manifolds import SO3, Euclidean, compound
from manikf.so3 import skew, so3_exp

from helpers import assert_close


class TextbookKF:
    """Plain linear-Gaussian Kalman filter, straight out of the book."""

    def __init__(self, x, p):
        self.x = np.asarray(x, dtype=float)
        self.p = np.asarray(p, dtype=float)

    def predict(self, f, q):
        self.x = f @ self.x
        self.p = f @ self.p @ f.T + q

    def update(self, z, h, r):
        s = h @ self.p @ h.T + r
        k = self.p @ h.T @ np.linalg.inv(s)
        self.x = self.x + k @ (z - h @ self.x)
        self.p = (np.eye(len(self.x)) - k @ h) @ self.p


def _linear_model(a, c, n, m):
    """x' = x + dt*(A x + u + w), z = C x + v on Euclidean(n)."""
    return SystemModel(
        manifold=Euclidean(n),
        f=lambda x, u, w: a @ x + u + w,
        df_dx=lambda x, u: a,
        df_dw=lambda x, u: np.eye(n),
        noise_dim=n,
        h=lambda x, v, ctx: c @ x + v,
        dh_dx=lambda x, ctx: c,
        dh_dv=lambda x, ctx: np.eye(m),
        meas_noise_dim=m,
    )


@pytest.mark.parametrize("nmax", [0, 1, 4])
@pytest.mark.parametrize("gain_form", ["innovation", "information"])
def test_linear_gaussian_matches_textbook(nmax, gain_form):
    rng = np.random.default_rng(7)
    n, m, dt = 4, 2, 0.1
    a = 0.3 * rng.standard_normal((n, n))
    c = rng.standard_normal((m, n))
    q = np.diag(rng.uniform(0.01, 0.1, n))
    r = np.diag(rng.uniform(0.05, 0.2, m))
    model = _linear_model(a, c, n, m)
    cfg = UpdateConfig(max_iterations=nmax, gain_form=gain_form)

    p0 = np.diag(rng.uniform(0.5, 2.0, n))
    x0 = rng.standard_normal(n)
    state = FilterState(x0.copy(), p0.copy())
    oracle = TextbookKF(x0, p0)
    f_mat = np.eye(n) + dt * a
    q_eff = dt * dt * q

    for _ in range(100):
        u = rng.standard_normal(n)
        state = predict(model, state, u, dt, q)
        oracle.predict(f_mat, q_eff)
        oracle.x = oracle.x + dt * u
        z = rng.standard_normal(m)
        state, diag = update(model, state, z, r, config=cfg)
        oracle.update(z, c, r)
        assert_close(state.x, oracle.x, tol=1e-9, floor=1e-9)
        assert_close(state.P, oracle.p, tol=1e-9, floor=1e-9)
        # a linear problem is solved by the very first gain
        assert diag.iterations <= 1
        assert nmax == 0 or diag.converged


def test_predict_zero_velocity_is_identity():
    n = 3
    model = _linear_model(np.zeros((n, n)), np.eye(n), n, n)
    p0 = np.diag([1.0, 2.0, 3.0])
    state = FilterState(np.array([1.0, -2.0, 0.5]), p0.copy())
    out = predict(model, state, np.zeros(n), 0.25, np.zeros((n, n)))
    assert_close(out.x, state.x, tol=1e-15, floor=1e-15)
    assert_close(out.P, p0, tol=1e-15, floor=1e-15)


def test_predict_rejects_wrong_q_shape():
    model = _linear_model(np.zeros((2, 2)), np.eye(2), 2, 2)
    state = FilterState(np.zeros(2), np.eye(2))
    with pytest.raises(DimensionError):
        predict(model, state, np.zeros(2), 0.1, np.eye(3))


def test_compute_g_rotation_transport():
    # moving the estimate by dx transports the error chart by Exp(-dx)
    man = SO3()
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = man.boxplus(SO3.from_matrix(np.eye(3)), rng.standard_normal(3))
        dx = 0.5 * rng.standard_normal(3)
        gx, gf = compute_G(man, x, dx)
        assert_close(gx, so3_exp(-dx), tol=1e-12)


def _so3_vector_model(refs):
    """Attitude-only model: z stacks R^T r_i for fixed reference vectors."""
    man = SO3()
    m = 3 * len(refs)

    def h(x, v, ctx):
        r = SO3.to_matrix(x)
        return np.concatenate([r.T @ a for a in refs]) + v

    def dh_dx(x, ctx):
        r = SO3.to_matrix(x)
        return np.vstack([skew(r.T @ a) for a in refs])

    return SystemModel(
        manifold=man,
        f=lambda x, u, w: u + w,
        df_dx=lambda x, u: np.zeros((3, 3)),
        df_dw=lambda x, u: np.eye(3),
        noise_dim=3,
        h=h,
        dh_dx=dh_dx,
        dh_dv=lambda x, ctx: np.eye(m),
        meas_noise_dim=m,
    )


def test_iterated_update_converges_on_attitude():
    refs = [np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0])]
    model = _so3_vector_model(refs)
    rng = np.random.default_rng(11)
    for _ in range(10):
        true_rot = so3_exp(rng.standard_normal(3))
        z = np.concatenate([true_rot.T @ a for a in refs])
        x0 = SO3.from_matrix(true_rot @ so3_exp(0.3 * rng.standard_normal(3)))
        state = FilterState(x0, 1.0 * np.eye(3))
        cfg = UpdateConfig(max_iterations=15, convergence_tol=1e-12, track_cost=True)
        out, diag = update(model, state, z, 1e-8 * np.eye(6), config=cfg)
        assert diag.converged
        est = SO3.to_matrix(out.x)
        assert np.max(np.abs(est - true_rot)) < 1e-5
        # relinearization should not increase the Gauss-Newton cost
        costs = np.array(diag.cost_trace)
        assert np.all(np.diff(costs) <= 1e-9 + 0.05 * costs[:-1])


def test_update_respects_iteration_cap():
    refs = [np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0])]
    model = _so3_vector_model(refs)
    true_rot = so3_exp(np.array([0.4, -0.3, 0.9]))
    z = np.concatenate([true_rot.T @ a for a in refs])
    x0 = SO3.from_matrix(true_rot @ so3_exp(np.array([0.3, 0.2, -0.25])))
    for nmax in (0, 1, 2, 3):
        state = FilterState(x0.copy(), np.eye(3))
        _, diag = update(
            model, state, z, 1e-8 * np.eye(6),
            config=UpdateConfig(max_iterations=nmax, convergence_tol=1e-14),
        )
        assert diag.iterations <= nmax
        if nmax == 0:
            # single linearization: the prior chart is the update chart
            assert diag.j_condition == 1.0


def test_covariance_reset_jacobian_near_identity():
    man = SO3()
    rng = np.random.default_rng(5)
    for _ in range(50):
        x = SO3.from_matrix(so3_exp(rng.standard_normal(3)))
        dxo = 10.0 ** rng.uniform(-6, -2) * _unit3(rng)
        lmat = compute_L(man, x, dxo)
        assert np.linalg.norm(lmat - np.eye(3)) <= 10.0 * np.linalg.norm(dxo)


def _unit3(rng):
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def test_compound_update_decouples_independent_blocks():
    # two independent Euclidean blocks filtered jointly (block-diagonal
    # everything) must agree with filtering each block on its own
    rng = np.random.default_rng(19)
    n1, n2 = 2, 3
    a1 = 0.2 * rng.standard_normal((n1, n1))
    a2 = 0.2 * rng.standard_normal((n2, n2))
    c1 = rng.standard_normal((1, n1))
    c2 = rng.standard_normal((2, n2))
    m1 = _linear_model(a1, c1, n1, 1)
    m2 = _linear_model(a2, c2, n2, 2)

    man = compound(Euclidean(n1), Euclidean(n2))
    a = np.zeros((n1 + n2, n1 + n2))
    a[:n1, :n1], a[n1:, n1:] = a1, a2
    c = np.zeros((3, n1 + n2))
    c[:1, :n1], c[1:, n1:] = c1, c2
    joint = SystemModel(
        manifold=man,
        f=lambda x, u, w: a @ x + u + w,
        df_dx=lambda x, u: a,
        df_dw=lambda x, u: np.eye(n1 + n2),
        noise_dim=n1 + n2,
        h=lambda x, v, ctx: c @ x + v,
        dh_dx=lambda x, ctx: c,
        dh_dv=lambda x, ctx: np.eye(3),
        meas_noise_dim=3,
    )

    q1, q2 = np.diag([0.02, 0.03]), np.diag([0.01, 0.04, 0.02])
    r1, r2 = np.array([[0.1]]), np.diag([0.2, 0.15])
    qj = np.zeros((n1 + n2, n1 + n2))
    qj[:n1, :n1], qj[n1:, n1:] = q1, q2
    rj = np.zeros((3, 3))
    rj[:1, :1], rj[1:, 1:] = r1, r2

    s1 = FilterState(rng.standard_normal(n1), np.eye(n1))
    s2 = FilterState(rng.standard_normal(n2), 2.0 * np.eye(n2))
    sj = FilterState(np.concatenate([s1.x, s2.x]),
                     np.diag(np.concatenate([np.ones(n1), 2.0 * np.ones(n2)])))
    dt = 0.05
    for _ in range(40):
        u1, u2 = rng.standard_normal(n1), rng.standard_normal(n2)
        s1 = predict(m1, s1, u1, dt, q1)
        s2 = predict(m2, s2, u2, dt, q2)
        sj = predict(joint, sj, np.concatenate([u1, u2]), dt, qj)
        z1, z2 = rng.standard_normal(1), rng.standard_normal(2)
        s1, _ = update(m1, s1, z1, r1)
        s2, _ = update(m2, s2, z2, r2)
        sj, _ = update(joint, sj, np.concatenate([z1, z2]), rj)
        assert_close(sj.x, np.concatenate([s1.x, s2.x]), tol=1e-10, floor=1e-10)
        assert_close(sj.P[:n1, :n1], s1.P, tol=1e-10, floor=1e-10)
        assert_close(sj.P[n1:, n1:], s2.P, tol=1e-10, floor=1e-10)
        assert np.max(np.abs(sj.P[:n1, n1:])) < 1e-10


def test_singular_innovation_raises():
    # duplicate noise-free measurement rows make S exactly singular
    n = 2
    c = np.array([[1.0, 0.0], [1.0, 0.0]])
    model = SystemModel(
        manifold=Euclidean(n),
        f=lambda x, u, w: u + w,
        df_dx=lambda x, u: np.zeros((n, n)),
        df_dw=lambda x, u: np.eye(n),
        noise_dim=n,
        h=lambda x, v, ctx: c @ x,
        dh_dx=lambda x, ctx: c,
        dh_dv=lambda x, ctx: np.zeros((2, 2)),
        meas_noise_dim=2,
    )
    state = FilterState(np.zeros(n), np.eye(n))
    with pytest.raises(UpdateSolverError) as exc:
        update(model, state, np.array([1.0, 1.0]), np.eye(2))
    assert exc.value.condition is None or exc.value.condition > 1e12


def test_unknown_gain_form_rejected():
    model = _linear_model(np.zeros((2, 2)), np.eye(2), 2, 2)
    state = FilterState(np.zeros(2), np.eye(2))
    with pytest.raises(ValueError):
        update(model, state, np.zeros(2), np.eye(2),
               config=UpdateConfig(gain_form="square-root"))
