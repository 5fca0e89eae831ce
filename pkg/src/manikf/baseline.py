"""Overparameterized comparison filter: quaternion attitude as a free R^4.

Same physical state as the lidar-inertial model, but attitude and
extrinsic rotation are unit quaternions treated as unconstrained 4-vectors
and gravity is a free 3-vector, so the whole state is Euclidean (dim 26)
and the generic filter runs on it directly. The unit-norm and fixed-norm
constraints are enforced from outside:

* ``normalize_state`` rescales q, q_ext, and g after every step and leaves
  the covariance untouched (the naive fix), and
* the ``augmented`` measurement mode appends the constraint residuals
  q^T q - 1, g^T g - r^2, q_ext^T q_ext - 1 as pseudo-measurements.

Quaternions are Hamilton convention, stored [w, x, y, z].
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError
from .filter import SystemModel
from .lidar_inertial import (
    PlaneFeature,
    _all_planes,
    _meas_dim,
    _require_features,
    _stack,
)
from .manifolds import Euclidean
from .so3 import skew

GRAVITY = 9.81

BREP = {
    "p": slice(0, 3),
    "v": slice(3, 6),
    "q": slice(6, 10),
    "ba": slice(10, 13),
    "bw": slice(13, 16),
    "g": slice(16, 19),
    "q_ext": slice(19, 23),
    "p_ext": slice(23, 26),
}
STATE_DIM = 26
NOISE_DIM = 12
N_CONSTRAINTS = 3


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a (not necessarily unit) quaternion."""
    w, v = q[0], q[1:]
    return (w * w - v @ v) * np.eye(3) + 2.0 * np.outer(v, v) + 2.0 * w * skew(v)


def rot_to_quat(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w >= 0) of a rotation matrix."""
    w = 0.5 * np.sqrt(max(1.0 + np.trace(r), 0.0))
    if w > 1e-6:
        v = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
        q = np.concatenate([[w], v / (4.0 * w)])
    else:
        i = int(np.argmax(np.diag(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(r[i, i] - r[j, j] - r[k, k] + 1.0, 0.0))
        v = np.zeros(3)
        v[i] = 0.5 * s
        v[j] = (r[i, j] + r[j, i]) / (2.0 * s)
        v[k] = (r[i, k] + r[k, i]) / (2.0 * s)
        q = np.concatenate([[(r[k, j] - r[j, k]) / (2.0 * s)], v])
        if q[0] < 0.0:
            q = -q
    return q / np.linalg.norm(q)


def _xi(q: np.ndarray) -> np.ndarray:
    """d(q * [0, w])/dw: 4x3 matrix with q_dot = 0.5 * xi(q) w."""
    w, v = q[0], q[1:]
    return np.vstack([-v, w * np.eye(3) + skew(v)])


def _omega(w: np.ndarray) -> np.ndarray:
    """d(q * [0, w])/dq: 4x4 right-multiplication matrix."""
    out = np.zeros((4, 4))
    out[0, 1:] = -w
    out[1:, 0] = w
    out[1:, 1:] = -skew(w)
    return out


def _drot_dq(q: np.ndarray, a: np.ndarray) -> np.ndarray:
    """d(R(q) a)/dq, shape 3x4, for the quadratic (non-unit) R(q)."""
    w, v = q[0], q[1:]
    col_w = 2.0 * (w * a + np.cross(v, a))
    block = 2.0 * (
        -np.outer(a, v) + np.outer(v, a) + (v @ a) * np.eye(3) - w * skew(a)
    )
    return np.hstack([col_w.reshape(3, 1), block])


def _rows_drot_dq(q: np.ndarray, u: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Batched u_i^T d(R(q) s_i)/dq, shape (m, 4)."""
    w, v = q[0], q[1:]
    us = np.einsum("ij,ij->i", u, s)
    out = np.empty((u.shape[0], 4))
    out[:, 0] = 2.0 * (w * us + np.einsum("ij,ij->i", u, np.cross(v, s)))
    out[:, 1:] = 2.0 * (
        -us[:, None] * v
        + (u @ v)[:, None] * s
        + (s @ v)[:, None] * u
        - w * np.cross(u, s)
    )
    return out


def make_state(p, v, R, ba, bw, g, R_ext, p_ext) -> np.ndarray:
    """Pack block values (rotations given as matrices) into the flat vector."""
    return np.concatenate(
        [
            np.asarray(p, dtype=float),
            np.asarray(v, dtype=float),
            rot_to_quat(np.asarray(R, dtype=float)),
            np.asarray(ba, dtype=float),
            np.asarray(bw, dtype=float),
            np.asarray(g, dtype=float),
            rot_to_quat(np.asarray(R_ext, dtype=float)),
            np.asarray(p_ext, dtype=float),
        ]
    )


def normalize_state(x: np.ndarray, gravity_radius: float = GRAVITY) -> np.ndarray:
    """Project q, q_ext, g back onto their constraint sets; P is not touched."""
    out = x.copy()
    for key in ("q", "q_ext"):
        n = np.linalg.norm(out[BREP[key]])
        if n < 1e-12:
            raise DimensionError(f"{key} collapsed to zero; cannot normalize")
        out[BREP[key]] /= n
    gn = np.linalg.norm(out[BREP["g"]])
    if gn < 1e-12:
        raise DimensionError("gravity estimate collapsed to zero")
    out[BREP["g"]] *= gravity_radius / gn
    return out


def baseline_model(
    augmented: bool = False, gravity_radius: float = GRAVITY
) -> SystemModel:
    """SystemModel on R^26 mirroring the lidar-inertial dynamics.

    Measurement context is the same PlaneFeature sequence; in augmented
    mode three constraint rows (with their own unit-gain noise channels)
    are appended after the feature rows, so the caller's R needs three
    extra diagonal entries and z three extra zeros.
    """
    man = Euclidean(STATE_DIM)
    r2 = gravity_radius * gravity_radius

    def f(x, u, w):
        a_m, w_m = u[:3], u[3:6]
        q = x[BREP["q"]]
        out = np.zeros(STATE_DIM)
        out[BREP["p"]] = x[BREP["v"]]
        out[BREP["v"]] = quat_to_rot(q) @ (a_m - x[BREP["ba"]] - w[0:3]) + x[BREP["g"]]
        out[BREP["q"]] = 0.5 * _xi(q) @ (w_m - x[BREP["bw"]] - w[3:6])
        out[BREP["ba"]] = w[6:9]
        out[BREP["bw"]] = w[9:12]
        return out

    def df_dx(x, u):
        a_m, w_m = u[:3], u[3:6]
        q = x[BREP["q"]]
        a = a_m - x[BREP["ba"]]
        out = np.zeros((STATE_DIM, STATE_DIM))
        out[BREP["p"], BREP["v"]] = np.eye(3)
        out[BREP["v"], BREP["q"]] = _drot_dq(q, a)
        out[BREP["v"], BREP["ba"]] = -quat_to_rot(q)
        out[BREP["v"], BREP["g"]] = np.eye(3)
        out[BREP["q"], BREP["q"]] = 0.5 * _omega(w_m - x[BREP["bw"]])
        out[BREP["q"], BREP["bw"]] = -0.5 * _xi(q)
        return out

    def df_dw(x, u):
        q = x[BREP["q"]]
        out = np.zeros((STATE_DIM, NOISE_DIM))
        out[BREP["v"], 0:3] = -quat_to_rot(q)
        out[BREP["q"], 3:6] = -0.5 * _xi(q)
        out[BREP["ba"], 6:9] = np.eye(3)
        out[BREP["bw"], 9:12] = np.eye(3)
        return out

    def h(x, v, features):
        features = _require_features(features)
        rot = quat_to_rot(x[BREP["q"]])
        r_ext = quat_to_rot(x[BREP["q_ext"]])
        p, p_ext = x[BREP["p"]], x[BREP["p_ext"]]
        if _all_planes(features):
            m = len(features)
            pts = _stack(features, "p_f") - v[: 3 * m].reshape(-1, 3)
            w_pts = (pts @ r_ext.T + p_ext) @ rot.T + p - _stack(features, "q")
            rows = [np.einsum("ij,ij->i", _stack(features, "u_dir"), w_pts)]
        else:
            rows = []
            for i, ft in enumerate(features):
                pt = ft.p_f - v[3 * i : 3 * i + 3]
                rows.append(ft.g_mat @ (rot @ (r_ext @ pt + p_ext) + p - ft.q))
        if augmented:
            m = len(features)
            q, qe, g = x[BREP["q"]], x[BREP["q_ext"]], x[BREP["g"]]
            rows.append(
                np.array([q @ q - 1.0, g @ g - r2, qe @ qe - 1.0])
                + v[3 * m : 3 * m + 3]
            )
        return np.concatenate(rows)

    def dh_dx(x, features):
        features = _require_features(features)
        rot = quat_to_rot(x[BREP["q"]])
        r_ext = quat_to_rot(x[BREP["q_ext"]])
        p_ext = x[BREP["p_ext"]]
        m_rows = _meas_dim(features)
        out = np.zeros((m_rows + (N_CONSTRAINTS if augmented else 0), STATE_DIM))
        row = 0
        if _all_planes(features):
            u = _stack(features, "u_dir")
            p_f = _stack(features, "p_f")
            s = p_f @ r_ext.T + p_ext
            out[:m_rows, BREP["p"]] = u
            out[:m_rows, BREP["q"]] = _rows_drot_dq(x[BREP["q"]], u, s)
            out[:m_rows, BREP["q_ext"]] = _rows_drot_dq(
                x[BREP["q_ext"]], u @ rot, p_f
            )
            out[:m_rows, BREP["p_ext"]] = u @ rot
            row = m_rows
            if augmented:
                out[row, BREP["q"]] = 2.0 * x[BREP["q"]]
                out[row + 1, BREP["g"]] = 2.0 * x[BREP["g"]]
                out[row + 2, BREP["q_ext"]] = 2.0 * x[BREP["q_ext"]]
            return out
        for ft in features:
            g_i = ft.g_mat
            m = g_i.shape[0]
            s = r_ext @ ft.p_f + p_ext
            out[row : row + m, BREP["p"]] = g_i
            out[row : row + m, BREP["q"]] = g_i @ _drot_dq(x[BREP["q"]], s)
            out[row : row + m, BREP["q_ext"]] = (
                g_i @ rot @ _drot_dq(x[BREP["q_ext"]], ft.p_f)
            )
            out[row : row + m, BREP["p_ext"]] = g_i @ rot
            row += m
        if augmented:
            out[row, BREP["q"]] = 2.0 * x[BREP["q"]]
            out[row + 1, BREP["g"]] = 2.0 * x[BREP["g"]]
            out[row + 2, BREP["q_ext"]] = 2.0 * x[BREP["q_ext"]]
        return out

    def dh_dv(x, features):
        features = _require_features(features)
        rot = quat_to_rot(x[BREP["q"]])
        r_ext = quat_to_rot(x[BREP["q_ext"]])
        m = len(features)
        extra = N_CONSTRAINTS if augmented else 0
        out = np.zeros((_meas_dim(features) + extra, 3 * m + extra))
        row = 0
        if _all_planes(features):
            b = _stack(features, "u_dir") @ rot @ r_ext
            idx = np.arange(m)
            for c in range(3):
                out[idx, 3 * idx + c] = -b[:, c]
            if augmented:
                out[m:, 3 * m :] = np.eye(N_CONSTRAINTS)
            return out
        for i, ft in enumerate(features):
            k = ft.g_mat.shape[0]
            out[row : row + k, 3 * i : 3 * i + 3] = -ft.g_mat @ rot @ r_ext
            row += k
        if augmented:
            out[row:, 3 * m :] = np.eye(N_CONSTRAINTS)
        return out

    def noise_len(features):
        return 3 * len(_require_features(features)) + (
            N_CONSTRAINTS if augmented else 0
        )

    return SystemModel(
        manifold=man,
        f=f,
        df_dx=df_dx,
        df_dw=df_dw,
        noise_dim=NOISE_DIM,
        h=h,
        dh_dx=dh_dx,
        dh_dv=dh_dv,
        meas_noise_dim=noise_len,
    )
