"""IMU-propagated lidar odometry model with online extrinsic calibration.

State blocks, in order: position p, velocity v, attitude R (IMU body to
global), accelerometer bias b_a, gyroscope bias b_w, gravity g (fixed-norm
sphere point), lidar-to-IMU rotation R_ext and translation p_ext. Inputs
are raw IMU readings u = [a_m, w_m]; process noise w = [n_a, n_w, n_ba,
n_bw] (white measurement noise on the IMU plus bias random walks).

Measurements are geometric residuals of scanned points against known
planes or edges; the residual is defined so the measured value is
identically zero and all information enters through h and its Jacobians.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractViolationError, DimensionError
from .filter import SystemModel
from .manifolds import Compound, Euclidean, SO3, Sphere2, compound
from .so3 import skew
from .sphere import sphere_basis

GRAVITY = 9.81

# flat-representation slices
REP = {
    "p": slice(0, 3),
    "v": slice(3, 6),
    "R": slice(6, 15),
    "ba": slice(15, 18),
    "bw": slice(18, 21),
    "g": slice(21, 24),
    "R_ext": slice(24, 33),
    "p_ext": slice(33, 36),
}
# tangent-space slices (gravity error is 2-dimensional)
TAN = {
    "p": slice(0, 3),
    "v": slice(3, 6),
    "R": slice(6, 9),
    "ba": slice(9, 12),
    "bw": slice(12, 15),
    "g": slice(15, 17),
    "R_ext": slice(17, 20),
    "p_ext": slice(20, 23),
}
TANGENT_DIM = 23
NOISE_DIM = 12


@dataclass(frozen=True)
class PlaneFeature:
    """One scanned point with its associated plane or edge in the global map.

    ``p_f`` is the point in the lidar frame; ``u_dir`` the unit plane
    normal (or edge direction); ``q`` a point on the plane (or edge);
    ``kind`` selects the residual: a plane contributes the 1-row normal
    distance, an edge the 3-row rejection from the direction.
    """

    p_f: np.ndarray
    u_dir: np.ndarray
    q: np.ndarray
    kind: str = "plane"

    def __post_init__(self):
        if self.kind not in ("plane", "edge"):
            raise ContractViolationError(f"unknown feature kind {self.kind!r}")
        if abs(np.linalg.norm(self.u_dir) - 1.0) > 1e-9:
            raise ContractViolationError("feature direction must be a unit vector")

    @property
    def g_mat(self) -> np.ndarray:
        """Residual projector: row u^T for a plane, skew(u) for an edge."""
        if self.kind == "plane":
            return self.u_dir.reshape(1, 3)
        return skew(self.u_dir)


def state_manifold(gravity_radius: float = GRAVITY) -> Compound:
    """The compound state manifold; tangent dimension 23."""
    return compound(
        Euclidean(3),  # p
        Euclidean(3),  # v
        SO3(),  # R
        Euclidean(3),  # b_a
        Euclidean(3),  # b_w
        Sphere2(gravity_radius),  # g
        SO3(),  # R_ext
        Euclidean(3),  # p_ext
    )


def make_state(p, v, R, ba, bw, g, R_ext, p_ext) -> np.ndarray:
    """Pack block values (rotations as 3x3 matrices) into the flat vector."""
    return np.concatenate(
        [
            np.asarray(p, dtype=float),
            np.asarray(v, dtype=float),
            np.asarray(R, dtype=float).reshape(9),
            np.asarray(ba, dtype=float),
            np.asarray(bw, dtype=float),
            np.asarray(g, dtype=float),
            np.asarray(R_ext, dtype=float).reshape(9),
            np.asarray(p_ext, dtype=float),
        ]
    )


def _meas_dim(features: Sequence[PlaneFeature]) -> int:
    return sum(1 if ft.kind == "plane" else 3 for ft in features)


def _all_planes(features: Sequence[PlaneFeature]) -> bool:
    return all(ft.kind == "plane" for ft in features)


def _stack(features: Sequence[PlaneFeature], attr: str) -> np.ndarray:
    return np.array([getattr(ft, attr) for ft in features])


def _require_features(features) -> Sequence[PlaneFeature]:
    if not features:
        raise DimensionError("measurement update needs at least one feature")
    return features


def lidar_inertial_model(gravity_radius: float = GRAVITY) -> SystemModel:
    """SystemModel for the IMU process and plane/edge measurements.

    The per-update measurement context is a sequence of PlaneFeature; the
    measurement noise is one isotropic 3-vector per scanned point, so the
    caller's R must be 3m x 3m for m features.
    """
    man = state_manifold(gravity_radius)

    def f(x, u, w):
        a_m, w_m = u[:3], u[3:6]
        rot = x[REP["R"]].reshape(3, 3)
        out = np.zeros(24)
        out[0:3] = x[REP["v"]]
        out[3:6] = rot @ (a_m - x[REP["ba"]] - w[0:3]) + x[REP["g"]]
        out[6:9] = w_m - x[REP["bw"]] - w[3:6]
        out[9:12] = w[6:9]
        out[12:15] = w[9:12]
        return out

    def df_dx(x, u):
        a_m = u[:3]
        rot = x[REP["R"]].reshape(3, 3)
        g = x[REP["g"]]
        out = np.zeros((24, TANGENT_DIM))
        out[0:3, TAN["v"]] = np.eye(3)
        out[3:6, TAN["R"]] = -rot @ skew(a_m - x[REP["ba"]])
        out[3:6, TAN["ba"]] = -rot
        # d(boxplus(g, dg))/d(dg) at 0
        out[3:6, TAN["g"]] = -skew(g) @ sphere_basis(g)
        out[6:9, TAN["bw"]] = -np.eye(3)
        return out

    def df_dw(x, u):
        rot = x[REP["R"]].reshape(3, 3)
        out = np.zeros((24, NOISE_DIM))
        out[3:6, 0:3] = -rot
        out[6:9, 3:6] = -np.eye(3)
        out[9:12, 6:9] = np.eye(3)
        out[12:15, 9:12] = np.eye(3)
        return out

    def h(x, v, features):
        features = _require_features(features)
        rot = x[REP["R"]].reshape(3, 3)
        r_ext = x[REP["R_ext"]].reshape(3, 3)
        p, p_ext = x[REP["p"]], x[REP["p_ext"]]
        if _all_planes(features):
            pts = _stack(features, "p_f") - v.reshape(-1, 3)
            w = (pts @ r_ext.T + p_ext) @ rot.T + p - _stack(features, "q")
            return np.einsum("ij,ij->i", _stack(features, "u_dir"), w)
        rows = []
        for i, ft in enumerate(features):
            pt = ft.p_f - v[3 * i : 3 * i + 3]
            rows.append(ft.g_mat @ (rot @ (r_ext @ pt + p_ext) + p - ft.q))
        return np.concatenate(rows)

    def dh_dx(x, features):
        features = _require_features(features)
        rot = x[REP["R"]].reshape(3, 3)
        r_ext = x[REP["R_ext"]].reshape(3, 3)
        p_ext = x[REP["p_ext"]]
        if _all_planes(features):
            u = _stack(features, "u_dir")
            p_f = _stack(features, "p_f")
            s = p_f @ r_ext.T + p_ext  # feature points in the body frame
            a = u @ rot  # row blocks u^T R
            b = a @ r_ext
            out = np.zeros((len(features), TANGENT_DIM))
            out[:, TAN["p"]] = u
            out[:, TAN["R"]] = -np.cross(a, s)  # rows -u^T R skew(s)
            out[:, TAN["R_ext"]] = -np.cross(b, p_f)
            out[:, TAN["p_ext"]] = a
            return out
        out = np.zeros((_meas_dim(features), TANGENT_DIM))
        row = 0
        for ft in features:
            g_i = ft.g_mat
            m = g_i.shape[0]
            gr = g_i @ rot
            out[row : row + m, TAN["p"]] = g_i
            out[row : row + m, TAN["R"]] = -gr @ skew(r_ext @ ft.p_f + p_ext)
            out[row : row + m, TAN["R_ext"]] = -gr @ r_ext @ skew(ft.p_f)
            out[row : row + m, TAN["p_ext"]] = gr
            row += m
        return out

    def dh_dv(x, features):
        features = _require_features(features)
        rot = x[REP["R"]].reshape(3, 3)
        r_ext = x[REP["R_ext"]].reshape(3, 3)
        if _all_planes(features):
            m = len(features)
            b = _stack(features, "u_dir") @ rot @ r_ext
            out = np.zeros((m, 3 * m))
            idx = np.arange(m)
            for c in range(3):
                out[idx, 3 * idx + c] = -b[:, c]
            return out
        out = np.zeros((_meas_dim(features), 3 * len(features)))
        row = 0
        for i, ft in enumerate(features):
            m = ft.g_mat.shape[0]
            out[row : row + m, 3 * i : 3 * i + 3] = -ft.g_mat @ rot @ r_ext
            row += m
        return out

    return SystemModel(
        manifold=man,
        f=f,
        df_dx=df_dx,
        df_dw=df_dw,
        noise_dim=NOISE_DIM,
        h=h,
        dh_dx=dh_dx,
        dh_dv=dh_dv,
        meas_noise_dim=lambda features: 3 * len(_require_features(features)),
    )


def measurement_dim(features: Sequence[PlaneFeature]) -> int:
    """Total residual rows contributed by a feature list."""
    return _meas_dim(features)
