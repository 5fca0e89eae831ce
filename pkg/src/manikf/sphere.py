"""Numerics for the sphere of radius r embedded in R^3.

Points are 3-vectors of norm r; tangent increments live in R^2 through a
point-dependent orthonormal basis of the tangent plane. Perturbations act
by rotation so the radius is preserved exactly.
"""
from __future__ import annotations

import numpy as np

from .errors import ContractViolationError, CutLocusError
from .so3 import SMALL_ANGLE, mat_a, skew, so3_exp

_E = np.eye(3)


def check_sphere(x: np.ndarray, r: float, tol: float = 1e-6) -> None:
    """Raise unless x lies on the sphere of radius r."""
    if x.shape != (3,):
        raise ContractViolationError(f"sphere point must be a 3-vector, got {x.shape}")
    n = float(np.linalg.norm(x))
    if abs(n - r) > tol * max(r, 1.0):
        raise ContractViolationError(f"point norm {n:.6g} != radius {r:.6g}")


def sphere_basis(x: np.ndarray) -> np.ndarray:
    """Orthonormal tangent basis B(x), shape (3, 2), with B^T x = 0.

    The basis is the rotation carrying the closest coordinate axis onto
    x/|x| applied to the two remaining axes; the axis choice keeps the
    construction away from the rotation's cut locus for every x.
    """
    xn = x / np.linalg.norm(x)
    i = int(np.argmax(xn))
    e = _E[i]
    c = skew(e) @ xn
    s = float(np.linalg.norm(c))
    if s < 1e-12:
        rot = _E
    else:
        rot = so3_exp((c / s) * np.arctan2(s, float(e @ xn)))
    j, k = (i + 1) % 3, (i + 2) % 3
    return rot @ _E[:, [j, k]]


def sphere_boxplus(x: np.ndarray, u: np.ndarray, r: float) -> np.ndarray:
    """Move x along tangent coordinates u (radians): Exp(B(x) u) x."""
    return so3_exp(sphere_basis(x) @ u) @ x


def sphere_boxminus(y: np.ndarray, x: np.ndarray, r: float) -> np.ndarray:
    """Tangent coordinates at x pointing to y; inverse of sphere_boxplus.

    Undefined at the antipode of x, where every direction is a shortest
    path; that case raises CutLocusError.
    """
    cx = skew(x) @ y
    s = float(np.linalg.norm(cx))
    c = float(x @ y)
    theta = np.arctan2(s, c)
    if s < 1e-9 * r * r:
        if c < 0.0:
            raise CutLocusError("points are antipodal; boxminus is undefined")
        return np.zeros(2)
    return sphere_basis(x).T @ ((theta / s) * cx)


def sphere_oplus(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate x by the rotation vector v: Exp(v) x."""
    return so3_exp(v) @ x


def sphere_m(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """d(sphere_boxplus(x, u))/du, shape (3, 2)."""
    b = sphere_basis(x)
    w = b @ u
    return -so3_exp(w) @ skew(x) @ mat_a(w).T @ b


def _theta_coeffs(x: np.ndarray, y: np.ndarray, r: float):
    cx = skew(y) @ x
    s = float(np.linalg.norm(cx))
    c = float(y @ x)
    theta = np.arctan2(s, c)
    r2 = r * r
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        c1 = (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0) / r2
        c2 = (2.0 / 3.0 + t2 / 5.0) / r2
    else:
        if c < 0.0 and s < 1e-9 * r2:
            raise CutLocusError("points are antipodal; the differential diverges")
        c1 = theta / s
        c2 = (theta - np.sin(theta) * np.cos(theta)) / (np.sin(theta) ** 3 * r2)
    return cx, c1, c2


def sphere_p(x: np.ndarray, y: np.ndarray, r: float) -> np.ndarray:
    """Row vector P(x, y), shape (1, 3): the x-gradient of the scaled angle.

    sphere_n decomposes as B(y)^T (c1 skew(y) + (skew(y) x) P(x, y)).
    """
    cx, _, c2 = _theta_coeffs(x, y, r)
    r2 = r * r
    return ((c2 * (x @ skew(y) @ skew(y)) - y) / (r2 * r2)).reshape(1, 3)


def sphere_n(x: np.ndarray, y: np.ndarray, r: float) -> np.ndarray:
    """d(sphere_boxminus(x, y))/dx, shape (2, 3).

    Diverges at the antipode (theta -> pi); callers stay on the side of
    the cut locus where boxminus itself is defined.
    """
    cx, c1, c2 = _theta_coeffs(x, y, r)
    r2 = r * r
    p = (c2 * (x @ skew(y) @ skew(y)) - y) / (r2 * r2)
    return sphere_basis(y).T @ (c1 * skew(y) + np.outer(cx, p))
