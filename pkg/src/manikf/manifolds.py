"""State manifolds and the chart operators the filter is written against.

Every manifold stores points as flat numpy vectors of length ``rep_dim`` so
that compound states are plain concatenations. Three operators define the
geometry:

* ``boxplus(x, u)``   -- retract a tangent increment u (dim ``dim``) at x.
* ``boxminus(y, x)``  -- chart coordinates of y in the chart centred at x.
* ``oplus(x, v)``     -- apply an exogenous velocity v (dim ``control_dim``);
  for Euclidean space and the rotation group this coincides with boxplus,
  on the sphere it is the ambient rotation action.

``diff_u`` and ``diff_v`` are the Jacobians of ``boxminus(oplus(boxplus(x, u),
v), y)`` with respect to u and v, evaluated at the point ``y = oplus(
boxplus(x, u), v)`` itself. Both the process linearization and the
covariance reset of the filter are instances of these two maps.
"""
from __future__ import annotations

import numpy as np

from . import so3, sphere
from .errors import ContractViolationError, DimensionError


class Manifold:
    """Interface shared by all state manifolds."""

    dim: int  # tangent dimension
    rep_dim: int  # length of the flat point vector
    control_dim: int  # dimension of the oplus velocity

    def boxplus(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def boxminus(self, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def oplus(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def diff_u(self, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def diff_v(self, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_shape(self, x: np.ndarray) -> None:
        # operators run in the filter's hot loop: check dimensions only;
        # call validate_point for the full (orthonormality/norm) invariants
        if x.shape != (self.rep_dim,):
            raise DimensionError(
                f"point must have shape ({self.rep_dim},), got {x.shape}"
            )

    def validate_point(self, x: np.ndarray) -> None:
        self._check_shape(x)

    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _check_tangent(self, u: np.ndarray, what: str = "tangent") -> None:
        if u.shape != (self.dim,):
            raise DimensionError(f"{what} must have shape ({self.dim},), got {u.shape}")

    def _check_control(self, v: np.ndarray) -> None:
        if v.shape != (self.control_dim,):
            raise DimensionError(
                f"velocity must have shape ({self.control_dim},), got {v.shape}"
            )


class Euclidean(Manifold):
    """R^n with vector addition as both retraction and velocity action."""

    def __init__(self, n: int):
        if n < 1:
            raise DimensionError("Euclidean dimension must be positive")
        self.dim = self.rep_dim = self.control_dim = n

    def boxplus(self, x, u):
        self._check_shape(x)
        self._check_tangent(u)
        return x + u

    def boxminus(self, y, x):
        self._check_shape(y)
        self._check_shape(x)
        return y - x

    def oplus(self, x, v):
        self._check_shape(x)
        self._check_control(v)
        return x + v

    def diff_u(self, x, u, v):
        return np.eye(self.dim)

    def diff_v(self, x, u, v):
        return np.eye(self.dim)

    def random_point(self, rng):
        return rng.standard_normal(self.dim)

    def __repr__(self):
        return f"Euclidean({self.dim})"


class SO3(Manifold):
    """Rotation matrices, stored row-major as 9-vectors; tangent is R^3."""

    dim = 3
    rep_dim = 9
    control_dim = 3

    @staticmethod
    def to_matrix(x: np.ndarray) -> np.ndarray:
        return x.reshape(3, 3)

    @staticmethod
    def from_matrix(r: np.ndarray) -> np.ndarray:
        return r.reshape(9).copy()

    def boxplus(self, x, u):
        self._check_shape(x)
        self._check_tangent(u)
        return (self.to_matrix(x) @ so3.so3_exp(u)).reshape(9)

    def boxminus(self, y, x):
        self._check_shape(y)
        self._check_shape(x)
        return so3.so3_log(self.to_matrix(x).T @ self.to_matrix(y))

    def oplus(self, x, v):
        self._check_shape(x)
        self._check_control(v)
        return (self.to_matrix(x) @ so3.so3_exp(v)).reshape(9)

    def diff_u(self, x, u, v):
        self._check_tangent(u)
        self._check_control(v)
        return so3.so3_exp(-v) @ so3.mat_a(u).T

    def diff_v(self, x, u, v):
        self._check_control(v)
        return so3.mat_a(v).T

    def validate_point(self, x):
        self._check_shape(x)
        so3.check_rotation(self.to_matrix(x))

    def random_point(self, rng):
        return so3.so3_exp(rng.uniform(-np.pi, np.pi) * _unit(rng)).reshape(9)

    def __repr__(self):
        return "SO3()"


class Sphere2(Manifold):
    """Sphere of radius r in R^3; tangent is R^2, velocities act by rotation."""

    dim = 2
    rep_dim = 3
    control_dim = 3

    def __init__(self, radius: float):
        if not radius > 0.0:
            raise ContractViolationError("sphere radius must be positive")
        self.radius = float(radius)

    def boxplus(self, x, u):
        self._check_shape(x)
        self._check_tangent(u)
        return sphere.sphere_boxplus(x, u, self.radius)

    def boxminus(self, y, x):
        self._check_shape(y)
        self._check_shape(x)
        return sphere.sphere_boxminus(y, x, self.radius)

    def oplus(self, x, v):
        self._check_shape(x)
        self._check_control(v)
        return sphere.sphere_oplus(x, v)

    def diff_u(self, x, u, v):
        self._check_tangent(u)
        self._check_control(v)
        rv = so3.so3_exp(v)
        z = rv @ sphere.sphere_boxplus(x, u, self.radius)
        lead = sphere.sphere_basis(z).T @ so3.skew(z) / self.radius**2
        return lead @ rv @ sphere.sphere_m(x, u)

    def diff_v(self, x, u, v):
        self._check_tangent(u)
        self._check_control(v)
        rv = so3.so3_exp(v)
        xu = sphere.sphere_boxplus(x, u, self.radius)
        z = rv @ xu
        lead = sphere.sphere_basis(z).T @ so3.skew(z) / self.radius**2
        return -lead @ rv @ so3.skew(xu) @ so3.mat_a(v).T

    def validate_point(self, x):
        self._check_shape(x)
        sphere.check_sphere(x, self.radius)

    def random_point(self, rng):
        return self.radius * _unit(rng)

    def __repr__(self):
        return f"Sphere2({self.radius})"


def _unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


class Compound(Manifold):
    """Cartesian product of manifolds; all operators act blockwise.

    Points, tangents, and velocities are the concatenations of the parts'
    vectors; ``diff_u``/``diff_v`` are block diagonal.
    """

    def __init__(self, parts):
        self.parts = tuple(parts)
        if not self.parts:
            raise DimensionError("compound manifold needs at least one part")
        self.dim = sum(p.dim for p in self.parts)
        self.rep_dim = sum(p.rep_dim for p in self.parts)
        self.control_dim = sum(p.control_dim for p in self.parts)
        self.rep_slices = _slices(p.rep_dim for p in self.parts)
        self.tan_slices = _slices(p.dim for p in self.parts)
        self.ctrl_slices = _slices(p.control_dim for p in self.parts)

    def _zip(self, x, u=None, v=None):
        for part, rs, ts, cs in zip(
            self.parts, self.rep_slices, self.tan_slices, self.ctrl_slices
        ):
            yield (
                part,
                x[rs],
                None if u is None else u[ts],
                None if v is None else v[cs],
            )

    def boxplus(self, x, u):
        self._check_shape(x)
        self._check_tangent(u)
        return np.concatenate(
            [p.boxplus(xb, ub) for p, xb, ub, _ in self._zip(x, u=u)]
        )

    def boxminus(self, y, x):
        self._check_shape(y)
        self._check_shape(x)
        return np.concatenate(
            [
                p.boxminus(y[rs], x[rs])
                for p, rs in zip(self.parts, self.rep_slices)
            ]
        )

    def oplus(self, x, v):
        self._check_shape(x)
        self._check_control(v)
        return np.concatenate([p.oplus(xb, vb) for p, xb, _, vb in self._zip(x, v=v)])

    def diff_u(self, x, u, v):
        out = np.zeros((self.dim, self.dim))
        for (p, xb, ub, vb), ts in zip(self._zip(x, u=u, v=v), self.tan_slices):
            out[ts, ts] = p.diff_u(xb, ub, vb)
        return out

    def diff_v(self, x, u, v):
        out = np.zeros((self.dim, self.control_dim))
        for (p, xb, ub, vb), ts, cs in zip(
            self._zip(x, u=u, v=v), self.tan_slices, self.ctrl_slices
        ):
            out[ts, cs] = p.diff_v(xb, ub, vb)
        return out

    def validate_point(self, x):
        self._check_shape(x)
        for p, rs in zip(self.parts, self.rep_slices):
            p.validate_point(x[rs])

    def random_point(self, rng):
        return np.concatenate([p.random_point(rng) for p in self.parts])

    def __repr__(self):
        return "Compound(" + ", ".join(repr(p) for p in self.parts) + ")"


def _slices(dims) -> tuple:
    out, start = [], 0
    for d in dims:
        out.append(slice(start, start + d))
        start += d
    return tuple(out)


def compound(*parts: Manifold) -> Compound:
    """Product manifold of the given parts, in order."""
    return Compound(parts)
