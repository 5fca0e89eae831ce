"""Reusable one-state process blocks in the canonical discrete form.

Each block packages a manifold with the velocity map f and its Jacobians,
so that x_{k+1} = oplus(x_k, dt * f(x_k, u_k, w_k)). Inputs u are
block-specific (rates, camera twists, ...); none of these demonstration
blocks carries process noise.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .manifolds import Euclidean, Manifold, SO3, Sphere2, compound
from .so3 import skew
from .sphere import sphere_basis


@dataclass(frozen=True)
class SystemBlock:
    """A manifold-valued state with its velocity map and Jacobians.

    ``f(x, u, w) -> control vector``; ``df_dx(x, u)`` is the Jacobian with
    respect to the state error at w = 0, ``df_dw(x, u)`` with respect to
    the noise.
    """

    manifold: Manifold
    f: Callable
    df_dx: Callable
    df_dw: Callable
    noise_dim: int = 0

    def step(self, x: np.ndarray, u, dt: float) -> np.ndarray:
        """Noise-free discrete step oplus(x, dt * f(x, u, 0))."""
        w = np.zeros(self.noise_dim)
        return self.manifold.oplus(x, dt * np.asarray(self.f(x, u, w), dtype=float))


def _no_noise(l: int) -> Callable:
    return lambda x, u: np.zeros((l, 0))


def block_euclidean(n: int, f_cont=None, df_dx_cont=None) -> SystemBlock:
    """Vector state with velocity f_cont(x, u); default f = u (u is the rate)."""
    if f_cont is None:
        f_cont = lambda x, u: np.asarray(u, dtype=float)
        df_dx_cont = lambda x, u: np.zeros((n, n))
    return SystemBlock(
        manifold=Euclidean(n),
        f=lambda x, u, w: f_cont(x, u),
        df_dx=df_dx_cont,
        df_dw=_no_noise(n),
    )


def block_attitude_global() -> SystemBlock:
    """Attitude driven by a rate expressed in the global frame: f = R^T u."""
    return SystemBlock(
        manifold=SO3(),
        f=lambda x, u, w: x.reshape(3, 3).T @ u,
        df_dx=lambda x, u: skew(x.reshape(3, 3).T @ u),
        df_dw=_no_noise(3),
    )


def block_attitude_body() -> SystemBlock:
    """Attitude driven by a body-frame rate: f = u."""
    return SystemBlock(
        manifold=SO3(),
        f=lambda x, u, w: np.asarray(u, dtype=float),
        df_dx=lambda x, u: np.zeros((3, 3)),
        df_dw=_no_noise(3),
    )


def block_gravity_global(radius: float = 9.81) -> SystemBlock:
    """Constant-magnitude vector fixed in the global frame: f = 0."""
    return SystemBlock(
        manifold=Sphere2(radius),
        f=lambda x, u, w: np.zeros(3),
        df_dx=lambda x, u: np.zeros((3, 2)),
        df_dw=_no_noise(3),
    )


def block_gravity_body(radius: float = 9.81) -> SystemBlock:
    """Constant-magnitude vector seen from a body rotating at rate u: f = -u."""
    return SystemBlock(
        manifold=Sphere2(radius),
        f=lambda x, u, w: -np.asarray(u, dtype=float),
        df_dx=lambda x, u: np.zeros((3, 2)),
        df_dw=_no_noise(3),
    )


def block_bearing_landmark(
    d: Callable[[float], float] = lambda rho: rho,
    d_prime: Callable[[float], float] = lambda rho: 1.0,
    d_second: Callable[[float], float] = lambda rho: 0.0,
) -> SystemBlock:
    """Bearing-and-depth landmark seen from a moving camera.

    State is (bearing on the unit sphere, depth coordinate rho) with the
    true depth d(rho) > 0; input u = (omega_C, v_C), the camera's angular
    and linear velocity in its own frame. The bearing turns with
    f_s = -omega - (1/d) skew(x) v and the depth coordinate with
    rho_dot = -x^T v / d'(rho), so the reconstructed global landmark
    R_C (x d(rho)) + p_C is constant for exact camera motion.
    """
    man = compound(Sphere2(1.0), Euclidean(1))

    def f(state, u, w):
        x, rho = state[:3], state[3]
        omega, v = np.asarray(u[0], dtype=float), np.asarray(u[1], dtype=float)
        depth = d(rho)
        return np.concatenate(
            [-omega - (skew(x) @ v) / depth, [-(x @ v) / d_prime(rho)]]
        )

    def df_dx(state, u):
        x, rho = state[:3], state[3]
        v = np.asarray(u[1], dtype=float)
        depth, dp = d(rho), d_prime(rho)
        m0 = -skew(x) @ sphere_basis(x)  # d(boxplus)/du at 0
        out = np.zeros((4, 3))
        out[:3, :2] = -(skew(v) @ skew(x) @ sphere_basis(x)) / depth
        out[:3, 2] = (dp / depth**2) * (skew(x) @ v)
        out[3, :2] = -(v @ m0) / dp
        out[3, 2] = (x @ v) * d_second(rho) / dp**2
        return out

    return SystemBlock(manifold=man, f=f, df_dx=df_dx, df_dw=_no_noise(4))
