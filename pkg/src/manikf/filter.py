"""Iterated error-state Kalman filter over an arbitrary state manifold.

The system is the discrete recursion

    x_{k+1} = oplus(x_k, dt * f(x_k, u_k, w_k)),    w_k ~ N(0, Q)
    z_k     = h(x_k, v_k),                          v_k ~ N(0, R)

with the state on any :class:`~.manifolds.Manifold` and Euclidean
measurements. The covariance lives in the tangent space at the current
estimate; every routine that moves the estimate also transports the
covariance through the corresponding chart Jacobian (diff_u / diff_v).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg

from .errors import DimensionError, UpdateSolverError
from .manifolds import Manifold


@dataclass
class SystemModel:
    """Process and measurement maps with their analytic Jacobians.

    ``f(x, u, w)`` returns the velocity vector (length
    ``manifold.control_dim``); ``df_dx``/``df_dw`` are its Jacobians at
    w = 0 with respect to the state error and the noise. ``h(x, v, ctx)``
    returns the predicted (Euclidean) measurement; ``ctx`` is opaque
    per-update context for measurement models whose dimension changes step
    to step; ``dh_dx``/``dh_dv`` are the Jacobians at v = 0. ``meas_noise_dim``
    may be a callable of ctx when the noise dimension varies.
    """

    manifold: Manifold
    f: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    df_dx: Callable[[np.ndarray, np.ndarray], np.ndarray]
    df_dw: Callable[[np.ndarray, np.ndarray], np.ndarray]
    noise_dim: int
    h: Optional[Callable[[np.ndarray, np.ndarray, Any], np.ndarray]] = None
    dh_dx: Optional[Callable[[np.ndarray, Any], np.ndarray]] = None
    dh_dv: Optional[Callable[[np.ndarray, Any], np.ndarray]] = None
    meas_noise_dim: Any = 0

    def noise_len(self, ctx: Any) -> int:
        if callable(self.meas_noise_dim):
            return self.meas_noise_dim(ctx)
        return self.meas_noise_dim


@dataclass
class FilterState:
    """Estimate x (flat point vector) and tangent-space covariance P."""

    x: np.ndarray
    P: np.ndarray

    def copy(self) -> "FilterState":
        return FilterState(self.x.copy(), self.P.copy())


@dataclass
class UpdateConfig:
    """Knobs for the iterated update.

    ``max_iterations`` is the highest allowed iteration index: the gain is
    computed for indices 0..max_iterations, so 0 gives the plain (single
    linearization) error-state extended update. ``gain_form`` selects
    between the innovation-matrix gain and the algebraically equivalent
    information form; both factor SPD matrices and never invert the prior
    covariance to build the gain.
    """

    max_iterations: int = 4
    convergence_tol: float = 1e-6
    gain_form: str = "innovation"
    track_cost: bool = False


@dataclass
class UpdateDiagnostics:
    iterations: int = 0
    converged: bool = False
    residual_norms: List[float] = field(default_factory=list)
    cost_trace: List[float] = field(default_factory=list)
    j_condition: float = 1.0
    l_condition: float = 1.0


def compute_G(
    manifold: Manifold, x: np.ndarray, dx: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """State- and velocity-side chart Jacobians of one propagation step.

    ``dx = dt * f(x, u, 0)`` is the commanded displacement; the returned
    (G_x, G_f) linearize ``boxminus(oplus(boxplus(x, e), dx + d), x')`` in
    the state error e and velocity change d at zero.
    """
    zero_u = np.zeros(manifold.dim)
    return manifold.diff_u(x, zero_u, dx), manifold.diff_v(x, zero_u, dx)


def compute_J(manifold: Manifold, x_prior: np.ndarray, x_iter: np.ndarray) -> np.ndarray:
    """Chart-change Jacobian from the prior's tangent space to the iterate's."""
    dx = manifold.boxminus(x_iter, x_prior)
    return manifold.diff_u(x_prior, dx, np.zeros(manifold.control_dim))


def compute_L(manifold: Manifold, x_kappa: np.ndarray, delta_x_o: np.ndarray) -> np.ndarray:
    """Covariance-reset Jacobian for the final correction delta_x_o at x_kappa."""
    return manifold.diff_u(x_kappa, delta_x_o, np.zeros(manifold.control_dim))


def predict(
    model: SystemModel,
    state: FilterState,
    u: np.ndarray,
    dt: float,
    Q: np.ndarray,
) -> FilterState:
    """One propagation step; returns a new FilterState.

    The mean moves along ``dt * f`` with zero noise; the covariance goes
    through F_x = G_x + dt * G_f * df_dx and F_w = dt * G_f * df_dw, so the
    retraction and the velocity action are linearized jointly.
    """
    man = model.manifold
    q = model.noise_dim
    if Q.shape != (q, q):
        raise DimensionError(f"Q must be {(q, q)}, got {Q.shape}")
    dx = dt * np.asarray(model.f(state.x, u, np.zeros(q)), dtype=float)
    if not np.all(np.isfinite(dx)):
        raise ValueError("process model returned non-finite velocity")
    gx, gf = compute_G(man, state.x, dx)
    fx = gx + dt * gf @ np.asarray(model.df_dx(state.x, u), dtype=float)
    fw = dt * gf @ np.asarray(model.df_dw(state.x, u), dtype=float)
    p = fx @ state.P @ fx.T + fw @ Q @ fw.T
    return FilterState(man.oplus(state.x, dx), 0.5 * (p + p.T))


def _spd_solve(a: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(a), b)
    except scipy.linalg.LinAlgError as exc:
        raise UpdateSolverError(
            f"{what} could not be factorized", condition=float(np.linalg.cond(a))
        ) from exc


def update(
    model: SystemModel,
    state: FilterState,
    z: np.ndarray,
    R: np.ndarray,
    ctx: Any = None,
    config: Optional[UpdateConfig] = None,
) -> Tuple[FilterState, UpdateDiagnostics]:
    """Iterated measurement update; returns (new FilterState, diagnostics).

    Each iterate relinearizes h at the current estimate while keeping the
    prior fixed; the prior covariance is re-expressed in the chart at the
    iterate through J before the gain is formed. After the loop the
    posterior covariance is transported into the chart at the final
    estimate through L.
    """
    if config is None:
        config = UpdateConfig()
    man = model.manifold
    n = man.dim
    x_prior, p_prior = state.x, state.P
    vzero = np.zeros(model.noise_len(ctx))
    eye_n = np.eye(n)
    diag = UpdateDiagnostics()

    xj = x_prior
    j = -1
    while True:
        j += 1
        r = z - np.asarray(model.h(xj, vzero, ctx), dtype=float)
        h_mat = np.asarray(model.dh_dx(xj, ctx), dtype=float)
        d_mat = np.asarray(model.dh_dv(xj, ctx), dtype=float)
        r_bar = d_mat @ R @ d_mat.T
        if xj is x_prior:
            dxj, jmat, pj = np.zeros(n), eye_n, p_prior
        else:
            dxj = man.boxminus(xj, x_prior)
            jmat = man.diff_u(x_prior, dxj, np.zeros(man.control_dim))
            pj = jmat @ p_prior @ jmat.T
        diag.residual_norms.append(float(np.linalg.norm(r)))
        if config.track_cost:
            diag.cost_trace.append(
                float(dxj @ _spd_solve(p_prior, dxj, "prior covariance"))
                + float(r @ _spd_solve(r_bar, r, "measurement covariance"))
            )
        if config.gain_form == "innovation":
            s = h_mat @ pj @ h_mat.T + r_bar
            k = _spd_solve(s, h_mat @ pj, "innovation matrix").T
        elif config.gain_form == "information":
            info = _spd_solve(pj, eye_n, "prior covariance")
            hr = h_mat.T @ _spd_solve(r_bar, np.eye(len(r)), "measurement covariance")
            k = _spd_solve(info + hr @ h_mat, hr, "information matrix")
        else:
            raise ValueError(f"unknown gain_form {config.gain_form!r}")
        dxo = -jmat @ dxj + k @ (r + h_mat @ jmat @ dxj)
        x_next = man.boxplus(xj, dxo)
        if float(np.linalg.norm(dxo)) < config.convergence_tol:
            diag.converged = True
        if diag.converged or j >= config.max_iterations:
            break
        xj = x_next

    p_plus = (eye_n - k @ h_mat) @ pj
    lmat = compute_L(man, xj, dxo)
    p_final = lmat @ p_plus @ lmat.T
    diag.iterations = j
    diag.j_condition = float(np.linalg.cond(jmat))
    diag.l_condition = float(np.linalg.cond(lmat))
    return FilterState(x_next, 0.5 * (p_final + p_final.T)), diag
