"""Trial execution, consistency metrics, and plot-ready CSV/JSON output."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import scipy.linalg

from . import baseline as qb
from .errors import CutLocusError, SingularityError, UpdateSolverError
from .filter import FilterState, UpdateConfig, predict, update
from .lidar_inertial import (
    GRAVITY,
    REP,
    TAN,
    TANGENT_DIM,
    lidar_inertial_model,
    state_manifold,
)
from .so3 import so3_log
from .trajectory import ScenarioConfig, Trajectory, generate_trajectory

BLOCKS = ("p", "v", "R", "ba", "bw", "g", "R_ext", "p_ext")
CONSTRAINT_SIGMA = 1e-3  # pseudo-measurement noise for baseline constraints


@dataclass
class TrialRecord:
    """Everything measured in one filter run on one simulated trajectory."""

    cfg: ScenarioConfig
    trial: int
    times: np.ndarray
    truth: np.ndarray  # (K+1, 36) manifold representation
    errors: np.ndarray  # (K+1, 23) tangent error truth boxminus estimate
    sigma3: np.ndarray  # (K+1, 23) 3-sigma envelope from diag(P)
    nees: np.ndarray  # (K+1,)
    iterations: List[int]
    final_drift: float
    final_ext_rot_deg: float
    final_ext_pos: float
    failed: bool = False
    failure: str = ""
    est_rep: Optional[np.ndarray] = None  # (K+1, 36) estimates, manifold rep


def _init_state(man, truth0: np.ndarray, cfg: ScenarioConfig, trial: int):
    """Truth perturbed by a draw from the initial covariance."""
    rng = np.random.default_rng([int(cfg.seed) ^ trial, 1])
    p0 = cfg.init_cov()
    e = rng.standard_normal(TANGENT_DIM) * np.sqrt(np.diag(p0))
    return man.boxplus(truth0, e), p0


def _baseline_rep(x36: np.ndarray) -> np.ndarray:
    """Convert a manifold-representation state to the flat R^26 baseline state."""
    return qb.make_state(
        x36[REP["p"]],
        x36[REP["v"]],
        x36[REP["R"]].reshape(3, 3),
        x36[REP["ba"]],
        x36[REP["bw"]],
        x36[REP["g"]],
        x36[REP["R_ext"]].reshape(3, 3),
        x36[REP["p_ext"]],
    )


def _manifold_rep_from_baseline(x26: np.ndarray) -> np.ndarray:
    from .lidar_inertial import make_state

    return make_state(
        x26[qb.BREP["p"]],
        x26[qb.BREP["v"]],
        qb.quat_to_rot(x26[qb.BREP["q"]] / np.linalg.norm(x26[qb.BREP["q"]])),
        x26[qb.BREP["ba"]],
        x26[qb.BREP["bw"]],
        x26[qb.BREP["g"]],
        qb.quat_to_rot(x26[qb.BREP["q_ext"]] / np.linalg.norm(x26[qb.BREP["q_ext"]])),
        x26[qb.BREP["p_ext"]],
    )


def _baseline_init_cov(cfg: ScenarioConfig) -> np.ndarray:
    """Map the per-block tangent sigmas onto the 26-dim Euclidean state.

    Quaternion components get half the rotation sigma (small-angle factor),
    gravity components the tangent sigma scaled by the gravity norm.
    """
    s = cfg.init_sigma
    diag = np.concatenate(
        [
            np.full(3, s[0] ** 2),
            np.full(3, s[1] ** 2),
            np.full(4, (0.5 * s[2]) ** 2),
            np.full(3, s[3] ** 2),
            np.full(3, s[4] ** 2),
            np.full(3, (GRAVITY * s[5]) ** 2),
            np.full(4, (0.5 * s[6]) ** 2),
            np.full(3, s[7] ** 2),
        ]
    )
    return np.diag(diag)


def _nees(err: np.ndarray, p: np.ndarray) -> float:
    try:
        return float(err @ scipy.linalg.cho_solve(scipy.linalg.cho_factor(p), err))
    except scipy.linalg.LinAlgError:
        return float("inf")  # failure to factor counts as an inconsistency event


def run_trial(
    cfg: ScenarioConfig,
    trial: int = 0,
    traj: Optional[Trajectory] = None,
    keep_estimates: bool = False,
) -> TrialRecord:
    """Run the selected filter over one simulated trajectory."""
    cfg.validate()
    if traj is None:
        traj = generate_trajectory(cfg, trial)
    if cfg.filter == "quat":
        return _run_baseline_trial(cfg, trial, traj, keep_estimates)

    man = state_manifold()
    model = lidar_inertial_model()
    qmat = cfg.process_noise()
    ucfg = UpdateConfig(max_iterations=cfg.nmax)
    x0, p0 = _init_state(man, traj.truth[0], cfg, trial)
    state = FilterState(x0, p0)

    k_steps = traj.imu.shape[0]
    errors = np.zeros((k_steps + 1, TANGENT_DIM))
    sigma3 = np.zeros((k_steps + 1, TANGENT_DIM))
    nees = np.zeros(k_steps + 1)
    iters: List[int] = []
    est = np.zeros((k_steps + 1, 36)) if keep_estimates else None
    failed, failure = False, ""

    def record(k: int) -> None:
        errors[k] = man.boxminus(traj.truth[k], state.x)
        sigma3[k] = 3.0 * np.sqrt(np.maximum(np.diag(state.P), 0.0))
        nees[k] = _nees(errors[k], state.P)
        if est is not None:
            est[k] = state.x

    record(0)
    k_done = 0
    try:
        for k in range(k_steps):
            state = predict(model, state, traj.imu[k], cfg.dt, qmat)
            feats = traj.features[k]
            rmat = cfg.sigma_feature**2 * np.eye(3 * len(feats))
            z = np.zeros(sum(1 if f.kind == "plane" else 3 for f in feats))
            state, diag = update(model, state, z, rmat, ctx=feats, config=ucfg)
            iters.append(diag.iterations)
            record(k + 1)
            k_done = k + 1
    except (UpdateSolverError, CutLocusError, SingularityError, ValueError) as exc:
        failed, failure = True, f"step {k_done + 1}: {exc}"
        errors, sigma3, nees = errors[: k_done + 1], sigma3[: k_done + 1], nees[: k_done + 1]

    final = -1
    drift = float(
        np.linalg.norm(traj.truth[final][REP["p"]] - state.x[REP["p"]])
    )
    rot_err = so3_log(
        state.x[REP["R_ext"]].reshape(3, 3).T @ traj.truth[final][REP["R_ext"]].reshape(3, 3)
    )
    return TrialRecord(
        cfg=cfg,
        trial=trial,
        times=traj.times,
        truth=traj.truth,
        errors=errors,
        sigma3=sigma3,
        nees=nees,
        iterations=iters,
        final_drift=drift,
        final_ext_rot_deg=float(np.degrees(np.linalg.norm(rot_err))),
        final_ext_pos=float(
            np.linalg.norm(traj.truth[final][REP["p_ext"]] - state.x[REP["p_ext"]])
        ),
        failed=failed,
        failure=failure,
        est_rep=est,
    )


def _run_baseline_trial(cfg, trial, traj, keep_estimates) -> TrialRecord:
    """Quaternion-as-vector filter on the same trajectory.

    Errors and their envelopes are reported in the shared 23-dim tangent
    space (quaternion error mapped through the rotation chart) so records
    are directly comparable with the manifold filter's.
    """
    man = state_manifold()
    augmented = cfg.baseline_mode == "augmented"
    model = qb.baseline_model(augmented=augmented)
    qmat = cfg.process_noise()
    ucfg = UpdateConfig(max_iterations=cfg.nmax)

    x0m, _ = _init_state(man, traj.truth[0], cfg, trial)
    state = FilterState(_baseline_rep(x0m), _baseline_init_cov(cfg))

    k_steps = traj.imu.shape[0]
    errors = np.zeros((k_steps + 1, TANGENT_DIM))
    sigma3 = np.zeros((k_steps + 1, TANGENT_DIM))
    nees = np.zeros(k_steps + 1)
    iters: List[int] = []
    est = np.zeros((k_steps + 1, 36)) if keep_estimates else None
    failed, failure = False, ""

    def record(k: int) -> None:
        xm = _manifold_rep_from_baseline(state.x)
        errors[k] = man.boxminus(traj.truth[k], xm)
        # naive envelope: the Euclidean diag(P) has no exact tangent meaning;
        # rotation rows use the small-angle 2x quaternion scaling
        d = np.sqrt(np.maximum(np.diag(state.P), 0.0))
        sigma3[k, TAN["p"]] = 3.0 * d[qb.BREP["p"]]
        sigma3[k, TAN["v"]] = 3.0 * d[qb.BREP["v"]]
        sigma3[k, TAN["R"]] = 6.0 * d[qb.BREP["q"]][1:]
        sigma3[k, TAN["ba"]] = 3.0 * d[qb.BREP["ba"]]
        sigma3[k, TAN["bw"]] = 3.0 * d[qb.BREP["bw"]]
        sigma3[k, TAN["g"]] = 3.0 * d[qb.BREP["g"]][:2] / GRAVITY
        sigma3[k, TAN["R_ext"]] = 6.0 * d[qb.BREP["q_ext"]][1:]
        sigma3[k, TAN["p_ext"]] = 3.0 * d[qb.BREP["p_ext"]]
        nees[k] = _nees(_baseline_rep(traj.truth[k]) - state.x, state.P)
        if est is not None:
            est[k] = xm

    record(0)
    k_done = 0
    try:
        for k in range(k_steps):
            state = predict(model, state, traj.imu[k], cfg.dt, qmat)
            state.x = qb.normalize_state(state.x)
            feats = traj.features[k]
            m = len(feats)
            mdim = sum(1 if f.kind == "plane" else 3 for f in feats)
            z = np.zeros(mdim + (qb.N_CONSTRAINTS if augmented else 0))
            rdiag = np.full(3 * m, cfg.sigma_feature**2)
            if augmented:
                rdiag = np.concatenate(
                    [rdiag, np.full(qb.N_CONSTRAINTS, CONSTRAINT_SIGMA**2)]
                )
            state, diag = update(
                model, state, z, np.diag(rdiag), ctx=feats, config=ucfg
            )
            state.x = qb.normalize_state(state.x)
            iters.append(diag.iterations)
            record(k + 1)
            k_done = k + 1
    except (UpdateSolverError, CutLocusError, SingularityError, ValueError) as exc:
        failed, failure = True, f"step {k_done + 1}: {exc}"
        errors, sigma3, nees = errors[: k_done + 1], sigma3[: k_done + 1], nees[: k_done + 1]

    xm = _manifold_rep_from_baseline(state.x)
    drift = float(np.linalg.norm(traj.truth[-1][REP["p"]] - xm[REP["p"]]))
    rot_err = so3_log(
        xm[REP["R_ext"]].reshape(3, 3).T @ traj.truth[-1][REP["R_ext"]].reshape(3, 3)
    )
    return TrialRecord(
        cfg=cfg,
        trial=trial,
        times=traj.times,
        truth=traj.truth,
        errors=errors,
        sigma3=sigma3,
        nees=nees,
        iterations=iters,
        final_drift=drift,
        final_ext_rot_deg=float(np.degrees(np.linalg.norm(rot_err))),
        final_ext_pos=float(np.linalg.norm(traj.truth[-1][REP["p_ext"]] - xm[REP["p_ext"]])),
        failed=failed,
        failure=failure,
        est_rep=est,
    )


def run_baseline(cfg: ScenarioConfig, trial: int = 0, traj=None) -> TrialRecord:
    """run_trial with the quaternion baseline regardless of cfg.filter."""
    return run_trial(dataclasses.replace(cfg, filter="quat"), trial, traj)


def gravity_containment(record: TrialRecord) -> float:
    """Fraction of (step, axis) samples with gravity error inside 3 sigma."""
    err = np.abs(record.errors[:, TAN["g"]])
    env = record.sigma3[:, TAN["g"]]
    return float(np.mean(err <= env))


def summarize(records: List[TrialRecord]) -> Dict[str, float]:
    """Aggregate trial records into the four summary metrics."""
    ok = [r for r in records if not r.failed]
    if not ok:
        return {
            "mean_nees": float("nan"),
            "containment_rate": 0.0,
            "final_drift_m": float("nan"),
            "iterations_mean": float("nan"),
        }
    nees = np.concatenate([r.nees for r in ok])
    iters = np.concatenate([np.asarray(r.iterations, dtype=float) for r in ok])
    return {
        "mean_nees": float(np.mean(nees[np.isfinite(nees)])),
        "containment_rate": float(np.mean([gravity_containment(r) for r in ok])),
        "final_drift_m": float(np.mean([r.final_drift for r in ok])),
        "iterations_mean": float(np.mean(iters)) if iters.size else 0.0,
    }


def run_monte_carlo(cfg: ScenarioConfig, trials: int) -> Dict:
    """Independent trials with per-trial RNG streams; deterministic reduce."""
    if trials < 1:
        raise ValueError("need at least one trial")
    records = [run_trial(cfg, trial=i) for i in range(trials)]
    summary = summarize(records)
    summary["trials"] = trials
    summary["failures"] = sum(int(r.failed) for r in records)
    return {"summary": summary, "records": records}


# ---------------------------------------------------------------------------
# output files

_CSV_HEADER = "step,t,block,component,truth,estimate,error,sigma3"
_BLOCK_TAN = [(name, TAN[name]) for name in BLOCKS]


def trial_csv_rows(record: TrialRecord) -> List[str]:
    """Per-step, per-tangent-component rows; curved blocks are charted.

    Rotation blocks are logged as rotation vectors; the gravity block is
    charted relative to the trial's initial gravity estimate so truth and
    estimate share one 2-dim chart.
    """
    if record.est_rep is None:
        raise ValueError("record was collected without keep_estimates")
    man = state_manifold()
    rows = [_CSV_HEADER]
    g_ref = record.est_rep[0][REP["g"]]
    sphere_g = man.parts[5]
    for k in range(record.errors.shape[0]):
        truth_t = _chart(man, sphere_g, record.truth[k], g_ref)
        est_t = _chart(man, sphere_g, record.est_rep[k], g_ref)
        t = record.times[k]
        for name, sl in _BLOCK_TAN:
            for c in range(sl.stop - sl.start):
                i = sl.start + c
                rows.append(
                    "%d,%.*g,%s,%d,%.*g,%.*g,%.*g,%.*g"
                    % (
                        k, 17, t, name, c,
                        17, truth_t[i], 17, est_t[i],
                        17, record.errors[k, i], 17, record.sigma3[k, i],
                    )
                )
    return rows


def _chart(man, sphere_g, x36: np.ndarray, g_ref: np.ndarray) -> np.ndarray:
    """Flatten a manifold state into 23 plot coordinates."""
    out = np.zeros(TANGENT_DIM)
    out[TAN["p"]] = x36[REP["p"]]
    out[TAN["v"]] = x36[REP["v"]]
    out[TAN["R"]] = so3_log(x36[REP["R"]].reshape(3, 3))
    out[TAN["ba"]] = x36[REP["ba"]]
    out[TAN["bw"]] = x36[REP["bw"]]
    out[TAN["g"]] = sphere_g.boxminus(x36[REP["g"]], g_ref)
    out[TAN["R_ext"]] = so3_log(x36[REP["R_ext"]].reshape(3, 3))
    out[TAN["p_ext"]] = x36[REP["p_ext"]]
    return out


def write_trial_csv(record: TrialRecord, path) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(trial_csv_rows(record)) + "\n")


def write_summary_json(summary: Dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
