"""Damped-least-squares IK, nullspace stepping, and RCM target generation.

The needle task is 5-DoF: three position components plus the two orientation
components that tilt the needle axis. Errors are expressed in the EE frame,
where the roll row vanishes identically, so solves use exactly the five task
rows of the body Jacobian.

The LM descent runs on row batches with per-row backtracking, damping, and
plateau state; the scalar solver is the batch-of-one special case, and the
grid optimizer feeds whole redundancy grids through the same code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..se3 import Pose, rot_mat
from ..robot import RobotModel, clamp_to_limits, fk_frames_batch, jacobian_body_batch

_X = np.array([1.0, 0.0, 0.0])
_Z = np.array([0.0, 0.0, 1.0])
_RESTART_SEED = 20240605

# An accepted step shrinking the merit by less than 1% is treated as stagnant;
# a healthy solve contracts by roughly the task gain every iteration.
_PLATEAU_RATIO = 0.99
_PLATEAU_LIMIT = 6
_STALL_LIMIT = 2
_BACKTRACKS = 6


@dataclass(frozen=True)
class IKSettings:
    """Solver gains and tolerances; defaults satisfy the 1 mm / 1 deg target."""

    damping: float = 1e-3
    k_e: float = 0.5
    k_c: float = 0.1
    eps_p: float = 1e-3
    eps_o: float = math.radians(1.0)
    max_iters: int = 200
    step_clamp: float = 0.05
    n_restarts: int = 4
    restart_scale: float = 0.15

    def __post_init__(self):
        if self.damping <= 0.0:
            raise ValueError("damping must be positive")
        if self.eps_p <= 0.0 or self.eps_o <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


def task_errors_batch(frames: np.ndarray, target_t: np.ndarray, target_z: np.ndarray):
    """Five-row body-frame task errors for EE frames (B, 4, 4).

    target_t/target_z may be single vectors or per-row (B, 3) arrays. Returns
    (e5 (B, 5), pos_norm (B,), ori_angle (B,)). The orientation rows rotate
    the current Z-axis toward the target Z-axis, the sense a positive task
    gain must drive.
    """
    rot = frames[:, :3, :3]
    trans = frames[:, :3, 3]
    dp = target_t - trans
    dp_b = np.einsum("bji,bj->bi", rot, dp)
    if target_z.ndim == 1:
        zt_b = np.einsum("bji,j->bi", rot, target_z)
    else:
        zt_b = np.einsum("bji,bj->bi", rot, target_z)
    cosang = np.clip(zt_b[:, 2], -1.0, 1.0)
    angle = np.arccos(cosang)
    sin_axis = np.hypot(zt_b[:, 0], zt_b[:, 1])
    scale = np.where(sin_axis > 1e-12, angle / np.maximum(sin_axis, 1e-12), 1.0)
    eo = np.stack([-zt_b[:, 1] * scale, zt_b[:, 0] * scale], axis=1)
    # Antiparallel target: rotate pi about the body x-axis, deterministically.
    eo[(sin_axis <= 1e-12) & (cosang < 0.0)] = [math.pi, 0.0]
    e5 = np.concatenate([dp_b, eo], axis=1)
    return e5, np.linalg.norm(dp, axis=1), angle


def task_error(target: Pose, current: Pose):
    """Scalar-case task error: (e5, pos_norm, ori_angle)."""
    e5, ep, eo = task_errors_batch(current.as_matrix()[None], target.translation,
                                   target.z_axis())
    return e5[0], float(ep[0]), float(eo[0])


def damped_pinv_apply(jac: np.ndarray, rhs: np.ndarray, damping) -> np.ndarray:
    """(J^T J + lambda I)^-1 J^T rhs, batched over leading dims."""
    jt = np.swapaxes(jac, -1, -2)
    n = jac.shape[-1]
    lam = np.asarray(damping, dtype=float)
    if lam.ndim:
        lam = lam.reshape(lam.shape + (1, 1))
    a = jt @ jac + lam * np.eye(n)
    return np.linalg.solve(a, jt @ rhs[..., None])[..., 0]


@dataclass(frozen=True)
class IKResult:
    q: np.ndarray
    success: bool
    iterations: int
    pos_error: float
    ori_error: float
    error_trace: tuple[float, ...] = ()


def _merits(ep, eo, s: IKSettings):
    return np.hypot(np.asarray(ep) / s.eps_p, np.asarray(eo) / s.eps_o)


def _lm_descent_batch(model: RobotModel, target: Pose, q_start: np.ndarray,
                      s: IKSettings, cols, budgets: np.ndarray,
                      record_trace: bool = False):
    """Lockstep damped-least-squares descent over rows (B, n).

    Per-row state: iteration budget, adaptive damping, stall and plateau
    counters. Steps are accepted only when they reduce the merit (backtracking
    line search), so every row's error trace is non-increasing. Returns
    (q, converged, iters_used, pos_err, ori_err, traces).
    """
    cols = list(cols)
    b = q_start.shape[0]
    lim = model.limits_array()
    q = clamp_to_limits(model, q_start.copy())
    frames = fk_frames_batch(model, q)
    e5, ep, eo = task_errors_batch(frames[:, -1], target.translation, target.z_axis())
    merit = _merits(ep, eo, s)
    traces = [[float(merit[i])] for i in range(b)] if record_trace else None

    damping = np.full(b, s.damping)
    stalls = np.zeros(b, dtype=int)
    plateau = np.zeros(b, dtype=int)
    iters = np.zeros(b, dtype=int)
    converged = (ep <= s.eps_p) & (eo <= s.eps_o)
    running = ~converged & (budgets > 0)

    while running.any():
        idx = np.where(running)[0]
        jb = jacobian_body_batch(model, q[idx], frames=frames[idx])
        jac = jb[:, :5][:, :, cols]
        step = damped_pinv_apply(jac, s.k_e * e5[idx], damping[idx])
        peak = np.abs(step).max(axis=1)
        shrink = np.where(peak > s.step_clamp, s.step_clamp / np.maximum(peak, 1e-30), 1.0)
        step = step * shrink[:, None]
        iters[idx] += 1

        alpha = np.ones(len(idx))
        pending = np.ones(len(idx), dtype=bool)
        accepted = np.zeros(len(idx), dtype=bool)
        for _ in range(_BACKTRACKS):
            trying = np.where(pending)[0]
            if trying.size == 0:
                break
            rows = idx[trying]
            q_try = q[rows].copy()
            q_try[:, cols] += alpha[trying, None] * step[trying]
            q_try = np.clip(q_try, lim[:, 0], lim[:, 1])
            frames_try = fk_frames_batch(model, q_try)
            e5_t, ep_t, eo_t = task_errors_batch(frames_try[:, -1], target.translation,
                                                 target.z_axis())
            merit_t = _merits(ep_t, eo_t, s)
            improve = merit_t <= merit[rows]
            good = rows[improve]
            gi = trying[improve]
            if good.size:
                q[good] = q_try[improve]
                frames[good] = frames_try[improve]
                e5[good] = e5_t[improve]
                ep[good] = ep_t[improve]
                eo[good] = eo_t[improve]
                plateau[good] = np.where(merit_t[improve] > _PLATEAU_RATIO * merit[good],
                                         plateau[good] + 1, 0)
                merit[good] = merit_t[improve]
                if record_trace:
                    for r in good:
                        traces[r].append(float(merit[r]))
                accepted[gi] = True
                pending[gi] = False
            alpha[pending] *= 0.5

        acc_rows = idx[accepted]
        rej_rows = idx[~accepted]
        stalls[acc_rows] = 0
        damping[acc_rows] = np.maximum(s.damping, damping[acc_rows] * 0.5)
        stalls[rej_rows] += 1
        damping[rej_rows] *= 10.0

        converged = (ep <= s.eps_p) & (eo <= s.eps_o)
        running = (~converged & (iters < budgets)
                   & (stalls < _STALL_LIMIT) & (plateau < _PLATEAU_LIMIT))
    return q, converged, iters, ep, eo, traces


def solve_ik_batch(model: RobotModel, target: Pose, q0_batch, settings: IKSettings | None = None,
                   use_partition: bool = True):
    """Batched solve_ik over initial configurations (B, n).

    Returns (q (B, n), success (B,), iterations (B,)). Restart perturbations
    come from one fixed-seed stream, so every row sees the same deterministic
    seed sequence the scalar solver uses.
    """
    s = settings or IKSettings()
    q0_batch = np.asarray(q0_batch, dtype=float)
    if not np.all(np.isfinite(q0_batch)):
        raise ValueError("initial configurations must be finite")
    cols = model.nonredundant_indices if use_partition else model.active_indices
    b = q0_batch.shape[0]
    budgets = np.full(b, s.max_iters)
    q, ok, used, ep, eo, _ = _lm_descent_batch(model, target, q0_batch, s, cols, budgets)

    rng = np.random.default_rng(_RESTART_SEED)
    span = model.limits_array()[:, 1] - model.limits_array()[:, 0]
    best_q, best_ep, best_eo = q, ep, eo
    best_merit = _merits(ep, eo, s)
    for _ in range(s.n_restarts):
        redo = ~ok & (used < s.max_iters)
        draw = rng.uniform(-1.0, 1.0, len(cols))
        if not redo.any():
            continue
        idx = np.where(redo)[0]
        q_seed = q0_batch[idx].copy()
        q_seed[:, cols] += s.restart_scale * span[list(cols)] * draw
        q_r, ok_r, used_r, ep_r, eo_r, _ = _lm_descent_batch(
            model, target, q_seed, s, cols, budgets[idx] - used[idx])
        used[idx] += used_r
        merit_r = _merits(ep_r, eo_r, s)
        better = ok_r | (merit_r < best_merit[idx])
        upd = idx[better]
        best_q[upd] = q_r[better]
        best_ep[upd] = ep_r[better]
        best_eo[upd] = eo_r[better]
        best_merit[upd] = merit_r[better]
        ok[idx] |= ok_r
    return best_q, ok, used, best_ep, best_eo


def solve_ik(model: RobotModel, target: Pose, q0, settings: IKSettings | None = None,
             use_partition: bool = True) -> IKResult:
    """Iteratively solve for a configuration whose EE pose reaches `target`.

    With use_partition only the non-redundant joints move (redundant values
    are respected as-is); otherwise all non-excluded joints participate.
    Failed solves stall quickly, retry from four deterministically perturbed
    seeds within the shared iteration budget, and report the best errors via
    the success flag; no exception is raised.
    """
    s = settings or IKSettings()
    q0 = np.asarray(q0, dtype=float)
    if not np.all(np.isfinite(q0)):
        raise ValueError("initial configuration must be finite")
    cols = model.nonredundant_indices if use_partition else model.active_indices
    budgets = np.array([s.max_iters])
    q, ok, used, ep, eo, traces = _lm_descent_batch(
        model, target, q0[None, :], s, cols, budgets, record_trace=True)
    best = IKResult(q[0], bool(ok[0]), int(used[0]), float(ep[0]), float(eo[0]),
                    tuple(traces[0]))
    if best.success:
        return best
    rng = np.random.default_rng(_RESTART_SEED)
    span = model.limits_array()[:, 1] - model.limits_array()[:, 0]
    total = best.iterations
    for _ in range(s.n_restarts):
        draw = rng.uniform(-1.0, 1.0, len(cols))
        if total >= s.max_iters:
            break
        q_seed = q0.copy()
        q_seed[list(cols)] += s.restart_scale * span[list(cols)] * draw
        q, ok, used, ep, eo, traces = _lm_descent_batch(
            model, target, q_seed[None, :], s, cols,
            np.array([s.max_iters - total]), record_trace=True)
        total += int(used[0])
        attempt = IKResult(q[0], bool(ok[0]), total, float(ep[0]), float(eo[0]),
                           tuple(traces[0]))
        if attempt.success:
            return attempt
        if _merits(attempt.pos_error, attempt.ori_error, s) \
                < _merits(best.pos_error, best.ori_error, s):
            best = replace(attempt, iterations=total)
    return replace(best, iterations=total)


def nullspace_step(model: RobotModel, target: Pose, q, q_ref,
                   settings: IKSettings | None = None) -> np.ndarray:
    """One resolved-rate step with nullspace attraction toward q_ref.

    The task term uses the damped inverse for robustness near singularities;
    the nullspace projector uses the exact pseudoinverse so secondary motion
    does not perturb the task to first order. The step infinity-norm is
    clamped to settings.step_clamp.
    """
    s = settings or IKSettings()
    q = np.asarray(q, dtype=float)
    q_ref = np.asarray(q_ref, dtype=float)
    cols = list(model.active_indices)
    frames = fk_frames_batch(model, q)
    e5, _, _ = task_errors_batch(frames[:, -1], target.translation, target.z_axis())
    jac = jacobian_body_batch(model, q, frames=frames)[0][:5, cols]
    step = damped_pinv_apply(jac, s.k_e * e5[0], s.damping)
    pinv = np.linalg.pinv(jac)
    proj = np.eye(len(cols)) - pinv @ jac
    step = step + proj @ (s.k_c * (q_ref[cols] - q[cols]))
    peak = np.abs(step).max()
    if peak > s.step_clamp:
        step = step * (s.step_clamp / peak)
    q_new = q.copy()
    q_new[cols] += step
    return q_new


def calc_local_targets(nominal: Pose, delta_zenith: float, n_zenith: int,
                       m_radial: int) -> list[Pose]:
    """Conical RCM probe poses around a nominal insertion pose.

    Produces n_zenith rings of m_radial + 1 poses each (zenith-major order).
    All poses share the nominal translation; ring i tilts the needle axis by
    i * delta_zenith / n_zenith, and poses within a ring step it around the
    nominal axis by 2*pi / m_radial.
    """
    if not 0.0 < delta_zenith <= math.pi / 2.0 + 1e-12:
        raise ValueError("delta_zenith must lie in (0, pi/2]")
    if n_zenith < 1 or m_radial < 1:
        raise ValueError("ring and radial counts must be at least 1")
    poses = []
    r_nom = nominal.rotation
    t_nom = nominal.translation
    for i in range(1, n_zenith + 1):
        tilt = rot_mat(_X, i * delta_zenith / n_zenith)
        for j in range(0, m_radial + 1):
            swing = rot_mat(_Z, j * 2.0 * math.pi / m_radial)
            poses.append(Pose(r_nom @ swing @ tilt, t_nom))
    return poses
