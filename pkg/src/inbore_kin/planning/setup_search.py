"""Dexterous-setup search: configuration cost, adjustability gate, global grid.

A candidate redundant-joint assignment is scored by solving the nominal IK
with those joints pinned, then validating that the wrist can sweep the whole
RCM probe cone without leaving the feasible or collision-free spaces. The
cost of a cell depends only on its nominal solution; the cone walk merely
gates feasibility, so the grid is walked in ascending nominal-cost order and
the first adjustable cell is the grid optimum.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..se3 import Pose
from ..robot import RobotModel, fk_frames_batch, jacobian_body_batch
from ..transmission import TransmissionModel
from ..world import (ALL_CLASSES, CLASS_BORE, CLASS_PATIENT, CLASS_ROBOT_SELF,
                     Environment, distance_from_origins, distance_to_class_batch)
from .cspace import TaskWrench, c_feas_mask_batch, default_insertion_wrench
from .ik import (IKSettings, _merits, calc_local_targets, damped_pinv_apply,
                 solve_ik, solve_ik_batch, task_errors_batch)

W_SINGULAR = 1e-10
W_FLOOR = 1e-6


@dataclass(frozen=True)
class CostWeights:
    """Priorities for dexterity, bore/patient clearance, and joint motion."""

    alpha: float = 1.0
    beta: float = 0.5
    gamma: float = 0.1
    c_infeasible: float = 1e9
    distance_floor: float = 1e-4
    motion_regularizer: float = 0.1


@dataclass(frozen=True)
class SetupResult:
    """Outcome of one dexterous-setup evaluation."""

    cost: float
    q_star: np.ndarray
    feasible: bool
    diagnostics: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        diag = {}
        for k, v in self.diagnostics.items():
            if isinstance(v, np.ndarray):
                v = v.tolist()
            elif isinstance(v, (np.floating, np.integer)):
                v = v.item()
            diag[k] = v
        return {
            "cost": float(self.cost),
            "q_star": [float(x) for x in self.q_star],
            "feasible": bool(self.feasible),
            "diagnostics": diag,
        }


def manipulability_batch(model: RobotModel, q_batch, jb_batch=None) -> np.ndarray:
    """sqrt(det(J J^T)) over the roll/pitch rows of the body Jacobian, (B,)."""
    if jb_batch is None:
        jb_batch = jacobian_body_batch(model, q_batch)
    sub = jb_batch[:, 3:5, :]
    gram = sub @ np.swapaxes(sub, 1, 2)
    det = gram[:, 0, 0] * gram[:, 1, 1] - gram[:, 0, 1] * gram[:, 1, 0]
    return np.sqrt(np.maximum(det, 0.0))


def manipulability(model: RobotModel, q) -> float:
    return float(manipulability_batch(model, np.asarray(q, dtype=float)[None, :])[0])


# Patient-clearance cost excludes the needle-insertion mechanism (last link).
def _patient_link_mask(model: RobotModel) -> np.ndarray:
    mask = np.ones(model.n_joints, dtype=bool)
    mask[-1] = False
    return mask


def configuration_cost_batch(model: RobotModel, env: Environment, q_batch, q0,
                             weights: CostWeights | None = None) -> np.ndarray:
    """Batched setup cost; saturates at c_infeasible on contact or singularity."""
    w = weights or CostWeights()
    q_batch = np.asarray(q_batch, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    manip = manipulability_batch(model, q_batch)
    d_bore = distance_to_class_batch(env, model, q_batch, {CLASS_BORE})
    d_pat = distance_to_class_batch(env, model, q_batch, {CLASS_PATIENT},
                                    link_mask=_patient_link_mask(model))
    d_motion = np.linalg.norm(q_batch - q0, axis=1)
    cost = (w.alpha / np.maximum(manip, W_FLOOR)
            + (1.0 - w.beta) / np.maximum(d_bore, w.distance_floor)
            + w.beta / np.maximum(d_pat, w.distance_floor)
            + w.gamma / (d_motion + w.motion_regularizer))
    bad = (manip < W_SINGULAR) | (d_bore <= 0.0) | (d_pat <= 0.0)
    return np.where(bad, w.c_infeasible, np.minimum(cost, w.c_infeasible))


def configuration_cost(model: RobotModel, env: Environment, q, q0,
                       weights: CostWeights | None = None) -> float:
    """Setup cost: inverse manipulability, inverse clearances, motion penalty.

    The patient term excludes the needle-insertion link; distances are floored
    so legitimate costs stay well below the infeasible sentinel.
    """
    return float(configuration_cost_batch(model, env,
                                          np.asarray(q, dtype=float)[None, :], q0, weights)[0])


_WALK_STAGNATION_WINDOW = 12


def _walk_probe_cone(model: RobotModel, env: Environment,
                     transmission: TransmissionModel | None, targets: list[Pose],
                     q_nominal: np.ndarray, s: IKSettings, f_req: TaskWrench,
                     max_steps: int, fail_fast: bool = True) -> tuple[bool, dict]:
    """Drive the wrist to every probe pose with nullspace-held gradient steps.

    All probe targets advance in lockstep (independent walks from the same
    nominal configuration). Every accepted step is checked against the
    effort-feasible space and the padded collision-free space; any violation
    or unconverged walker makes the cone unreachable. With fail_fast=False
    failing walkers are retired individually and the fraction of successful
    probes is reported alongside the all-or-nothing verdict.
    """
    cols = list(model.active_indices)
    n_t = len(targets)
    tgt_t = np.array([t.translation for t in targets])
    tgt_z = np.array([t.z_axis() for t in targets])
    lim = model.limits_array()

    q_walk = np.repeat(q_nominal[None, :], n_t, axis=0)
    converged = np.zeros(n_t, dtype=bool)
    failed = np.zeros(n_t, dtype=bool)
    frames = fk_frames_batch(model, q_walk)
    steps = 0
    eye = np.eye(len(cols))
    last_metric = np.inf
    fail_reason = ""

    def report(ok: bool, reason: str = "", extra: dict | None = None):
        info = {"walk_steps": steps,
                "target_fraction": float(converged.mean())}
        if reason:
            info["reason"] = reason
        if extra:
            info.update(extra)
        return ok, info

    # Clearance slack per walker: every capsule point moves at most as far as
    # the most-displaced joint origin, so a walker provably stays clear of the
    # padding surface until its accumulated motion eats the measured
    # clearance; only then is the exact distance recomputed.
    slack = distance_from_origins(env, model, frames[:, :, :3, 3], ALL_CLASSES) \
        - env.padding
    if slack.min() <= 0.0:
        failed[:] = True
        return report(False, "cone walk collided",
                      {"min_distance": float(slack.min() + env.padding)})

    while True:
        e5, ep, eo = task_errors_batch(frames[:, -1], tgt_t, tgt_z)
        converged |= ~failed & (ep <= s.eps_p) & (eo <= s.eps_o)
        active = ~converged & ~failed
        if not active.any():
            return report(not failed.any(), fail_reason)
        if steps >= max_steps:
            return report(False, "cone walk did not converge")
        if steps and steps % _WALK_STAGNATION_WINDOW == 0:
            metric = float(_merits(ep[active], eo[active], s).max())
            if metric > 0.99 * last_metric:
                return report(False, "cone walk stagnated")
            last_metric = metric

        idx = np.where(active)[0]
        jb = jacobian_body_batch(model, q_walk[idx], frames=frames[idx])
        jac = jb[:, :5][:, :, cols]
        step = damped_pinv_apply(jac, s.k_e * e5[idx], s.damping)
        pinv = np.linalg.pinv(jac)
        proj = eye - pinv @ jac
        attract = s.k_c * (q_nominal[cols] - q_walk[idx][:, cols])
        step = step + np.einsum("bij,bj->bi", proj, attract)
        peak = np.abs(step).max(axis=1)
        shrink = np.where(peak > s.step_clamp, s.step_clamp / np.maximum(peak, 1e-30), 1.0)
        step = step * shrink[:, None]
        q_walk[np.ix_(idx, cols)] += step
        steps += 1

        # Per-step constraint gate, as the RCM adjustability definition demands.
        viol = np.zeros(len(idx), dtype=bool)
        viol |= np.any((q_walk[idx] < lim[:, 0]) | (q_walk[idx] > lim[:, 1]), axis=1)
        frames_new = fk_frames_batch(model, q_walk[idx])
        jb_new = jacobian_body_batch(model, q_walk[idx], frames=frames_new)
        feas = c_feas_mask_batch(model, transmission, q_walk[idx], f_req, jb_batch=jb_new)
        viol |= ~feas
        if viol.any() and fail_fast:
            failed[idx[viol]] = True
            return report(False, "cone walk left feasible space")
        motion = np.linalg.norm(frames_new[:, :, :3, 3] - frames[idx][:, :, :3, 3],
                                axis=2).max(axis=1)
        slack[idx] -= motion
        need = slack[idx] <= 0.0
        if need.any():
            dist = distance_from_origins(env, model, frames_new[need][:, :, :3, 3],
                                         ALL_CLASSES)
            hit = dist <= env.padding
            if hit.any():
                if fail_fast:
                    failed[idx[need][hit]] = True
                    return report(False, "cone walk collided",
                                  {"min_distance": float(dist.min())})
                viol[need] |= hit
            slack[idx[need]] = dist - env.padding
        if viol.any():
            failed[idx[viol]] = True
            fail_reason = "some probe walks violated constraints"
        frames[idx] = frames_new


def _nominal_diagnostics(model, env, transmission, q, f_req) -> dict:
    from .cspace import effort_limits, required_efforts

    tau = required_efforts(model, q, f_req)
    tau_max = effort_limits(model, transmission, q)
    return {
        "bore_distance": float(distance_to_class_batch(env, model, q[None, :], {CLASS_BORE})[0]),
        "patient_distance": float(distance_to_class_batch(
            env, model, q[None, :], {CLASS_PATIENT}, link_mask=_patient_link_mask(model))[0]),
        "self_distance": float(distance_to_class_batch(env, model, q[None, :],
                                                       {CLASS_ROBOT_SELF})[0]),
        "manipulability": manipulability(model, q),
        "effort_margin": float(np.min(tau_max - tau)),
    }


def ik_configuration_loss(model: RobotModel, env: Environment,
                          transmission: TransmissionModel | None, target: Pose,
                          q0, redundant_values, weights: CostWeights | None = None,
                          delta_adj: float = math.radians(15.0),
                          settings: IKSettings | None = None,
                          f_req: TaskWrench | None = None,
                          n_zenith: int = 8, m_radial: int = 8,
                          max_walk_steps: int = 250,
                          walk_fail_fast: bool = True) -> SetupResult:
    """Cost and configuration for one redundant-joint assignment.

    Pins the redundant joints to redundant_values, solves the nominal IK for
    the remaining joints, and requires the solution to be collision-free,
    effort-feasible, and adjustable over the RCM probe cone (delta_adj = 0
    skips the cone). Any violation yields (c_infeasible, q0) with q0 returned
    verbatim; infeasibility is a value, not an error.
    """
    w = weights or CostWeights()
    s = settings or IKSettings()
    f = f_req or default_insertion_wrench()
    q0 = np.asarray(q0, dtype=float)

    def infeasible(reason: str, extra: dict | None = None) -> SetupResult:
        diag = {"reason": reason, "redundant_values": np.asarray(redundant_values, dtype=float)}
        if extra:
            diag.update(extra)
        return SetupResult(w.c_infeasible, q0.copy(), False, diag)

    red = list(model.redundant_indices)
    values = np.atleast_1d(np.asarray(redundant_values, dtype=float))
    if len(values) != len(red):
        raise ValueError(f"expected {len(red)} redundant values, got {len(values)}")
    q_init = q0.copy()
    q_init[red] = values

    ik = solve_ik(model, target, q_init, s, use_partition=True)
    if not ik.success:
        return infeasible("nominal IK did not converge",
                          {"pos_error": ik.pos_error, "ori_error": ik.ori_error})
    return _loss_from_nominal(model, env, transmission, target, q0, values, ik.q,
                              ik.iterations, w, s, f, delta_adj, n_zenith, m_radial,
                              max_walk_steps, walk_fail_fast)


def _loss_from_nominal(model, env, transmission, target, q0, values, q, ik_iterations,
                       w, s, f, delta_adj, n_zenith, m_radial, max_walk_steps,
                       fail_fast: bool = True) -> SetupResult:
    """Gates, cone walk, and cost for an already-solved nominal configuration."""

    def infeasible(reason: str, extra: dict | None = None) -> SetupResult:
        diag = {"reason": reason, "redundant_values": np.asarray(values, dtype=float)}
        if extra:
            diag.update(extra)
        return SetupResult(w.c_infeasible, np.asarray(q0, dtype=float).copy(), False, diag)

    if not c_feas_mask_batch(model, transmission, q[None, :], f)[0]:
        return infeasible("nominal configuration cannot hold the task wrench")
    dist = distance_to_class_batch(env, model, q[None, :], ALL_CLASSES)[0]
    if dist <= env.padding:
        return infeasible("nominal configuration too close to obstacles",
                          {"min_distance": float(dist)})

    walk_info = {"walk_steps": 0}
    if delta_adj > 0.0:
        targets = calc_local_targets(target, delta_adj, n_zenith, m_radial)
        ok, walk_info = _walk_probe_cone(model, env, transmission, targets, q, s, f,
                                         max_walk_steps, fail_fast=fail_fast)
        if not ok:
            return infeasible(walk_info.pop("reason", "cone walk failed"), walk_info)

    cost = configuration_cost(model, env, q, q0, w)
    if cost >= w.c_infeasible:
        return infeasible("cost saturated (singularity or zero clearance)")
    diag = _nominal_diagnostics(model, env, transmission, q, f)
    diag.update(walk_info)
    diag["ik_iterations"] = ik_iterations
    diag["redundant_values"] = np.asarray(values, dtype=float)
    return SetupResult(cost, q, True, diag)


def _screen_cells(model, env, transmission, target, q0, cells, w, s, f):
    """Batched nominal screening of redundancy cells: solutions, costs, iters."""
    q0 = np.asarray(q0, dtype=float)
    red = list(model.redundant_indices)
    q_starts = np.repeat(q0[None, :], len(cells), axis=0)
    q_starts[:, red] = cells
    q_sol, ok, iters, _, _ = solve_ik_batch(model, target, q_starts, s, use_partition=True)
    costs = np.full(len(cells), w.c_infeasible)
    if ok.any():
        idx = np.where(ok)[0]
        feas = c_feas_mask_batch(model, transmission, q_sol[idx], f)
        idx = idx[feas]
        if idx.size:
            dist = distance_to_class_batch(env, model, q_sol[idx], ALL_CLASSES)
            idx = idx[dist > env.padding]
        if idx.size:
            costs[idx] = configuration_cost_batch(model, env, q_sol[idx], q0, w)
    return q_sol, costs, iters


def optimize_setup(model: RobotModel, env: Environment,
                   transmission: TransmissionModel | None, target: Pose, q0,
                   weights: CostWeights | None = None,
                   delta_adj: float = math.radians(15.0),
                   settings: IKSettings | None = None,
                   f_req: TaskWrench | None = None,
                   grid_shape: tuple[int, ...] = (17, 17),
                   refine_k: int = 5, shrink_rounds: int = 3,
                   n_zenith: int = 8, m_radial: int = 8,
                   stop_at_first_feasible: bool = False,
                   deadline: float | None = None,
                   max_walk_steps: int = 250,
                   max_walked_cells: int | None = None,
                   walk_fail_fast: bool = True) -> SetupResult:
    """Global dexterous-setup search over the redundant-joint box.

    Deterministic coarse grid over the redundant joints (the cell at q0's own
    redundant values is always included), followed by pattern-search
    refinement with `shrink_rounds` halvings around the best refine_k cells.
    Cells are screened with a batched nominal solve, then walked through
    ik_configuration_loss in ascending nominal-cost order; the returned
    result is always a plain ik_configuration_loss outcome.
    stop_at_first_feasible keeps the first adjustable cell (a reachability
    witness) and skips refinement; `deadline` (time.monotonic seconds) aborts
    between cells, marking the result timed_out.
    """
    w = weights or CostWeights()
    s = settings or IKSettings()
    f = f_req or default_insertion_wrench()
    q0 = np.asarray(q0, dtype=float)
    red = list(model.redundant_indices)
    lim = model.limits_array()

    loss_args = (w, s, f, delta_adj, n_zenith, m_radial, max_walk_steps,
                 walk_fail_fast)

    def out_of_time() -> bool:
        return deadline is not None and time.monotonic() > deadline

    stats = {"cells_evaluated": 0, "cells_walked": 0, "timed_out": False,
             "best_cone_fraction": 0.0}

    def track_fraction(res: SetupResult) -> None:
        frac = res.diagnostics.get("target_fraction")
        if res.feasible:
            frac = 1.0
        if frac is not None:
            stats["best_cone_fraction"] = max(stats["best_cone_fraction"], float(frac))

    def finish(result: SetupResult) -> SetupResult:
        diag = dict(result.diagnostics)
        diag.update(stats)
        return SetupResult(result.cost, result.q_star, result.feasible, diag)

    if not red:
        res = ik_configuration_loss(model, env, transmission, target, q0, (),
                                    weights=w, delta_adj=delta_adj, settings=s,
                                    f_req=f, n_zenith=n_zenith, m_radial=m_radial,
                                    max_walk_steps=max_walk_steps,
                                    walk_fail_fast=walk_fail_fast)
        stats["cells_evaluated"] = 1
        stats["cells_walked"] = 1
        track_fraction(res)
        return finish(res)

    axes = [np.linspace(lim[j, 0], lim[j, 1],
                        grid_shape[k] if k < len(grid_shape) else grid_shape[-1])
            for k, j in enumerate(red)]
    mesh = np.meshgrid(*axes, indexing="ij")
    cells = np.stack([m.ravel() for m in mesh], axis=1)
    q0_cell = q0[red][None, :]
    if not np.any(np.all(np.isclose(cells, q0_cell, atol=1e-12), axis=1)):
        cells = np.vstack([q0_cell, cells])

    q_sol, costs, iters = _screen_cells(model, env, transmission, target, q0,
                                        cells, w, s, f)
    stats["cells_evaluated"] += len(cells)
    order = np.lexsort((np.arange(len(cells)), costs))

    best = SetupResult(w.c_infeasible, q0.copy(), False,
                       {"reason": "no adjustable cell on the grid"})
    for i in order:
        if costs[i] >= w.c_infeasible:
            break
        if out_of_time():
            stats["timed_out"] = True
            break
        if max_walked_cells is not None and stats["cells_walked"] >= max_walked_cells:
            stats["walk_budget_exhausted"] = True
            break
        res = _loss_from_nominal(model, env, transmission, target, q0, cells[i],
                                 q_sol[i], int(iters[i]), *loss_args)
        stats["cells_walked"] += 1
        track_fraction(res)
        if res.feasible:
            best = res
            break

    if stop_at_first_feasible or not best.feasible:
        return finish(best)

    # Pattern-search refinement around the cheapest screened cells.
    spacing = np.array([(lim[j, 1] - lim[j, 0])
                        / max(grid_shape[min(k, len(grid_shape) - 1)] - 1, 1)
                        for k, j in enumerate(red)])
    for seed_idx in order[:refine_k]:
        if costs[seed_idx] >= w.c_infeasible or out_of_time():
            break
        center = cells[seed_idx].copy()
        h = spacing / 2.0
        shrinks = 0
        while shrinks < shrink_rounds:
            if out_of_time():
                stats["timed_out"] = True
                break
            improved = False
            for dim in range(len(red)):
                for sign in (-1.0, 1.0):
                    values = center.copy()
                    values[dim] = np.clip(values[dim] + sign * h[dim],
                                          lim[red[dim], 0], lim[red[dim], 1])
                    q_n, cost_n, it_n = _screen_cells(model, env, transmission,
                                                      target, q0, values[None, :],
                                                      w, s, f)
                    stats["cells_evaluated"] += 1
                    if cost_n[0] >= best.cost:
                        continue
                    res = _loss_from_nominal(model, env, transmission, target, q0,
                                             values, q_n[0], int(it_n[0]), *loss_args)
                    stats["cells_walked"] += 1
                    track_fraction(res)
                    if res.feasible and res.cost < best.cost:
                        best = res
                        center = values
                        improved = True
            if not improved:
                h /= 2.0
                shrinks += 1
    return finish(best)
