"""Bidirectional RRT in joint space with dense edge checking and smoothing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..robot import RobotModel, within_limits
from ..world import ALL_CLASSES, Environment, distance_to_class_batch


@dataclass(frozen=True)
class PlanResult:
    path: tuple[np.ndarray, ...] | None
    success: bool
    n_samples: int
    message: str = ""


def config_is_free(model: RobotModel, env: Environment, q) -> bool:
    q = np.asarray(q, dtype=float)
    if not within_limits(model, q):
        return False
    return bool(distance_to_class_batch(env, model, q[None, :], ALL_CLASSES)[0] > env.padding)


def edge_is_free(model: RobotModel, env: Environment, qa, qb, step: float) -> bool:
    """Check the straight joint-space edge at `step` resolution (batched fk)."""
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    span = float(np.abs(qb - qa).max())
    n = max(int(np.ceil(span / step)), 1) + 1
    t = np.linspace(0.0, 1.0, n)
    samples = qa[None, :] + t[:, None] * (qb - qa)[None, :]
    lim = model.limits_array()
    if np.any(samples < lim[:, 0]) or np.any(samples > lim[:, 1]):
        return False
    d = distance_to_class_batch(env, model, samples, ALL_CLASSES)
    return bool(np.all(d > env.padding))


def path_is_collision_free(model: RobotModel, env: Environment, path, step: float) -> bool:
    return all(edge_is_free(model, env, path[i], path[i + 1], step)
               for i in range(len(path) - 1))


def _steer(q_from, q_to, step):
    delta = q_to - q_from
    span = float(np.abs(delta).max())
    if span <= step:
        return q_to.copy(), True
    return q_from + delta * (step / span), False


class _Tree:
    def __init__(self, root):
        self.nodes = [np.asarray(root, dtype=float)]
        self.parents = [-1]

    def nearest(self, q):
        arr = np.asarray(self.nodes)
        return int(np.argmin(np.linalg.norm(arr - q, axis=1)))

    def add(self, q, parent):
        self.nodes.append(q)
        self.parents.append(parent)
        return len(self.nodes) - 1

    def branch(self, idx):
        out = []
        while idx >= 0:
            out.append(self.nodes[idx])
            idx = self.parents[idx]
        return out


def _shortcut(model, env, path, step, attempts, rng):
    path = [np.asarray(p, dtype=float) for p in path]
    for _ in range(attempts):
        if len(path) < 3:
            break
        i = int(rng.integers(0, len(path) - 2))
        j = int(rng.integers(i + 2, len(path)))
        if edge_is_free(model, env, path[i], path[j], step):
            path = path[: i + 1] + path[j:]
    return path


def plan_birrt(model: RobotModel, env: Environment, q_start, q_goal,
               step: float = 0.05, max_samples: int = 2000, seed: int = 0,
               smooth_attempts: int = 200) -> PlanResult:
    """Connect q_start to q_goal with a collision-free joint-space path.

    Both endpoints must already be collision-free (raises ValueError
    otherwise); running out of samples returns an explicit failure. The
    returned path is shortcut-smoothed and every edge is valid at `step`
    resolution.
    """
    q_start = np.asarray(q_start, dtype=float)
    q_goal = np.asarray(q_goal, dtype=float)
    if not config_is_free(model, env, q_start):
        raise ValueError("start configuration is not collision-free")
    if not config_is_free(model, env, q_goal):
        raise ValueError("goal configuration is not collision-free")
    rng = np.random.default_rng(seed)

    if np.array_equal(q_start, q_goal):
        return PlanResult((q_start.copy(),), True, 0)
    if edge_is_free(model, env, q_start, q_goal, step):
        path = _shortcut(model, env, [q_start, q_goal], step, 0, rng)
        return PlanResult(tuple(path), True, 0)

    lim = model.limits_array()
    tree_a, tree_b = _Tree(q_start), _Tree(q_goal)
    swapped = False

    for n in range(max_samples):
        q_rand = rng.uniform(lim[:, 0], lim[:, 1])
        near = tree_a.nearest(q_rand)
        q_new, _ = _steer(tree_a.nodes[near], q_rand, step)
        if not edge_is_free(model, env, tree_a.nodes[near], q_new, step):
            tree_a, tree_b = tree_b, tree_a
            swapped = not swapped
            continue
        idx_a = tree_a.add(q_new, near)

        # Greedily connect the other tree toward the new node.
        near_b = tree_b.nearest(q_new)
        q_cur = tree_b.nodes[near_b]
        parent = near_b
        reached = False
        while True:
            q_next, done = _steer(q_cur, q_new, step)
            if not edge_is_free(model, env, q_cur, q_next, step):
                break
            parent = tree_b.add(q_next, parent)
            q_cur = q_next
            if done:
                reached = True
                break
        if reached:
            branch_a = tree_a.branch(idx_a)[::-1]
            branch_b = tree_b.branch(parent)
            path = branch_a + branch_b[1:]
            if swapped:
                path = path[::-1]
            path = _shortcut(model, env, path, step, smooth_attempts, rng)
            return PlanResult(tuple(path), True, n + 1)
        tree_a, tree_b = tree_b, tree_a
        swapped = not swapped

    return PlanResult(None, False, max_samples, "sample budget exhausted without connection")
