"""Reachability sweeps over patient bodies, joint-subset ablations, statistics.

A candidate insertion site is `reachable` when the setup search finds a
configuration from which the whole RCM probe cone can be swept (binary,
strict). The per-candidate `cone_fraction` additionally reports the best
fraction of individual cone poses reached, which is the quantity the
body-surface maps shade.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats as sstats

from .robot import RobotModel
from .se3 import Pose
from .transmission import TransmissionModel
from .world import Environment
from .planning import CostWeights, IKSettings, optimize_setup
from .scenes import insertion_target

JOINT_SUBSETS = {
    "5dof": (0, 1, 2, 3, 6),
    "6dof-insertion": (0, 1, 2, 3, 6, 7),
    "7dof-insertion-yaw": (0, 1, 2, 3, 4, 6, 7),
    "7dof-insertion-pitch": (0, 1, 2, 3, 5, 6, 7),
    "8dof": (0, 1, 2, 3, 4, 5, 6, 7),
}

SWEEP_GRID = (9, 9)
SWEEP_MAX_WALK_STEPS = 180
SWEEP_MAX_WALKED_CELLS = 24


@dataclass(frozen=True)
class ReachabilityRecord:
    """Outcome of the dexterous-setup search for one candidate site."""

    candidate_id: int
    vertex: np.ndarray
    reachable: bool
    cost: float
    q_star: np.ndarray | None
    wall_time: float
    cone_fraction: float
    timed_out: bool = False
    witness_from: str = ""


@dataclass(frozen=True)
class SweepReport:
    """All candidate outcomes for one body and one joint subset."""

    body: str
    subset_label: str
    records: tuple[ReachabilityRecord, ...]
    seed: int = 0

    @property
    def fraction(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.reachable for r in self.records) / len(self.records)

    @property
    def mean_cone_fraction(self) -> float:
        if not self.records:
            return 0.0
        return float(np.mean([r.cone_fraction for r in self.records]))


@dataclass(frozen=True)
class SweepOptions:
    """Planner profile for sweeps: coarse grid, witness-only search, budgets."""

    delta_adj: float = math.radians(60.0)
    weights: CostWeights = field(default_factory=CostWeights)
    settings: IKSettings = field(default_factory=IKSettings)
    grid_shape: tuple[int, ...] = SWEEP_GRID
    n_zenith: int = 8
    m_radial: int = 8
    candidate_budget_s: float = 2.0
    standoff: float = 0.10
    jobs: int = 1


def _validate_subset(model: RobotModel, subset) -> tuple[int, ...]:
    subset = tuple(sorted(int(i) for i in subset))
    if any(i < 0 or i >= model.n_joints for i in subset):
        raise ValueError(f"joint subset {subset} has out-of-range indices")
    core = set(model.nonredundant_indices)
    if not core <= set(subset):
        raise ValueError(f"joint subset must contain the task core {sorted(core)}")
    return subset


def _evaluate_candidates(model_subset, env, transmission, candidates, q_nominal,
                         opts: SweepOptions) -> list[ReachabilityRecord]:
    records = []
    for cid, cand in candidates:
        target = insertion_target(cand, opts.standoff)
        start = time.monotonic()
        res = optimize_setup(
            model_subset, env, transmission, target, q_nominal,
            weights=opts.weights, delta_adj=opts.delta_adj, settings=opts.settings,
            grid_shape=opts.grid_shape, n_zenith=opts.n_zenith,
            m_radial=opts.m_radial, stop_at_first_feasible=True,
            deadline=start + opts.candidate_budget_s,
            max_walk_steps=SWEEP_MAX_WALK_STEPS,
            max_walked_cells=SWEEP_MAX_WALKED_CELLS, walk_fail_fast=False)
        elapsed = time.monotonic() - start
        records.append(ReachabilityRecord(
            candidate_id=cid,
            vertex=cand.translation,
            reachable=res.feasible,
            cost=res.cost,
            q_star=res.q_star if res.feasible else None,
            wall_time=elapsed,
            cone_fraction=float(res.diagnostics.get("best_cone_fraction", 0.0)),
            timed_out=bool(res.diagnostics.get("timed_out", False)),
        ))
    return records


def sweep(model: RobotModel, env: Environment, transmission: TransmissionModel | None,
          candidates: list[Pose], q_nominal, joint_subset,
          opts: SweepOptions | None = None, body: str = "", seed: int = 0,
          subset_label: str = "") -> SweepReport:
    """Reachability of every candidate with non-subset joints frozen at the
    nominal setup configuration. Deterministic given configuration; failures
    and timeouts are records, never errors.
    """
    opts = opts or SweepOptions()
    subset = _validate_subset(model, joint_subset)
    model_subset = model.with_frozen(subset)
    q_nominal = np.asarray(q_nominal, dtype=float)
    tagged = list(enumerate(candidates))

    if opts.jobs > 1 and len(tagged) > 1:
        chunks = [tagged[i::opts.jobs] for i in range(opts.jobs)]
        with ProcessPoolExecutor(max_workers=opts.jobs) as pool:
            parts = list(pool.map(_sweep_chunk,
                                  [(model_subset, env, transmission, chunk,
                                    q_nominal, opts) for chunk in chunks]))
        records = [r for part in parts for r in part]
        records.sort(key=lambda r: r.candidate_id)
    else:
        records = _evaluate_candidates(model_subset, env, transmission, tagged,
                                       q_nominal, opts)
    label = subset_label or ",".join(str(i + 1) for i in subset)
    return SweepReport(body, label, tuple(records), seed=seed)


def _sweep_chunk(args):
    return _evaluate_candidates(*args)


def ablate(model: RobotModel, env: Environment, transmission: TransmissionModel | None,
           candidates: list[Pose], q_nominal, subsets: dict[str, tuple[int, ...]],
           opts: SweepOptions | None = None, body: str = "", seed: int = 0,
           share_witnesses: bool = True) -> list[SweepReport]:
    """Paired sweeps over joint subsets on identical candidates.

    With share_witnesses (default), a candidate proven reachable with a
    subset of joints certifies reachability for every superset too: the
    frozen-joint walk that succeeded is a valid witness trajectory for the
    larger robot, so nested subsets are monotone by construction even when
    the superset's own local search misses or times out.
    """
    if not subsets:
        raise ValueError("at least one joint subset is required")
    reports = [sweep(model, env, transmission, candidates, q_nominal, subset,
                     opts=opts, body=body, seed=seed, subset_label=label)
               for label, subset in subsets.items()]
    if not share_witnesses:
        return reports

    order = sorted(range(len(reports)), key=lambda i: len(tuple(subsets.values())[i]))
    labels = list(subsets.keys())
    sets = [frozenset(subsets[labels[i]]) for i in range(len(labels))]
    updated = {i: list(reports[i].records) for i in range(len(reports))}
    for i in order:
        for j in order:
            if i == j or not (sets[i] < sets[j]):
                continue
            for k, (small, big) in enumerate(zip(updated[i], updated[j])):
                if small.reachable and not big.reachable:
                    updated[j][k] = replace(small, wall_time=big.wall_time,
                                            witness_from=labels[i])
                elif small.cone_fraction > big.cone_fraction:
                    updated[j][k] = replace(big, cone_fraction=small.cone_fraction)
    return [SweepReport(r.body, r.subset_label, tuple(updated[i]), seed=r.seed)
            for i, r in enumerate(reports)]


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    n: int
    degenerate: bool = False

    def __iter__(self):
        return iter((self.t, self.p))


def paired_t_test(a: SweepReport, b: SweepReport) -> TTestResult:
    """Classical paired t-test over per-candidate reachability indicators.

    Identical reports give (t=0, p=1); zero difference variance with a
    nonzero mean is flagged degenerate with an undefined p.
    """
    ids_a = [r.candidate_id for r in a.records]
    ids_b = [r.candidate_id for r in b.records]
    if ids_a != ids_b:
        raise ValueError("reports are not candidate-aligned")
    n = len(ids_a)
    if n < 2:
        raise ValueError("paired t-test needs at least two candidates")
    d = np.array([float(ra.reachable) - float(rb.reachable)
                  for ra, rb in zip(a.records, b.records)])
    sd = d.std(ddof=1)
    if sd == 0.0:
        if np.all(d == 0.0):
            return TTestResult(0.0, 1.0, n)
        return TTestResult(math.inf if d.mean() > 0 else -math.inf, math.nan, n,
                           degenerate=True)
    t = d.mean() / (sd / math.sqrt(n))
    p = 2.0 * float(sstats.t.sf(abs(t), n - 1))
    return TTestResult(float(t), p, n)


# -- serialization -------------------------------------------------------------

SWEEP_CSV_FIELDS = ("candidate_id", "x", "y", "z", "reachable", "cost",
                    "cone_fraction", "timed_out", "witness_from")


def write_sweep_csv(report: SweepReport, path) -> None:
    """Per-candidate outcomes as CSV; wall times stay out so reruns hash
    identically."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_CSV_FIELDS)
        for r in report.records:
            writer.writerow([
                r.candidate_id,
                f"{r.vertex[0]:.9f}", f"{r.vertex[1]:.9f}", f"{r.vertex[2]:.9f}",
                int(r.reachable), f"{r.cost:.9g}", f"{r.cone_fraction:.6f}",
                int(r.timed_out), r.witness_from,
            ])


def sweep_summary(reports: list[SweepReport]) -> dict:
    return {
        "bodies": sorted({r.body for r in reports}),
        "subsets": [
            {
                "body": r.body,
                "subset": r.subset_label,
                "n_candidates": len(r.records),
                "reachable_fraction": r.fraction,
                "mean_cone_fraction": r.mean_cone_fraction,
                "timeouts": sum(rec.timed_out for rec in r.records),
                "total_wall_time_s": round(sum(rec.wall_time for rec in r.records), 3),
            }
            for r in reports
        ],
    }
