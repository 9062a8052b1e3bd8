"""Setup planning: IK, C-space tests, dexterous-configuration search, BiRRT."""

from .cspace import (TaskWrench, default_insertion_wrench, in_c_feas, in_c_free,
                     in_c_goal)
from .ik import IKResult, IKSettings, calc_local_targets, nullspace_step, solve_ik
from .setup_search import (CostWeights, SetupResult, configuration_cost,
                           ik_configuration_loss, manipulability, optimize_setup)
from .birrt import PlanResult, config_is_free, edge_is_free, path_is_collision_free, plan_birrt

__all__ = [
    "TaskWrench",
    "default_insertion_wrench",
    "in_c_feas",
    "in_c_free",
    "in_c_goal",
    "IKResult",
    "IKSettings",
    "calc_local_targets",
    "nullspace_step",
    "solve_ik",
    "CostWeights",
    "SetupResult",
    "configuration_cost",
    "ik_configuration_loss",
    "manipulability",
    "optimize_setup",
    "PlanResult",
    "config_is_free",
    "edge_is_free",
    "path_is_collision_free",
    "plan_birrt",
]
