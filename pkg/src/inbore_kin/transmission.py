"""Actuator/joint coupling, cable-stretch statics, and pulley load ratings.

The four base joints map through plain gear ratios (diagonal block); the four
cable-driven wrist joints couple lower-triangularly because each cable passes
over the idlers of every preceding active joint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .robot import REVOLUTE, RobotModel, jacobian_body_batch

N_BASE = 4
N_CABLE = 4
CABLE_JOINTS = (4, 5, 6, 7)


@dataclass(frozen=True)
class CouplingModel:
    """Block-diagonal actuator-to-joint map q = M theta."""

    m_base: np.ndarray
    m_cable: np.ndarray

    def __post_init__(self):
        mb = np.array(self.m_base, dtype=float)
        mc = np.array(self.m_cable, dtype=float)
        if mb.shape != (N_BASE, N_BASE) or mc.shape != (N_CABLE, N_CABLE):
            raise ValueError("coupling blocks must be 4x4")
        if np.any(mb - np.diag(np.diag(mb)) != 0.0):
            raise ValueError("base block must be diagonal")
        if np.any(np.triu(mc, 1) != 0.0):
            raise ValueError("cable block must be lower triangular")
        m = np.zeros((8, 8))
        m[:N_BASE, :N_BASE] = mb
        m[N_BASE:, N_BASE:] = mc
        if abs(np.linalg.det(m)) < 1e-30:
            raise ValueError("coupling matrix is singular")
        m_inv = np.linalg.inv(m)
        mb.flags.writeable = False
        mc.flags.writeable = False
        m.flags.writeable = False
        m_inv.flags.writeable = False
        object.__setattr__(self, "m_base", mb)
        object.__setattr__(self, "m_cable", mc)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "inverse", m_inv)

    matrix: np.ndarray = field(init=False)
    inverse: np.ndarray = field(init=False)


def actuator_to_joint(c: CouplingModel, theta) -> np.ndarray:
    """Joint positions q = M theta for motor positions theta (8-vector)."""
    return c.matrix @ np.asarray(theta, dtype=float)


def joint_to_actuator(c: CouplingModel, q) -> np.ndarray:
    """Motor positions theta = M^-1 q for joint positions q (8-vector)."""
    return c.inverse @ np.asarray(q, dtype=float)


@dataclass(frozen=True)
class CableParams:
    """Elastic cable description: all fields strictly positive."""

    youngs_modulus: float
    nominal_length: float
    cross_section: float
    capstan_radius: float

    def __post_init__(self):
        for name in ("youngs_modulus", "nominal_length", "cross_section", "capstan_radius"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")


def cable_stretch(p: CableParams, force: float) -> tuple[float, float]:
    """Elongation and resulting joint-angle deflection under tension `force`.

    dL = F*L0/(A*E); dtheta = dL / (2*pi*r).
    """
    if force < 0.0:
        raise ValueError("cable tension must be non-negative")
    dl = force * p.nominal_length / (p.cross_section * p.youngs_modulus)
    return dl, dl / (2.0 * math.pi * p.capstan_radius)


def series_stiffness(k_link: float, k_cable: float) -> float:
    """Combined stiffness of two springs in series."""
    if k_link <= 0.0 or k_cable <= 0.0:
        raise ValueError("stiffnesses must be strictly positive")
    return k_link * k_cable / (k_link + k_cable)


def pulley_load(cable_tension: float, wrap_angle: float) -> float:
    """Normal bearing force on an idler: F_N = F_c * sin(theta/2)."""
    if cable_tension < 0.0:
        raise ValueError("cable tension must be non-negative")
    if not 0.0 <= wrap_angle <= 2.0 * math.pi:
        raise ValueError("wrap angle must lie in [0, 2*pi]")
    return cable_tension * math.sin(wrap_angle / 2.0)


@dataclass(frozen=True)
class PulleyGeometry:
    """Idler rating and wrap geometry for one cable-driven joint."""

    rated_load: float
    wrap_offset: float
    joint_pulley_radius: float

    def __post_init__(self):
        if self.rated_load <= 0.0 or self.joint_pulley_radius <= 0.0:
            raise ValueError("rated load and pulley radius must be strictly positive")


RANGE_SAMPLES = 1024


def transmission_rating(g: PulleyGeometry, joint_range: tuple[float, float],
                        joint_kind: str) -> float:
    """Worst-case admissible joint effort over a joint range.

    The admissible cable tension at a configuration is the rated bearing load
    divided by sin(wrap/2) with wrap = joint angle + wrap offset; the rating
    takes the minimum over a dense sample of the range and converts to torque
    through the joint pulley radius for revolute joints. Returns inf when the
    cable never wraps anywhere in the range.
    """
    lo, hi = joint_range
    if not lo <= hi:
        raise ValueError("joint range must be non-empty")
    q = np.linspace(lo, hi, RANGE_SAMPLES)
    # Add the analytic wrap peaks (|sin| = 1 at wrap = pi + 2k*pi) inside the
    # range so the sampled minimum is exact and monotone in the range width.
    k_lo = math.ceil((lo + g.wrap_offset - math.pi) / (2.0 * math.pi))
    k_hi = math.floor((hi + g.wrap_offset - math.pi) / (2.0 * math.pi))
    peaks = [math.pi + 2.0 * math.pi * k - g.wrap_offset
             for k in range(k_lo, k_hi + 1)]
    if peaks:
        q = np.concatenate([q, peaks])
    s = np.sin((q + g.wrap_offset) / 2.0)
    s = np.abs(s)
    if np.all(s < 1e-12):
        return math.inf
    f_min = float(np.min(np.where(s > 1e-12, g.rated_load / np.maximum(s, 1e-12), math.inf)))
    if joint_kind == REVOLUTE:
        return g.joint_pulley_radius * f_min
    return f_min


@dataclass(frozen=True)
class TransmissionModel:
    """Coupling plus per-cable-joint elasticity and pulley geometry."""

    coupling: CouplingModel
    cables: tuple[CableParams, ...]
    pulleys: tuple[PulleyGeometry, ...]
    stiffness_scale: float = 1.0
    cable_joint_kinds: tuple[str, ...] = (REVOLUTE, REVOLUTE, REVOLUTE, "prismatic")

    def __post_init__(self):
        if len(self.cables) != N_CABLE or len(self.pulleys) != N_CABLE:
            raise ValueError("expected one cable and pulley entry per cable joint")
        if self.stiffness_scale <= 0.0:
            raise ValueError("stiffness_scale must be strictly positive")

    def joint_stiffness(self) -> np.ndarray:
        """Stiffness of each cable joint: N*m/rad (revolute) or N/m (prismatic).

        A revolute joint torque tau loads the cable with F = tau/r, stretching
        it by dL = F*L0/(A*E) and deflecting the joint by dtheta = dL/(2*pi*r),
        so kappa = 2*pi*r^2*A*E/L0; a prismatic joint sees the cable's linear
        stiffness A*E/L0 directly. Both scale with the calibration multiplier.
        """
        kappa = np.empty(N_CABLE)
        for i, cable in enumerate(self.cables):
            k_lin = cable.cross_section * cable.youngs_modulus / cable.nominal_length
            if self.cable_joint_kinds[i] == REVOLUTE:
                r = cable.capstan_radius
                kappa[i] = 2.0 * math.pi * r * r * k_lin
            else:
                kappa[i] = k_lin
        return kappa * self.stiffness_scale

    def joint_deflection(self, joint_torques) -> np.ndarray:
        """Static deflection of all 8 joints under the given joint efforts.

        Base joints are treated as rigid; cable joints deflect by tau/kappa.
        """
        tau = np.asarray(joint_torques, dtype=float)
        dq = np.zeros(8)
        dq[N_BASE:] = tau[N_BASE:] / self.joint_stiffness()
        return dq


def ee_deflection(model: RobotModel, transmission: TransmissionModel, q, wrench6) -> np.ndarray:
    """Quasi-static EE translation shift (base frame) from cable compliance.

    wrench6 is [force; moment] in the EE frame; joint loads are J_b^T * f and
    the resulting joint deflections map back through the Jacobian.
    """
    jb = jacobian_body_batch(model, q)[0]
    tau = jb.T @ np.asarray(wrench6, dtype=float)
    dq = transmission.joint_deflection(tau)
    dx_body = jb[:3] @ dq
    from .robot import fk

    return fk(model, q).rotation @ dx_body


def ee_cable_stiffness(model: RobotModel, transmission: TransmissionModel, q,
                       direction=None) -> float:
    """Cable-transmission stiffness felt at the EE, N/m.

    With joint compliance C = diag(1/kappa) on the cable joints, the EE
    translational compliance under a unit force along `direction` (EE frame)
    is d^T J C J^T d. Defaults to the most compliant lateral direction in the
    EE x-y plane, matching how tip stiffness is measured with a lateral load.
    """
    jb = jacobian_body_batch(model, q)[0]
    kappa = transmission.joint_stiffness()
    jc = jb[:3, N_BASE:]
    comp = jc @ np.diag(1.0 / kappa) @ jc.T
    if direction is None:
        lateral = comp[:2, :2]
        eigvals = np.linalg.eigvalsh(lateral)
        c = float(eigvals[-1])
    else:
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        c = float(d @ comp @ d)
    if c <= 0.0:
        return math.inf
    return 1.0 / c


def transmission_from_dict(cfg: dict) -> TransmissionModel:
    coupling = CouplingModel(np.diag(cfg["M_b_diag"]), np.array(cfg["M_c"]))
    cab = cfg["cable"]
    cables = tuple(
        CableParams(
            youngs_modulus=float(cab["youngs_modulus"]),
            nominal_length=float(l),
            cross_section=float(cab["cross_section_area"]),
            capstan_radius=float(cab["capstan_radius"]),
        )
        for l in cab["lengths"]
    )
    pulleys = tuple(
        PulleyGeometry(
            rated_load=float(p["rated_load"]),
            wrap_offset=float(p["wrap_offset"]),
            joint_pulley_radius=float(p["joint_pulley_radius"]),
        )
        for p in cfg["pulleys"]
    )
    return TransmissionModel(coupling, cables, pulleys,
                             stiffness_scale=float(cab.get("stiffness_scale", 1.0)))


def default_transmission() -> TransmissionModel:
    import json
    from importlib import resources

    text = resources.files("inbore_kin.data").joinpath("crane8.json").read_text()
    return transmission_from_dict(json.loads(text)["transmission"])
