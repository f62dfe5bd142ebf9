"""Planar articulated-chain rigid-body dynamics.

A serial chain of uniform rods connected by revolute joints, optionally
riding on an unactuated vertical prismatic root (for hopping against a
one-sided penalty ground). Link angles are measured from the downward
vertical, so an all-zero pose hangs at the gravity equilibrium; joint
coordinates are relative angles.

Equations of motion are assembled in absolute link angles, where a serial
chain of rods has the classic closed form

    M_ij = A_ij cos(phi_i - phi_j) + I_i delta_ij
    h_i  = sum_j A_ij sin(phi_i - phi_j) * phidot_j^2
    G_i  = g B_i sin(phi_i)

with constant geometry tensors A and B, then transformed to joint
coordinates. Time stepping is semi-implicit Euler: velocities first
against the current-pose mass matrix, positions with the new velocities.

Joint limits are enforced by a stiff one-sided penalty torque; these are
constraint forces and are kept out of the actuation pipeline.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SimulationUnstableError
from .torque import PdGains, TorqueBoundTable

#: Abort threshold for |joint velocity| in rad/s (or m/s for the root).
VELOCITY_LIMIT = 1e3


@dataclass
class ChainModel:
    """Geometry, inertia and actuation description of a planar chain."""

    name: str
    link_lengths: np.ndarray
    link_masses: np.ndarray
    link_inertias: np.ndarray  # about each link's COM
    gains: list[PdGains]
    joint_low: np.ndarray
    joint_high: np.ndarray
    gravity: float = 9.81
    root: str = "fixed"  # "fixed" | "prismatic_y"
    bounds: TorqueBoundTable | None = None
    symmetry_pairs: list[tuple[int, int]] = field(default_factory=list)
    joint_names: list[str] | None = None
    home: np.ndarray | None = None  # initial joint pose; rest pose when None
    root_home: float = 0.0
    # joint-limit penalty, scaled from each joint's own gains so the
    # penalty stays integrable for light distal joints
    limit_stiffness_scale: float = 4.0
    limit_damping_scale: float = 1.0
    ground_stiffness: float = 3.0e4
    ground_damping: float = 300.0

    def __post_init__(self):
        self.link_lengths = np.asarray(self.link_lengths, dtype=np.float64)
        self.link_masses = np.asarray(self.link_masses, dtype=np.float64)
        self.link_inertias = np.asarray(self.link_inertias, dtype=np.float64)
        n = self.n_links
        if n < 1:
            raise ValueError("chain needs at least one link")
        if not (len(self.link_masses) == len(self.link_inertias) == n):
            raise ValueError("length/mass/inertia arrays must match")
        if np.any(self.link_lengths <= 0) or np.any(self.link_masses <= 0):
            raise ValueError("lengths and masses must be positive")
        if len(self.gains) != n:
            raise ValueError("one PdGains per revolute joint required")
        self.joint_low = np.asarray(self.joint_low, dtype=np.float64)
        self.joint_high = np.asarray(self.joint_high, dtype=np.float64)
        if self.root not in ("fixed", "prismatic_y"):
            raise ValueError(f"unknown root mode {self.root!r}")
        if self.joint_names is None:
            self.joint_names = [f"joint{i}" for i in range(n)]
        if self.home is not None:
            self.home = np.asarray(self.home, dtype=np.float64)
            if len(self.home) != n:
                raise ValueError("home pose width must match joint count")
        self._limit_kp = self.limit_stiffness_scale * np.array([g.kp for g in self.gains])
        self._limit_kd = self.limit_damping_scale * np.array([g.kd for g in self.gains])
        # constant geometry tensors: a[k, i] is the lever of joint i on
        # link k's COM (full length below, half length on the link itself)
        com = 0.5 * self.link_lengths
        a = np.zeros((n, n))
        for k in range(n):
            a[k, :k] = self.link_lengths[:k]
            a[k, k] = com[k]
        m = self.link_masses
        self._A = (a.T * m) @ a
        self._B = (m[:, None] * a).sum(axis=0)
        # cumulative-sum transform between joint and absolute angles
        self._C = np.tril(np.ones((n, n)))

    @property
    def n_links(self) -> int:
        return len(self.link_lengths)

    @property
    def n_coords(self) -> int:
        return self.n_links + (1 if self.root == "prismatic_y" else 0)

    @property
    def total_mass(self) -> float:
        return float(self.link_masses.sum())

    def hash(self) -> str:
        payload = json.dumps(
            {
                "name": self.name,
                "lengths": self.link_lengths.tolist(),
                "masses": self.link_masses.tolist(),
                "inertias": self.link_inertias.tolist(),
                "gains": [(g.kp, g.kd) for g in self.gains],
                "low": self.joint_low.tolist(),
                "high": self.joint_high.tolist(),
                "gravity": self.gravity,
                "root": self.root,
            },
            sort_keys=True,
        ).encode()
        return hashlib.sha1(payload).hexdigest()[:12]

    # -- state layout helpers ------------------------------------------------

    def split(self, q: np.ndarray) -> tuple[float, np.ndarray]:
        """Return (root coordinate, joint angles)."""
        if self.root == "prismatic_y":
            return float(q[0]), q[1:]
        return 0.0, q

    def rest_coords(self, root_y: float = 0.0) -> np.ndarray:
        q = np.zeros(self.n_coords)
        if self.root == "prismatic_y":
            q[0] = root_y
        return q


def _abs_angles(model: ChainModel, qj: np.ndarray, vj: np.ndarray):
    phi = model._C @ qj
    phidot = model._C @ vj
    return phi, phidot


def joint_positions(model: ChainModel, q: np.ndarray) -> np.ndarray:
    """Positions of the base and each link tip, shape (n_links + 1, 2)."""
    y0, qj = model.split(q)
    phi = model._C @ qj
    pts = np.zeros((model.n_links + 1, 2))
    pts[0] = (0.0, y0)
    seg = np.stack([np.sin(phi), -np.cos(phi)], axis=1) * model.link_lengths[:, None]
    pts[1:] = pts[0] + np.cumsum(seg, axis=0)
    return pts


def com_heights(model: ChainModel, q: np.ndarray) -> np.ndarray:
    y0, qj = model.split(q)
    phi = model._C @ qj
    tips_y = y0 + np.concatenate(([0.0], np.cumsum(-model.link_lengths * np.cos(phi))))
    return tips_y[:-1] - 0.5 * model.link_lengths * np.cos(phi)


def mechanical_energy(model: ChainModel, q: np.ndarray, v: np.ndarray) -> float:
    """Kinetic plus gravitational energy (plus ground-spring energy in contact)."""
    M = _mass_matrix(model, q)
    kinetic = 0.5 * float(v @ M @ v)
    potential = model.gravity * float(model.link_masses @ com_heights(model, q))
    if model.root == "prismatic_y" and q[0] < 0.0:
        potential += 0.5 * model.ground_stiffness * q[0] ** 2
    return kinetic + potential


def _mass_matrix(model: ChainModel, q: np.ndarray) -> np.ndarray:
    _, qj = model.split(q)
    phi = model._C @ qj
    dphi = phi[:, None] - phi[None, :]
    Mphi = model._A * np.cos(dphi) + np.diag(model.link_inertias)
    C = model._C
    Mq = C.T @ Mphi @ C
    if model.root == "fixed":
        return Mq
    n = model.n_links
    M = np.empty((n + 1, n + 1))
    M[0, 0] = model.total_mass
    cross = model._B * np.sin(phi)  # coupling of root lift with each link
    M[0, 1:] = cross @ C
    M[1:, 0] = M[0, 1:]
    M[1:, 1:] = Mq
    return M


def _bias_forces(model: ChainModel, q: np.ndarray, v: np.ndarray):
    """Coriolis/centrifugal plus gravity, in joint coordinates."""
    _, qj = model.split(q)
    _, vj_ = model.split(v)
    phi, phidot = _abs_angles(model, qj, vj_)
    dphi = phi[:, None] - phi[None, :]
    h_phi = (model._A * np.sin(dphi)) @ (phidot**2)
    g_phi = model.gravity * model._B * np.sin(phi)
    bias_j = model._C.T @ (h_phi + g_phi)
    if model.root == "fixed":
        return bias_j
    h_y = float((model._B * np.cos(phi)) @ (phidot**2))
    g_y = model.total_mass * model.gravity
    return np.concatenate(([h_y + g_y], bias_j))


def limit_torques(model: ChainModel, qj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One-sided penalty spring pushing joints back inside their limits.

    Returns the spring torque plus the per-joint damping coefficients to
    apply (implicitly) while a limit is engaged.
    """
    below = np.minimum(qj - model.joint_low, 0.0)
    above = np.maximum(qj - model.joint_high, 0.0)
    tau = -model._limit_kp * (below + above)
    outside = (below < 0.0) | (above > 0.0)
    return tau, model._limit_kd * outside


def ground_force(model: ChainModel, y: float, vy: float) -> float:
    if y >= 0.0:
        return 0.0
    f = -model.ground_stiffness * y - model.ground_damping * vy
    return max(f, 0.0)


def dynamics_step(
    model: ChainModel,
    q: np.ndarray,
    v: np.ndarray,
    tau: np.ndarray,
    dt: float,
    joint_damping: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One semi-implicit Euler step under joint torques ``tau``.

    ``tau`` covers the revolute joints only; the prismatic root is
    unactuated and feels gravity plus ground contact. ``joint_damping``
    holds per-joint viscous coefficients evaluated implicitly against the
    new velocity, which keeps strong damping stable on light distal
    joints at any coefficient.
    """
    _, qj = model.split(q)
    lim_tau, lim_damp = limit_torques(model, qj)
    gen = tau + lim_tau
    if model.root == "prismatic_y":
        gen = np.concatenate(([ground_force(model, q[0], v[0])], gen))
    rhs = gen - _bias_forces(model, q, v)
    M = _mass_matrix(model, q)
    damp = lim_damp if joint_damping is None else lim_damp + joint_damping
    if np.any(damp != 0.0):
        if model.root == "prismatic_y":
            damp = np.concatenate(([0.0], damp))
        # (M + dt*D) v_next = M v + dt*rhs
        v_next = np.linalg.solve(M + dt * np.diag(damp), M @ v + dt * rhs)
    else:
        v_next = v + dt * np.linalg.solve(M, rhs)
    q_next = q + dt * v_next
    if np.max(np.abs(v_next)) > VELOCITY_LIMIT:
        raise SimulationUnstableError(
            f"velocity exceeded {VELOCITY_LIMIT:g} (max {np.max(np.abs(v_next)):.3g}); "
            "reduce gains or the time step"
        )
    return q_next, v_next
