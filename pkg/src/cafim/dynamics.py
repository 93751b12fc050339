"""Rigid block under gravity with frictional contact against the plane z = 0.

Semi-implicit Euler: velocities first (gravity, then contact impulses from a
projected Gauss-Seidel sweep), pose second from the new velocities.  The
generalized velocity is u = [linear velocity (world), angular velocity
(body)], the generalized mass matrix diag(m, m, m, I1, I2, I3) is constant,
and impulses satisfy M (u+ - u) - dt f_gravity = J^T lambda exactly.

Contact constraints act on the linearized next-step gap: a vertex enters the
solve when its predicted gap phi_k + dt J_n,k u_free falls below the
activation margin, and its impulse enforces phi_k + dt J_n,k u+ >= 0, so
impacts resolve inelastically without penetration at the linear level.  A
vertex already penetrating is pushed out at a fraction of the violation per
step to avoid injecting energy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _quat
from .contact_model import NUM_VERTICES, ContactParams, kinematics
from .errors import ValidationError
from .kernels import pgs_solve

GRAVITY_DEFAULT = (0.0, 0.0, -9.81)


@dataclass
class MassProps:
    """Mass (kg) and body-frame principal inertia (kg m^2)."""

    mass: float
    inertia: np.ndarray

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float)
        if self.mass <= 0 or not np.isfinite(self.mass):
            raise ValidationError(f"mass must be positive, got {self.mass}")
        if self.inertia.shape != (3,) or np.any(self.inertia <= 0):
            raise ValidationError("inertia must be three positive principal values")

    @classmethod
    def cuboid(cls, mass: float, half_extents) -> "MassProps":
        hx, hy, hz = half_extents
        inertia = (mass / 3.0) * np.array([hy * hy + hz * hz, hx * hx + hz * hz, hx * hx + hy * hy])
        return cls(mass=mass, inertia=inertia)

    @property
    def generalized_diag(self) -> np.ndarray:
        """Diagonal of the 6x6 generalized mass matrix."""
        return np.concatenate([[self.mass] * 3, self.inertia])


@dataclass
class World:
    """Fixed physical constants shared by simulation and loss evaluation."""

    mass_props: MassProps
    gravity: np.ndarray = field(default_factory=lambda: np.array(GRAVITY_DEFAULT))

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=float)
        if self.gravity.shape != (3,):
            raise ValidationError("gravity must be a 3-vector")

    @property
    def generalized_gravity(self) -> np.ndarray:
        """Generalized force of gravity (no torque about the CoM)."""
        return np.concatenate([self.mass_props.mass * self.gravity, np.zeros(3)])


@dataclass
class BlockState:
    """Pose and twist of the block at one timestep."""

    position: np.ndarray
    orientation: np.ndarray  # unit quaternion (w, x, y, z)
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray  # body frame

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.orientation = np.asarray(self.orientation, dtype=float)
        self.linear_velocity = np.asarray(self.linear_velocity, dtype=float)
        self.angular_velocity = np.asarray(self.angular_velocity, dtype=float)

    def validate(self, quat_tol: float = 1e-9):
        for name in ("position", "orientation", "linear_velocity", "angular_velocity"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"{name} contains non-finite values")
        if abs(np.linalg.norm(self.orientation) - 1.0) > quat_tol:
            raise ValidationError("orientation is not a unit quaternion")

    def as_vector(self) -> np.ndarray:
        """13-vector [p, q, v, w]."""
        return np.concatenate(
            [self.position, self.orientation, self.linear_velocity, self.angular_velocity]
        )

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "BlockState":
        x = np.asarray(x, dtype=float)
        if x.shape != (13,):
            raise ValidationError("state vector must have 13 entries")
        return cls(x[0:3].copy(), x[3:7].copy(), x[7:10].copy(), x[10:13].copy())

    @property
    def generalized_velocity(self) -> np.ndarray:
        return np.concatenate([self.linear_velocity, self.angular_velocity])


@dataclass
class Trajectory:
    """A uniformly sampled toss: the unit of ranking and curation."""

    id: str
    dt: float
    states: list
    source: str = "simulated"
    velocities_reconstructed: bool = False
    solver_converged: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dt <= 0 or not np.isfinite(self.dt):
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if len(self.states) < 2:
            raise ValidationError("a trajectory needs at least two states")
        if self.source not in ("simulated", "imported"):
            raise ValidationError(f"unknown trajectory source {self.source!r}")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def initial_state(self) -> BlockState:
        return self.states[0]

    def validate(self, v_max: float = 20.0):
        for s in self.states:
            s.validate(quat_tol=1e-6)
        pos = np.array([s.position for s in self.states])
        step = np.linalg.norm(np.diff(pos, axis=0), axis=1)
        if np.any(step > v_max * self.dt):
            raise ValidationError(
                f"trajectory {self.id}: consecutive positions jump faster than {v_max} m/s"
            )


@dataclass
class ImpulseSet:
    """Per-vertex contact impulses of one step (N s)."""

    normal: np.ndarray  # (8,)
    tangent: np.ndarray  # (8, 2) world x/y components

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=float)
        self.tangent = np.asarray(self.tangent, dtype=float)

    @classmethod
    def zero(cls) -> "ImpulseSet":
        return cls(np.zeros(NUM_VERTICES), np.zeros((NUM_VERTICES, 2)))

    def validate(self, mu: float, tol: float = 1e-6):
        if np.any(self.normal < -tol):
            raise ValidationError("normal impulses must be nonnegative")
        mag = np.linalg.norm(self.tangent, axis=1)
        if np.any(mag > mu * np.maximum(self.normal, 0.0) + tol):
            raise ValidationError("tangential impulses violate the friction cone")

    def generalized(self, kin) -> np.ndarray:
        """J^T lambda in generalized coordinates."""
        out = self.normal @ kin.j_n
        out += self.tangent[:, 0] @ kin.j_t[0::2]
        out += self.tangent[:, 1] @ kin.j_t[1::2]
        return out


@dataclass
class SolverSettings:
    """Projected Gauss-Seidel contact solve parameters."""

    max_iterations: int = 50
    tolerance: float = 1e-8
    activation_margin: float = 1e-4
    stabilization: float = 0.2  # fraction of pre-existing penetration removed per step

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        if not 0.0 < self.stabilization <= 1.0:
            raise ValidationError("stabilization must lie in (0, 1]")


def _check_finite_state(state: BlockState):
    for name in ("position", "orientation", "linear_velocity", "angular_velocity"):
        if not np.all(np.isfinite(getattr(state, name))):
            raise ValidationError(f"state.{name} contains non-finite values")


def integrate_pose(state: BlockState, u_next: np.ndarray, dt: float) -> BlockState:
    """Advance the pose by the (already updated) generalized velocity."""
    v_next = u_next[:3]
    w_next = u_next[3:]
    position = state.position + dt * v_next
    orientation = _quat.normalize(_quat.mul(state.orientation, _quat.exp_map(w_next * dt)))
    return BlockState(position, orientation, v_next.copy(), w_next.copy())


def step_free(state: BlockState, dt: float, world: World) -> BlockState:
    """Contact-free semi-implicit Euler step."""
    if dt <= 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    _check_finite_state(state)
    u_free = state.generalized_velocity
    u_free = u_free + dt * world.generalized_gravity / world.mass_props.generalized_diag
    return integrate_pose(state, u_free, dt)


def step_contact(
    state: BlockState,
    params: ContactParams,
    dt: float,
    world: World,
    settings: SolverSettings | None = None,
) -> tuple[BlockState, ImpulseSet, bool]:
    """One contact step: returns (next state, impulses, solver converged)."""
    if dt <= 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    _check_finite_state(state)
    settings = settings or SolverSettings()

    minv = 1.0 / world.mass_props.generalized_diag
    u_free = state.generalized_velocity + dt * world.generalized_gravity * minv

    kin = kinematics(params, state)
    predicted = kin.phi + dt * (kin.j_n @ u_free)
    active = np.flatnonzero(predicted < settings.activation_margin)
    if active.size == 0:
        return integrate_pose(state, u_free, dt), ImpulseSet.zero(), True

    # Target normal velocity: land exactly on the surface; if already
    # penetrating, recover only a fraction of the violation this step.
    phi_a = kin.phi[active]
    bias = np.where(phi_a >= 0.0, -phi_a / dt, settings.stabilization * (-phi_a) / dt)

    j_n = np.ascontiguousarray(kin.j_n[active])
    j_t = np.ascontiguousarray(kin.j_t[np.repeat(2 * active, 2) + np.tile([0, 1], active.size)])
    u_new, lam_n, lam_t, converged, _ = pgs_solve(
        j_n,
        j_t,
        minv,
        u_free,
        bias,
        params.mu,
        settings.max_iterations,
        settings.tolerance,
    )

    impulses = ImpulseSet.zero()
    impulses.normal[active] = lam_n
    impulses.tangent[active] = lam_t
    return integrate_pose(state, u_new, dt), impulses, bool(converged)


def rollout(
    x0: BlockState,
    params: ContactParams,
    dt: float,
    num_steps: int,
    world: World,
    settings: SolverSettings | None = None,
    traj_id: str = "rollout",
) -> Trajectory:
    """Repeated step_contact from x0; num_steps is the trajectory length T."""
    if num_steps < 2:
        raise ValidationError("num_steps must be >= 2")
    states = [x0]
    all_converged = True
    state = x0
    for _ in range(num_steps - 1):
        state, _, converged = step_contact(state, params, dt, world, settings)
        all_converged = all_converged and converged
        states.append(state)
    return Trajectory(
        id=traj_id, dt=dt, states=states, source="simulated", solver_converged=all_converged
    )


def kinetic_energy(state: BlockState, world: World) -> float:
    m = world.mass_props
    v = state.linear_velocity
    w = state.angular_velocity
    return 0.5 * m.mass * float(v @ v) + 0.5 * float(w @ (m.inertia * w))


def total_energy(state: BlockState, world: World) -> float:
    """Kinetic plus gravitational potential energy."""
    m = world.mass_props.mass
    return kinetic_energy(state, world) - m * float(world.gravity @ state.position)
