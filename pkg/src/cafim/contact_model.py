"""Parameterized polytope contact geometry against the ground plane z = 0.

The learnable parameter vector stacks the eight body-frame vertex positions
followed by the friction coefficient:

    theta = [v1.x, v1.y, v1.z, ..., v8.x, v8.y, v8.z, mu]      (dimension 25)

Signed distances are the world z-coordinates of the vertices; contact
Jacobians map the generalized velocity u = [linear (world), angular (body)]
to per-vertex contact-point velocity components along the world z (normal)
and world x/y (tangent) axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _quat
from .errors import ValidationError

NUM_VERTICES = 8
PARAM_DIM = 3 * NUM_VERTICES + 1


@dataclass
class ContactParams:
    """Polytope vertices (8 x 3, body frame, meters) and friction mu."""

    vertices: np.ndarray
    mu: float = 0.3
    vertex_bound: float = 0.5

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.shape != (NUM_VERTICES, 3):
            raise ValidationError(
                f"vertices must have shape ({NUM_VERTICES}, 3), got {self.vertices.shape}"
            )
        if not np.all(np.isfinite(self.vertices)):
            raise ValidationError("vertices must be finite")
        if not np.isfinite(self.mu) or self.mu < 0.0:
            raise ValidationError(f"mu must be >= 0, got {self.mu}")
        if np.any(np.abs(self.vertices) > self.vertex_bound + 1e-12):
            raise ValidationError(
                f"vertex coordinates must lie within +/-{self.vertex_bound} m"
            )

    @classmethod
    def cuboid(cls, half_extents, mu: float = 0.3, vertex_bound: float = 0.5) -> "ContactParams":
        """Canonical cuboid: vertex k has signs (x: k&1, y: k&2, z: k&4).

        Vertices 0..3 form the bottom face (z < 0), 4..7 the top face.
        """
        hx, hy, hz = half_extents
        verts = np.array(
            [
                [hx if k & 1 else -hx, hy if k & 2 else -hy, hz if k & 4 else -hz]
                for k in range(NUM_VERTICES)
            ]
        )
        return cls(vertices=verts, mu=mu, vertex_bound=vertex_bound)

    def flatten(self) -> np.ndarray:
        """Flat parameter vector in the documented ordering."""
        return np.concatenate([self.vertices.reshape(-1), [self.mu]])

    @classmethod
    def from_flat(cls, theta: np.ndarray, vertex_bound: float = 0.5) -> "ContactParams":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (PARAM_DIM,):
            raise ValidationError(f"parameter vector must have shape ({PARAM_DIM},)")
        return cls(
            vertices=theta[:-1].reshape(NUM_VERTICES, 3).copy(),
            mu=float(theta[-1]),
            vertex_bound=vertex_bound,
        )


@dataclass
class ContactKinematics:
    """Gaps and contact Jacobians of all candidate vertices at one state."""

    phi: np.ndarray  # (8,) world z of each vertex
    j_n: np.ndarray  # (8, 6) normal rows
    j_t: np.ndarray  # (16, 6) tangent rows, world x then y per vertex


@dataclass
class KinematicsParamJacobian:
    """Derivatives of (phi, j_n, j_t) with respect to the flat parameters.

    Each phi_k depends only on vertex k, and no kinematic quantity depends
    on mu, so the last column of every array is zero.
    """

    dphi: np.ndarray = field(repr=False)  # (8, 25)
    dj_n: np.ndarray = field(repr=False)  # (8, 6, 25)
    dj_t: np.ndarray = field(repr=False)  # (16, 6, 25)


def kinematics(params: ContactParams, state) -> ContactKinematics:
    """Gaps phi_k = (R v_k + p)_z and Jacobian rows at the given state."""
    rot = _quat.rotation_matrix(state.orientation)
    world = params.vertices @ rot.T + state.position
    phi = world[:, 2].copy()

    # c_a = R^T e_a; angular block of the row for axis a is (v_k x c_a)
    c = rot  # row a of R equals (R^T e_a)^T
    j_n = np.zeros((NUM_VERTICES, 6))
    j_t = np.zeros((2 * NUM_VERTICES, 6))
    j_n[:, 2] = 1.0
    j_n[:, 3:] = np.cross(params.vertices, c[2])
    j_t[0::2, 0] = 1.0
    j_t[0::2, 3:] = np.cross(params.vertices, c[0])
    j_t[1::2, 1] = 1.0
    j_t[1::2, 3:] = np.cross(params.vertices, c[1])
    return ContactKinematics(phi=phi, j_n=j_n, j_t=j_t)


def kinematics_param_jacobian(params: ContactParams, state) -> KinematicsParamJacobian:
    """Analytic derivatives of the kinematics w.r.t. the flat parameters."""
    rot = _quat.rotation_matrix(state.orientation)
    dphi = np.zeros((NUM_VERTICES, PARAM_DIM))
    dj_n = np.zeros((NUM_VERTICES, 6, PARAM_DIM))
    dj_t = np.zeros((2 * NUM_VERTICES, 6, PARAM_DIM))

    # d(v_k x c)/d v_k = -[c]x, identical for every vertex
    neg_skew = {a: -_quat.skew(rot[a]) for a in range(3)}
    for k in range(NUM_VERTICES):
        cols = slice(3 * k, 3 * k + 3)
        dphi[k, cols] = rot[2]
        dj_n[k, 3:, cols] = neg_skew[2]
        dj_t[2 * k, 3:, cols] = neg_skew[0]
        dj_t[2 * k + 1, 3:, cols] = neg_skew[1]
    return KinematicsParamJacobian(dphi=dphi, dj_n=dj_n, dj_t=dj_t)
