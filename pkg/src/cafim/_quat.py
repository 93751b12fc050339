"""Unit-quaternion helpers, (w, x, y, z) ordering, Hamilton convention.

``rotation_matrix(mul(a, b)) == rotation_matrix(a) @ rotation_matrix(b)``.
Body-frame angular velocity advances a pose by right-multiplication with
``exp_map(omega * dt)``.
"""

from __future__ import annotations

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot normalize a zero or non-finite quaternion")
    return q / n


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def rotation_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def exp_map(rotvec: np.ndarray) -> np.ndarray:
    """Quaternion for a rotation of |rotvec| radians about rotvec's axis."""
    angle = np.linalg.norm(rotvec)
    half = 0.5 * angle
    if angle < 1e-12:
        # sin(h)/h -> 0.5 * (1 - h^2/6) keeps the limit smooth
        s = 0.5 * (1.0 - half * half / 6.0)
    else:
        s = np.sin(half) / angle
    return np.array([np.cos(half), s * rotvec[0], s * rotvec[1], s * rotvec[2]])


def log_map(q: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle) of a unit quaternion."""
    w = np.clip(q[0], -1.0, 1.0)
    vec = q[1:]
    n = np.linalg.norm(vec)
    if n < 1e-12:
        return 2.0 * vec / max(w, 1e-12)
    angle = 2.0 * np.arctan2(n, w)
    if angle > np.pi:
        angle -= 2.0 * np.pi
    return (angle / n) * vec


def geodesic_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Rotation angle in radians between two unit quaternions."""
    d = abs(float(np.dot(a, b)))
    return 2.0 * float(np.arccos(min(1.0, d)))


def skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )
