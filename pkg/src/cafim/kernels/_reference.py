"""Pure-NumPy fallback implementations of the hot solver kernels.

Kept algorithmically identical to the compiled backend so results agree to
floating-point reordering; see benchmarks/bench_kernels.py for the speed gap.
"""

from __future__ import annotations

import numpy as np


def project_cone(zeta: np.ndarray) -> np.ndarray:
    """Project per-vertex triples (n, tx, ty) onto {||t|| <= n, n >= 0}."""
    out = zeta.reshape(-1, 3).copy()
    n = out[:, 0]
    r = np.hypot(out[:, 1], out[:, 2])
    inside = r <= n
    below = ~inside & (r <= -n)
    boundary = ~inside & ~below
    out[below] = 0.0
    if np.any(boundary):
        a = 0.5 * (n[boundary] + r[boundary])
        scale = a / r[boundary]
        out[boundary, 0] = a
        out[boundary, 1] *= scale
        out[boundary, 2] *= scale
    return out.reshape(-1)


def lipschitz_upper_bound(h: np.ndarray, iterations: int = 50) -> float:
    """Largest eigenvalue of a symmetric PSD matrix via power iteration."""
    n = h.shape[0]
    x = np.full(n, 1.0 / np.sqrt(n))
    lam = 0.0
    for _ in range(iterations):
        y = h @ x
        ny = float(np.linalg.norm(y))
        if ny <= 0.0:
            return 0.0
        x = y / ny
        lam = ny
    return lam


def projected_qp_solve(
    h: np.ndarray, q: np.ndarray, max_iter: int, tol: float
) -> tuple[np.ndarray, bool, int]:
    """Minimize 0.5 z^T H z + q^T z over the per-vertex friction cone.

    Projected gradient descent from zero with Nesterov acceleration and
    gradient-based adaptive restart; fixed step 1 / L with L a
    power-iteration estimate of ||H||_2.  Returns (iterate, converged,
    iterations used); convergence means the iterate moved less than
    tol * max(1, |z|_inf) in one step.
    """
    zeta = np.zeros_like(q)
    lam = lipschitz_upper_bound(h)
    if lam <= 0.0:
        return zeta, True, 0
    alpha = 1.0 / (1.05 * lam)
    y = zeta.copy()
    t = 1.0
    for it in range(max_iter):
        new = project_cone(y - alpha * (h @ y + q))
        delta = float(np.max(np.abs(new - zeta)))
        if float((y - new) @ (new - zeta)) > 0.0:
            t = 1.0
            y = new.copy()
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = new + ((t - 1.0) / t_new) * (new - zeta)
            t = t_new
        zeta = new
        if delta < tol * max(1.0, float(np.max(np.abs(new)))):
            return zeta, True, it + 1
    return zeta, False, max_iter


def pgs_solve(
    j_n: np.ndarray,
    j_t: np.ndarray,
    minv: np.ndarray,
    u_free: np.ndarray,
    bias: np.ndarray,
    mu: float,
    max_iter: int,
    tol: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool, int]:
    """Projected Gauss-Seidel sweep over active contacts.

    Normal impulses enforce j_n[k] @ u >= bias[k] (complementarily), the
    tangential pair is projected onto the Coulomb disk of radius mu*lam_n[k]
    after each per-vertex update.  Returns (u, lam_n, lam_t, converged,
    iterations).
    """
    nc = j_n.shape[0]
    u = u_free.copy()
    lam_n = np.zeros(nc)
    lam_t = np.zeros((nc, 2))
    d_n = np.einsum("ij,j,ij->i", j_n, minv, j_n)
    d_t = np.einsum("ij,j,ij->i", j_t, minv, j_t)

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        delta = 0.0
        for k in range(nc):
            new_n = lam_n[k] - (float(j_n[k] @ u) - bias[k]) / d_n[k]
            if new_n < 0.0:
                new_n = 0.0
            dn = new_n - lam_n[k]
            if dn != 0.0:
                u = u + (minv * j_n[k]) * dn
                lam_n[k] = new_n
                delta = max(delta, abs(dn))

            cap = mu * lam_n[k]
            tx = lam_t[k, 0] - float(j_t[2 * k] @ u) / d_t[2 * k]
            ty = lam_t[k, 1] - float(j_t[2 * k + 1] @ u) / d_t[2 * k + 1]
            r = np.hypot(tx, ty)
            if r > cap:
                scale = cap / r if r > 0.0 else 0.0
                tx *= scale
                ty *= scale
            dx = tx - lam_t[k, 0]
            dy = ty - lam_t[k, 1]
            if dx != 0.0 or dy != 0.0:
                u = u + (minv * j_t[2 * k]) * dx + (minv * j_t[2 * k + 1]) * dy
                lam_t[k, 0] = tx
                lam_t[k, 1] = ty
                delta = max(delta, abs(dx), abs(dy))
        if delta < tol:
            converged = True
            break
    return u, lam_n, lam_t, converged, it
