# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot solver kernels.

Mirrors kernels._reference; the per-step projected QP (impulse recovery
inside the loss) and the projected Gauss-Seidel contact sweep dominate the
runtime of scoring, fitting, and design loops.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


def projected_qp_solve(double[:, ::1] h, double[::1] q, int max_iter, double tol):
    """Minimize 0.5 z^T H z + q^T z over the per-vertex friction cone.

    Nesterov-accelerated projected gradient with adaptive restart; fixed
    step 1 / L from a power-iteration Lipschitz estimate.
    """
    cdef int n = h.shape[0]
    cdef int nv = n // 3
    cdef cnp.ndarray[cnp.float64_t, ndim=1] zeta_arr = np.zeros(n)
    cdef double[::1] zeta = zeta_arr
    cdef double[::1] x = np.full(n, 1.0 / sqrt(<double> n))
    cdef double[::1] y = np.zeros(n)
    cdef double[::1] work = np.empty(n)
    cdef double[::1] new = np.empty(n)
    cdef int i, j, k, it
    cdef double acc, ny, lam, alpha, delta, scale_max, d, t, t_new, restart, beta
    cdef double zn, zx, zy, r, a, s

    # power iteration for the Lipschitz constant
    lam = 0.0
    for it in range(50):
        ny = 0.0
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += h[i, j] * x[j]
            work[i] = acc
            ny += acc * acc
        ny = sqrt(ny)
        if ny <= 0.0:
            return zeta_arr, True, 0
        for i in range(n):
            x[i] = work[i] / ny
        lam = ny
    if lam <= 0.0:
        return zeta_arr, True, 0
    alpha = 1.0 / (1.05 * lam)

    t = 1.0
    for it in range(max_iter):
        for i in range(n):
            acc = q[i]
            for j in range(n):
                acc += h[i, j] * y[j]
            new[i] = y[i] - alpha * acc
        for k in range(nv):
            zn = new[3 * k]
            zx = new[3 * k + 1]
            zy = new[3 * k + 2]
            r = sqrt(zx * zx + zy * zy)
            if r <= zn:
                pass
            elif r <= -zn:
                zn = 0.0
                zx = 0.0
                zy = 0.0
            else:
                a = 0.5 * (zn + r)
                s = a / r
                zn = a
                zx *= s
                zy *= s
            new[3 * k] = zn
            new[3 * k + 1] = zx
            new[3 * k + 2] = zy
        delta = 0.0
        scale_max = 0.0
        restart = 0.0
        for i in range(n):
            d = fabs(new[i] - zeta[i])
            if d > delta:
                delta = d
            if fabs(new[i]) > scale_max:
                scale_max = fabs(new[i])
            restart += (y[i] - new[i]) * (new[i] - zeta[i])
        if restart > 0.0:
            t_new = 1.0
            for i in range(n):
                y[i] = new[i]
        else:
            t_new = 0.5 * (1.0 + sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_new
            for i in range(n):
                y[i] = new[i] + beta * (new[i] - zeta[i])
        t = t_new
        for i in range(n):
            zeta[i] = new[i]
        if scale_max < 1.0:
            scale_max = 1.0
        if delta < tol * scale_max:
            return zeta_arr, True, it + 1
    return zeta_arr, False, max_iter


def pgs_solve(
    double[:, ::1] j_n,
    double[:, ::1] j_t,
    double[::1] minv,
    double[::1] u_free,
    double[::1] bias,
    double mu,
    int max_iter,
    double tol,
):
    """Projected Gauss-Seidel sweep over active contacts."""
    cdef int nc = j_n.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] u_arr = np.array(u_free, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lam_n_arr = np.zeros(nc)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] lam_t_arr = np.zeros((nc, 2))
    cdef double[::1] u = u_arr
    cdef double[::1] lam_n = lam_n_arr
    cdef double[:, ::1] lam_t = lam_t_arr
    cdef double[::1] d_n = np.empty(nc)
    cdef double[::1] d_t = np.empty(2 * nc)
    cdef int k, i, it
    cdef double acc, new_n, dn, cap, tx, ty, r, scale, dx, dy, delta
    cdef bint converged = False

    for k in range(nc):
        acc = 0.0
        for i in range(6):
            acc += j_n[k, i] * minv[i] * j_n[k, i]
        d_n[k] = acc
    for k in range(2 * nc):
        acc = 0.0
        for i in range(6):
            acc += j_t[k, i] * minv[i] * j_t[k, i]
        d_t[k] = acc

    it = 0
    for it in range(1, max_iter + 1):
        delta = 0.0
        for k in range(nc):
            acc = 0.0
            for i in range(6):
                acc += j_n[k, i] * u[i]
            new_n = lam_n[k] - (acc - bias[k]) / d_n[k]
            if new_n < 0.0:
                new_n = 0.0
            dn = new_n - lam_n[k]
            if dn != 0.0:
                for i in range(6):
                    u[i] += minv[i] * j_n[k, i] * dn
                lam_n[k] = new_n
                if fabs(dn) > delta:
                    delta = fabs(dn)

            cap = mu * lam_n[k]
            acc = 0.0
            for i in range(6):
                acc += j_t[2 * k, i] * u[i]
            tx = lam_t[k, 0] - acc / d_t[2 * k]
            acc = 0.0
            for i in range(6):
                acc += j_t[2 * k + 1, i] * u[i]
            ty = lam_t[k, 1] - acc / d_t[2 * k + 1]
            r = sqrt(tx * tx + ty * ty)
            if r > cap:
                scale = cap / r if r > 0.0 else 0.0
                tx *= scale
                ty *= scale
            dx = tx - lam_t[k, 0]
            dy = ty - lam_t[k, 1]
            if dx != 0.0 or dy != 0.0:
                for i in range(6):
                    u[i] += minv[i] * (j_t[2 * k, i] * dx + j_t[2 * k + 1, i] * dy)
                lam_t[k, 0] = tx
                lam_t[k, 1] = ty
                if fabs(dx) > delta:
                    delta = fabs(dx)
                if fabs(dy) > delta:
                    delta = fabs(dy)
        if delta < tol:
            converged = True
            break
    return u_arr, lam_n_arr, lam_t_arr, converged, it
