import numpy as np
import pytest

from cafim.kernels import BACKEND, _reference
from cafim.kernels import pgs_solve, projected_qp_solve

try:
    from cafim.kernels import _native
except ImportError:
    _native = None

needs_native = pytest.mark.skipif(_native is None, reason="compiled backend not built")


def _random_qp(rng, nv=8):
    n = 3 * nv
    a = rng.normal(size=(6, n))
    h = 2.0 * (a.T @ a) + np.diag(rng.uniform(0.01, 0.2, n))
    h = 0.5 * (h + h.T)
    q = rng.normal(size=n)
    return h, q


def test_cone_projection_properties():
    rng = np.random.default_rng(0)
    z = rng.normal(size=24) * 3
    p = _reference.project_cone(z)
    trip = p.reshape(-1, 3)
    assert np.all(trip[:, 0] >= 0)
    assert np.all(np.hypot(trip[:, 1], trip[:, 2]) <= trip[:, 0] + 1e-12)
    # projection is idempotent (to rounding on the boundary) and leaves
    # strictly feasible points untouched
    np.testing.assert_allclose(_reference.project_cone(p), p, rtol=0, atol=1e-15)
    feasible = np.array([1.0, 0.3, -0.4] * 8)
    np.testing.assert_array_equal(_reference.project_cone(feasible), feasible)


def test_qp_solver_reaches_grid_optimum_single_vertex():
    # brute-force oracle on a 1-vertex instance
    rng = np.random.default_rng(1)
    a = rng.normal(size=(6, 3))
    h = 2.0 * a.T @ a + 0.05 * np.eye(3)
    q = np.array([-0.08, 0.03, -0.05])
    z, converged, _ = projected_qp_solve(h, q, 2000, 1e-12)

    grid_n = np.arange(0.0, 0.1001, 1e-3)
    grid_t = np.arange(-0.1, 0.1001, 1e-3)
    nn, tx, ty = np.meshgrid(grid_n, grid_t, grid_t, indexing="ij")
    mask = np.hypot(tx, ty) <= nn
    pts = np.stack([nn[mask], tx[mask], ty[mask]], axis=1)
    vals = 0.5 * np.einsum("ij,jk,ik->i", pts, h, pts) + pts @ q
    best = vals.min()
    ours = 0.5 * z @ h @ z + q @ z
    assert ours <= best + 1e-6


def test_qp_zero_data_gives_zero_impulse():
    rng = np.random.default_rng(2)
    h, _ = _random_qp(rng)
    z, converged, iters = projected_qp_solve(h, np.zeros(24), 100, 1e-10)
    assert converged and iters <= 2
    np.testing.assert_array_equal(z, 0.0)


@needs_native
@pytest.mark.parametrize("seed", range(6))
def test_backend_parity_qp(seed):
    rng = np.random.default_rng(seed)
    h, q = _random_qp(rng)
    z_ref, c_ref, _ = _reference.projected_qp_solve(h, q, 400, 1e-10)
    z_nat, c_nat, _ = _native.projected_qp_solve(h, q, 400, 1e-10)
    assert c_ref == c_nat
    np.testing.assert_allclose(z_nat, z_ref, rtol=1e-7, atol=1e-10)
    obj_ref = 0.5 * z_ref @ h @ z_ref + q @ z_ref
    obj_nat = 0.5 * z_nat @ h @ z_nat + q @ z_nat
    assert abs(obj_ref - obj_nat) < 1e-12 * max(1.0, abs(obj_ref))


def _random_pgs(rng, nc):
    j_n = np.zeros((nc, 6))
    j_t = np.zeros((2 * nc, 6))
    j_n[:, 2] = 1.0
    j_n[:, 3:] = rng.normal(0, 0.05, (nc, 3))
    j_t[0::2, 0] = 1.0
    j_t[1::2, 1] = 1.0
    j_t[:, 3:] = rng.normal(0, 0.05, (2 * nc, 3))
    minv = 1.0 / np.array([0.37, 0.37, 0.37, 6e-4, 6e-4, 6e-4])
    u_free = rng.normal(0, 0.5, 6)
    bias = rng.uniform(0, 0.02, nc)
    return j_n, j_t, minv, u_free, bias


@needs_native
@pytest.mark.parametrize("seed", range(6))
def test_backend_parity_pgs(seed):
    rng = np.random.default_rng(100 + seed)
    nc = int(rng.integers(1, 5))
    j_n, j_t, minv, u_free, bias = _random_pgs(rng, nc)
    out_ref = _reference.pgs_solve(j_n, j_t, minv, u_free, bias, 0.4, 50, 1e-8)
    out_nat = _native.pgs_solve(j_n, j_t, minv, u_free, bias, 0.4, 50, 1e-8)
    for a, b in zip(out_ref[:3], out_nat[:3]):
        np.testing.assert_allclose(b, a, rtol=1e-9, atol=1e-12)
    assert out_ref[3] == out_nat[3]


def test_pgs_respects_constraints():
    rng = np.random.default_rng(42)
    for _ in range(10):
        nc = int(rng.integers(1, 5))
        j_n, j_t, minv, u_free, bias = _random_pgs(rng, nc)
        u, lam_n, lam_t, converged, _ = pgs_solve(j_n, j_t, minv, u_free, bias, 0.4, 200, 1e-10)
        assert np.all(lam_n >= 0)
        assert np.all(np.linalg.norm(lam_t, axis=1) <= 0.4 * lam_n + 1e-9)
        if converged:
            # complementarity: either the velocity target is met or impulse is zero
            slack = j_n @ u - bias
            assert np.all(slack >= -1e-6)
            assert np.all((lam_n < 1e-12) | (np.abs(slack) < 1e-6))


def test_backend_is_reported():
    assert BACKEND in ("native", "python")
