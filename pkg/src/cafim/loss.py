"""Contact-implicit trajectory loss, inner impulse recovery, and its score.

Per timestep i the loss measures how well the parameters explain the observed
motion through four residuals (term weights configurable, default 1):

    || J^T lam - f_data ||^2                      impulses explain the velocity gap
  + sum_k phi'_k^2 || lam_k ||^2                  impulses only at zero gap
  + || min(0, phi') ||^2                          no penetration at the next pose
  + sum_k || s_k lam_t,k + mu lam_n,k w_k ||^2    friction opposes sliding

where f_data = M (u_next - u_free) is the generalized impulse unexplained by
gravity, phi' are the gaps at the pose advanced by the measured next
velocity, w_k = (J_t v')_k is the tangential contact velocity and
s_k = ||w_k||.  The complementarity penalty pairs each vertex's gap with its
own impulse, so a vertex that never touches the ground contributes nothing
anywhere; the dissipation residual vanishes exactly when the tangential
impulse opposes the slip at the cone boundary, lam_t = -mu lam_n w_hat.
Together these make the loss vanish at the generating parameters on
noise-free data.

The impulse lam is recovered per step by minimizing the lam-dependent terms
over the friction cone with Nesterov-accelerated projected gradient descent
(fixed Lipschitz step, adaptive restart).  Friction enters the feasible set
only through the cone radius mu * lam_n; the inner problem is reparameterized
with lam_t = mu * t, ||t|| <= lam_n, which makes the feasible set
parameter-free so that the envelope theorem gives the exact theta-gradient
with the inner minimizer held fixed.  The score of a trajectory is the
gradient of its mean step loss and is identically zero for tosses that never
approach contact.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _quat
from .contact_model import (
    NUM_VERTICES,
    PARAM_DIM,
    ContactKinematics,
    ContactParams,
    kinematics,
)
from .dynamics import ImpulseSet, Trajectory, World, integrate_pose
from .kernels import projected_qp_solve

_SLIP_EPS = 1e-12


@dataclass
class TermWeights:
    prediction: float = 1.0
    complementarity: float = 1.0
    penetration: float = 1.0
    dissipation: float = 1.0


@dataclass
class LossSettings:
    weights: TermWeights = field(default_factory=TermWeights)
    inner_iterations: int = 400
    inner_tolerance: float = 1e-8
    include_mu_grad: bool = True


@dataclass
class StepResidual:
    """Observed quantities of one step that the impulses must explain."""

    f_data: np.ndarray  # (6,) generalized impulse gap vs the free prediction
    phi_next: np.ndarray  # (8,) gaps at the predicted next pose
    v_next: np.ndarray  # (6,) measured next generalized velocity


@dataclass
class ScoreVector:
    """Per-trajectory gradient of the loss w.r.t. the flat parameters."""

    g: np.ndarray  # (25,)
    converged: bool = True

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.g))


def step_residual(traj: Trajectory, i: int, params: ContactParams, world: World) -> StepResidual:
    if not 0 <= i < len(traj) - 1:
        raise IndexError(f"step index {i} out of range for trajectory of length {len(traj)}")
    state = traj.states[i]
    u_next = traj.states[i + 1].generalized_velocity
    mdiag = world.mass_props.generalized_diag
    u_free = state.generalized_velocity + traj.dt * world.generalized_gravity / mdiag
    f_data = mdiag * (u_next - u_free)
    predicted = integrate_pose(state, u_next, traj.dt)
    phi_next = kinematics(params, predicted).phi
    return StepResidual(f_data=f_data, phi_next=phi_next, v_next=u_next)


def _qp_pieces(residual: StepResidual, kin: ContactKinematics, mu: float, weights: TermWeights):
    """Quadratic pieces of the lam-dependent loss in cone coordinates.

    Cone coordinates zeta stack (lam_n, t_x, t_y) per vertex with the
    physical tangential impulse lam_t = mu * t.
    """
    n = 3 * NUM_VERTICES
    a = np.zeros((6, n))
    a[:, 0::3] = kin.j_n.T
    a[:, 1::3] = mu * kin.j_t[0::2].T
    a[:, 2::3] = mu * kin.j_t[1::2].T

    # per-contact complementarity: w2 * phi'_k^2 * (lam_n^2 + mu^2 |t|^2)
    phi2 = residual.phi_next**2
    comp = np.empty(n)
    comp[0::3] = weights.complementarity * phi2
    comp[1::3] = weights.complementarity * phi2 * mu * mu
    comp[2::3] = weights.complementarity * phi2 * mu * mu

    w = kin.j_t @ residual.v_next  # (16,) tangential contact velocities
    wk = w.reshape(NUM_VERTICES, 2)
    s = np.hypot(wk[:, 0], wk[:, 1])

    # dissipation residual rho_k = mu (s_k t_k + lam_n,k w_k); its G^T G is
    # block diagonal per vertex
    gtg = np.zeros((n, n))
    mu2 = mu * mu
    for k in range(NUM_VERTICES):
        b = 3 * k
        wx, wy = wk[k]
        sk = s[k]
        gtg[b, b] = mu2 * (wx * wx + wy * wy)
        gtg[b, b + 1] = gtg[b + 1, b] = mu2 * sk * wx
        gtg[b, b + 2] = gtg[b + 2, b] = mu2 * sk * wy
        gtg[b + 1, b + 1] = mu2 * sk * sk
        gtg[b + 2, b + 2] = mu2 * sk * sk

    h = 2.0 * (weights.prediction * (a.T @ a) + np.diag(comp) + weights.dissipation * gtg)
    q = -2.0 * weights.prediction * (a.T @ residual.f_data)
    return h, q, a, comp, wk, s


def _zeta_to_impulses(zeta: np.ndarray, mu: float) -> ImpulseSet:
    z = zeta.reshape(NUM_VERTICES, 3)
    return ImpulseSet(normal=z[:, 0].copy(), tangent=mu * z[:, 1:].copy())


def solve_impulses(
    residual: StepResidual,
    kin: ContactKinematics,
    params: ContactParams,
    settings: LossSettings | None = None,
) -> tuple[ImpulseSet, bool]:
    """Recover the cone-feasible impulses minimizing the step loss."""
    settings = settings or LossSettings()
    h, q, *_ = _qp_pieces(residual, kin, params.mu, settings.weights)
    zeta, converged, _ = projected_qp_solve(
        h, q, settings.inner_iterations, settings.inner_tolerance
    )
    return _zeta_to_impulses(zeta, params.mu), converged


def step_loss(
    traj: Trajectory,
    i: int,
    params: ContactParams,
    world: World,
    settings: LossSettings | None = None,
) -> float:
    """Loss of a single step; the clear scalar reference path."""
    settings = settings or LossSettings()
    wts = settings.weights
    residual = step_residual(traj, i, params, world)
    kin = kinematics(params, traj.states[i])
    mu = params.mu

    h, q, a, comp, wk, s = _qp_pieces(residual, kin, mu, wts)
    zeta, _, _ = projected_qp_solve(h, q, settings.inner_iterations, settings.inner_tolerance)

    r = a @ zeta - residual.f_data
    phi_neg = np.minimum(0.0, residual.phi_next)
    lam_n = zeta[0::3]
    t_tilde = zeta.reshape(NUM_VERTICES, 3)[:, 1:]
    rho = mu * (s[:, None] * t_tilde + lam_n[:, None] * wk)

    return (
        wts.prediction * float(r @ r)
        + float(zeta @ (comp * zeta))
        + wts.penetration * float(phi_neg @ phi_neg)
        + wts.dissipation * float(np.sum(rho * rho))
    )


class _TrajectoryCache:
    """Parameter-independent per-trajectory quantities, computed once."""

    def __init__(self, traj: Trajectory, world: World):
        tm1 = len(traj) - 1
        mdiag = world.mass_props.generalized_diag
        grav = world.generalized_gravity

        self.dt = traj.dt
        self.u = np.array([s.generalized_velocity for s in traj.states])  # (T, 6)
        self.u_free = self.u[:-1] + traj.dt * grav / mdiag  # (T-1, 6)
        self.f_data = mdiag * (self.u[1:] - self.u_free)  # (T-1, 6)
        self.rot = np.array([_quat.rotation_matrix(s.orientation) for s in traj.states[:-1]])
        predicted = [
            integrate_pose(traj.states[i], self.u[i + 1], traj.dt) for i in range(tm1)
        ]
        self.pred_z = np.array([p.position[2] for p in predicted])  # (T-1,)
        self.rot_next = np.array([_quat.rotation_matrix(p.orientation) for p in predicted])
        self.v_next = self.u[1:]  # (T-1, 6)


def _batched_eval(
    traj: Trajectory,
    params: ContactParams,
    world: World,
    settings: LossSettings,
    want_grad: bool,
    cache: _TrajectoryCache | None = None,
):
    """Mean step loss (and optionally its theta-gradient) of a trajectory."""
    wts = settings.weights
    mu = params.mu
    verts = params.vertices
    c = cache or _TrajectoryCache(traj, world)
    tm1 = len(traj) - 1
    n = 3 * NUM_VERTICES

    # contact frame rows c_a = R^T e_a at the current poses (T-1, 3)
    cx, cy, cz = c.rot[:, 0, :], c.rot[:, 1, :], c.rot[:, 2, :]
    # gaps at the predicted next pose (T-1, 8)
    phi_next = np.einsum("tj,kj->tk", c.rot_next[:, 2, :], verts) + c.pred_z[:, None]
    phi_neg = np.minimum(0.0, phi_next)

    # angular parts of the Jacobian rows: v_k x c_a (T-1, 8, 3)
    ang_n = np.cross(verts[None, :, :], cz[:, None, :])
    ang_x = np.cross(verts[None, :, :], cx[:, None, :])
    ang_y = np.cross(verts[None, :, :], cy[:, None, :])

    # tangential contact velocities w (T-1, 8, 2) and slip speeds s
    v_lin = c.v_next[:, :3]
    v_ang = c.v_next[:, 3:]
    wk = np.empty((tm1, NUM_VERTICES, 2))
    wk[:, :, 0] = v_lin[:, None, 0] + np.einsum("tkj,tj->tk", ang_x, v_ang)
    wk[:, :, 1] = v_lin[:, None, 1] + np.einsum("tkj,tj->tk", ang_y, v_ang)
    s = np.hypot(wk[:, :, 0], wk[:, :, 1])

    # A (T-1, 6, 24): columns J_n,k^T, mu J_tx,k^T, mu J_ty,k^T per vertex
    a = np.zeros((tm1, 6, n))
    a[:, 2, 0::3] = 1.0
    a[:, 3:, 0::3] = np.transpose(ang_n, (0, 2, 1))
    a[:, 0, 1::3] = mu
    a[:, 3:, 1::3] = mu * np.transpose(ang_x, (0, 2, 1))
    a[:, 1, 2::3] = mu
    a[:, 3:, 2::3] = mu * np.transpose(ang_y, (0, 2, 1))

    phi2 = phi_next**2
    comp = np.zeros((tm1, n))
    comp[:, 0::3] = wts.complementarity * phi2
    comp[:, 1::3] = wts.complementarity * phi2 * mu * mu
    comp[:, 2::3] = comp[:, 1::3]

    h = 2.0 * wts.prediction * np.einsum("tia,tib->tab", a, a)
    idx = np.arange(n)
    h[:, idx, idx] += 2.0 * comp
    w4m2 = 2.0 * wts.dissipation * mu * mu
    for k in range(NUM_VERTICES):
        b = 3 * k
        wx, wy = wk[:, k, 0], wk[:, k, 1]
        sk = s[:, k]
        h[:, b, b] += w4m2 * (wx * wx + wy * wy)
        h[:, b, b + 1] += w4m2 * sk * wx
        h[:, b + 1, b] += w4m2 * sk * wx
        h[:, b, b + 2] += w4m2 * sk * wy
        h[:, b + 2, b] += w4m2 * sk * wy
        h[:, b + 1, b + 1] += w4m2 * sk * sk
        h[:, b + 2, b + 2] += w4m2 * sk * sk
    q = -2.0 * wts.prediction * np.einsum("tia,ti->ta", a, c.f_data)

    zeta = np.empty((tm1, n))
    all_converged = True
    for i in range(tm1):
        zi, conv, _ = projected_qp_solve(
            np.ascontiguousarray(h[i]), q[i], settings.inner_iterations, settings.inner_tolerance
        )
        zeta[i] = zi
        all_converged = all_converged and conv

    lam_n = zeta[:, 0::3]  # (T-1, 8)
    t_tilde = np.stack([zeta[:, 1::3], zeta[:, 2::3]], axis=2)  # (T-1, 8, 2)
    r = np.einsum("tia,ta->ti", a, zeta) - c.f_data  # (T-1, 6)
    rho_aux = s[:, :, None] * t_tilde + lam_n[:, :, None] * wk  # rho / mu
    rho = mu * rho_aux  # (T-1, 8, 2)
    lam_k_sq = lam_n**2 + mu * mu * np.sum(t_tilde * t_tilde, axis=2)

    loss_terms = (
        wts.prediction * np.einsum("ti,ti->t", r, r)
        + wts.complementarity * np.einsum("tk,tk->t", phi2, lam_k_sq)
        + wts.penetration * np.einsum("tk,tk->t", phi_neg, phi_neg)
        + wts.dissipation * np.einsum("tka,tka->t", rho, rho)
    )
    loss = float(loss_terms.sum() / tm1)
    if not want_grad:
        return loss, None, all_converged

    g_v = np.zeros((NUM_VERTICES, 3))
    cz_next = c.rot_next[:, 2, :]  # (T-1, 3)
    r_ang = r[:, 3:]

    # prediction: 2 w1 (m_k x r_ang) with m_k the axis-weighted impulse mix
    m_k = (
        lam_n[:, :, None] * cz[:, None, :]
        + mu * t_tilde[:, :, 0, None] * cx[:, None, :]
        + mu * t_tilde[:, :, 1, None] * cy[:, None, :]
    )
    g_v += 2.0 * wts.prediction * np.einsum("tkj->kj", np.cross(m_k, r_ang[:, None, :]))
    jt_tt_ang = np.einsum("tk,tkj->tj", t_tilde[:, :, 0], ang_x) + np.einsum(
        "tk,tkj->tj", t_tilde[:, :, 1], ang_y
    )
    jt_tt_lin = np.stack(
        [t_tilde[:, :, 0].sum(axis=1), t_tilde[:, :, 1].sum(axis=1)], axis=1
    )
    grad_mu = 2.0 * wts.prediction * (
        float(np.einsum("tj,tj->", jt_tt_lin, r[:, :2]))
        + float(np.einsum("tj,tj->", jt_tt_ang, r_ang))
    )

    # complementarity (per contact) and penetration
    g_v += 2.0 * wts.complementarity * np.einsum("tk,tj->kj", phi_next * lam_k_sq, cz_next)
    grad_mu += 2.0 * wts.complementarity * mu * float(
        np.einsum("tk,tk->", phi2, np.sum(t_tilde * t_tilde, axis=2))
    )
    g_v += 2.0 * wts.penetration * np.einsum("tk,tj->kj", phi_neg, cz_next)

    # dissipation: rows of dw_k/dv_k are c_a x omega', shared across vertices
    p_x = np.cross(cx, v_ang)  # (T-1, 3)
    p_y = np.cross(cy, v_ang)
    s_safe = np.where(s > _SLIP_EPS, s, 1.0)
    w_hat = np.where(s[:, :, None] > _SLIP_EPS, wk / s_safe[:, :, None], 0.0)
    rho_dot_lt = np.sum(rho * (mu * t_tilde), axis=2)  # (T-1, 8)
    ds_dv = w_hat[:, :, 0, None] * p_x[:, None, :] + w_hat[:, :, 1, None] * p_y[:, None, :]
    rho_p = rho[:, :, 0, None] * p_x[:, None, :] + rho[:, :, 1, None] * p_y[:, None, :]
    g_v += 2.0 * wts.dissipation * np.einsum(
        "tkj->kj", rho_dot_lt[:, :, None] * ds_dv + (mu * lam_n)[:, :, None] * rho_p
    )
    grad_mu += 2.0 * wts.dissipation * float(np.sum(rho * rho_aux))

    grad = np.concatenate([g_v.reshape(-1), [grad_mu if settings.include_mu_grad else 0.0]])
    return loss, grad / tm1, all_converged


def trajectory_loss(
    traj: Trajectory,
    params: ContactParams,
    world: World,
    settings: LossSettings | None = None,
) -> float:
    """Mean step loss over the trajectory."""
    loss, _, _ = _batched_eval(traj, params, world, settings or LossSettings(), want_grad=False)
    return loss


def score(
    traj: Trajectory,
    params: ContactParams,
    world: World,
    settings: LossSettings | None = None,
) -> ScoreVector:
    """Gradient of the mean step loss w.r.t. the flat parameters."""
    _, grad, converged = _batched_eval(
        traj, params, world, settings or LossSettings(), want_grad=True
    )
    return ScoreVector(g=grad, converged=converged)


def score_dataset(
    dataset,
    params: ContactParams,
    world: World,
    settings: LossSettings | None = None,
    threads: int = 1,
) -> list[ScoreVector]:
    """Scores of every trajectory; output order matches the input order."""
    settings = settings or LossSettings()
    if threads <= 1:
        return [score(t, params, world, settings) for t in dataset]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda t: score(t, params, world, settings), dataset))


def finite_difference_score(
    traj: Trajectory,
    params: ContactParams,
    world: World,
    settings: LossSettings | None = None,
    h: float = 1e-6,
) -> np.ndarray:
    """Central-difference gradient of trajectory_loss; the score oracle."""
    settings = settings or LossSettings()
    theta = params.flatten()
    out = np.empty(PARAM_DIM)
    for j in range(PARAM_DIM):
        hj = h
        if j == PARAM_DIM - 1 and theta[j] - h < 0.0:
            hj = 0.5 * theta[j] if theta[j] > 0 else 0.0
        if hj == 0.0:
            out[j] = 0.0
            continue
        plus = theta.copy()
        plus[j] += hj
        minus = theta.copy()
        minus[j] -= hj
        lp = trajectory_loss(traj, ContactParams.from_flat(plus), world, settings)
        lm = trajectory_loss(traj, ContactParams.from_flat(minus), world, settings)
        out[j] = (lp - lm) / (2.0 * hj)
    if not settings.include_mu_grad:
        out[-1] = 0.0
    return out
