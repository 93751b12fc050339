"""Maximum-likelihood fitting of contact parameters and evaluation metrics.

Fitting runs momentum gradient descent on the mean trajectory loss, stepping
once per trajectory in a fixed order each epoch, projecting vertices into the
parameter box and friction to be nonnegative.  The returned estimate is the
best iterate seen, so the reported final loss never exceeds the initial one.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _quat
from .contact_model import NUM_VERTICES, PARAM_DIM, ContactParams, kinematics
from .curate import (
    RankResult,
    info_orthogonal_select_from_scores,
    rank_from_scores,
    random_select,
)
from .dynamics import SolverSettings, Trajectory, World, rollout
from .errors import NumericalError, ValidationError
from .loss import LossSettings, score, score_dataset, trajectory_loss


@dataclass
class OptSettings:
    step_size: float = 0.1
    momentum: float = 0.8
    epochs: int = 12
    rank_refresh: int = 4  # re-rank every n epochs when curation is interleaved
    learn_mu: bool = True
    divergence_limit: float = 1e6
    vertex_bound: float = 0.5


@dataclass
class EvalMetrics:
    traj_pos_error: float
    traj_rot_error: float
    penetration_error: float

    def as_dict(self) -> dict:
        return {
            "traj_pos_error": self.traj_pos_error,
            "traj_rot_error": self.traj_rot_error,
            "penetration_error": self.penetration_error,
        }


@dataclass
class FitReport:
    theta_hat: ContactParams
    loss_history: list[float]
    vertex_rmse: float | None = None
    metrics: EvalMetrics | None = None


def vertex_rmse(estimate: ContactParams, truth: ContactParams) -> float:
    """Root mean squared vertex displacement against the generating geometry."""
    d = estimate.vertices - truth.vertices
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


def _project(theta: np.ndarray, opt: OptSettings) -> np.ndarray:
    out = theta.copy()
    out[:-1] = np.clip(out[:-1], -opt.vertex_bound, opt.vertex_bound)
    out[-1] = max(0.0, out[-1])
    return out


def _mean_loss(subset, params, world, settings) -> float:
    return float(np.mean([trajectory_loss(t, params, world, settings) for t in subset]))


def fit(
    subset,
    theta0: ContactParams,
    opt: OptSettings,
    world: World,
    settings: LossSettings | None = None,
    truth: ContactParams | None = None,
) -> FitReport:
    """Descend the mean trajectory loss; returns the best iterate found."""
    if len(subset) == 0:
        raise ValidationError("cannot fit on an empty subset")
    settings = settings or LossSettings()
    if not opt.learn_mu:
        settings = replace(settings, include_mu_grad=False)

    theta = _project(theta0.flatten(), opt)
    velocity = np.zeros(PARAM_DIM)

    initial = _mean_loss(subset, ContactParams.from_flat(theta, opt.vertex_bound), world, settings)
    history = [initial]
    best_theta = theta.copy()
    best_loss = initial

    for _ in range(opt.epochs):
        for traj in subset:
            params = ContactParams.from_flat(theta, opt.vertex_bound)
            g = score(traj, params, world, settings).g
            velocity = opt.momentum * velocity - opt.step_size * g
            theta = _project(theta + velocity, opt)
        params = ContactParams.from_flat(theta, opt.vertex_bound)
        epoch_loss = _mean_loss(subset, params, world, settings)
        history.append(epoch_loss)
        if not np.isfinite(epoch_loss) or epoch_loss > opt.divergence_limit:
            raise NumericalError(f"optimizer diverged: loss {epoch_loss}")
        if epoch_loss < best_loss:
            best_loss = epoch_loss
            best_theta = theta.copy()

    if history[-1] > best_loss:
        history.append(best_loss)  # loss of the returned iterate
    theta_hat = ContactParams.from_flat(best_theta, opt.vertex_bound)
    rmse = vertex_rmse(theta_hat, truth) if truth is not None else None
    return FitReport(theta_hat=theta_hat, loss_history=history, vertex_rmse=rmse)


def eval_metrics(
    theta_hat: ContactParams,
    test_set,
    world: World,
    solver: SolverSettings | None = None,
) -> EvalMetrics:
    """Rollout errors from each test toss's initial state under theta_hat.

    Position and rotation errors compare the rollout to the held-out data
    per step; penetration measures how far the rollout's own poses drive the
    estimated geometry below the ground, so distorted geometry shows up even
    when the held-out poses themselves stay feasible.
    """
    if len(test_set) == 0:
        raise ValidationError("cannot evaluate on an empty test set")
    pos_errors = []
    rot_errors = []
    pen_errors = []
    for traj in test_set:
        sim = rollout(
            traj.initial_state, theta_hat, traj.dt, len(traj), world, solver, traj_id="eval"
        )
        pe = [
            float(np.linalg.norm(a.position - b.position))
            for a, b in zip(sim.states, traj.states)
        ]
        re = [
            _quat.geodesic_angle(a.orientation, b.orientation)
            for a, b in zip(sim.states, traj.states)
        ]
        pens = [
            max(0.0, -float(np.min(kinematics(theta_hat, s).phi))) for s in sim.states
        ]
        pos_errors.append(np.mean(pe))
        rot_errors.append(np.mean(re))
        pen_errors.append(np.mean(pens))
    return EvalMetrics(
        traj_pos_error=float(np.mean(pos_errors)),
        traj_rot_error=float(np.mean(rot_errors)),
        penetration_error=float(np.mean(pen_errors)),
    )


def select_subset(
    method: str,
    scores,
    size: int,
    seed: int,
) -> RankResult:
    """Dispatch a selection method on precomputed scores."""
    if method == "random":
        return random_select(len(scores), size, seed)
    if method == "info_orthogonal":
        return info_orthogonal_select_from_scores(scores, size)
    return rank_from_scores(scores, method, size)


@dataclass
class ExperimentCell:
    size: int
    method: str
    seed: int
    selected_indices: list[int]
    vertex_rmse: float | None
    final_loss: float
    metrics: EvalMetrics


@dataclass
class ExperimentTable:
    cells: list[ExperimentCell] = field(default_factory=list)

    def aggregate(self) -> list[dict]:
        """Mean and variance of each metric per (size, method) cell group."""
        out = []
        keys = sorted({(c.size, c.method) for c in self.cells})
        for size, method in keys:
            group = [c for c in self.cells if c.size == size and c.method == method]
            row: dict = {"size": size, "method": method, "n_seeds": len(group)}
            for name in ("traj_pos_error", "traj_rot_error", "penetration_error"):
                vals = np.array([getattr(c.metrics, name) for c in group])
                row[f"{name}_mean"] = float(np.mean(vals))
                row[f"{name}_var"] = float(np.var(vals))
            rmses = [c.vertex_rmse for c in group if c.vertex_rmse is not None]
            if rmses:
                row["vertex_rmse_mean"] = float(np.mean(rmses))
                row["vertex_rmse_var"] = float(np.var(rmses))
            out.append(row)
        return out


def _fit_curated(
    train_set,
    scores0,
    method: str,
    size: int,
    seed: int,
    theta0: ContactParams,
    opt: OptSettings,
    world: World,
    settings: LossSettings,
    truth: ContactParams | None,
) -> tuple[FitReport, list[int]]:
    """Select-then-fit, re-ranking at the current estimate every rank_refresh epochs."""
    selection = select_subset(method, scores0, size, seed)
    indices = list(selection.ordered_indices)
    refresh = opt.rank_refresh if method != "random" else 0

    theta_seed = theta0
    history: list[float] = []
    report = None
    epochs_left = opt.epochs
    while epochs_left > 0:
        block = min(refresh, epochs_left) if refresh > 0 else epochs_left
        subset = [train_set[i] for i in indices]
        block_opt = replace(opt, epochs=block)
        report = fit(subset, theta_seed, block_opt, world, settings, truth=truth)
        history.extend(report.loss_history if not history else report.loss_history[1:])
        theta_seed = report.theta_hat
        epochs_left -= block
        if epochs_left > 0 and refresh > 0:
            fresh = score_dataset(train_set, theta_seed, world, settings)
            indices = list(select_subset(method, fresh, size, seed).ordered_indices)
    report.loss_history = history
    return report, indices


def curation_experiment(
    train_set,
    test_set,
    theta0: ContactParams,
    sizes,
    methods,
    seeds,
    world: World,
    opt: OptSettings,
    settings: LossSettings | None = None,
    truth: ContactParams | None = None,
    solver: SolverSettings | None = None,
) -> ExperimentTable:
    """Fit and evaluate every (size, method, seed) cell on a fixed split.

    Ranking only ever sees the training pool; test tosses are untouched.
    Deterministic selections are cached across seeds, since reruns are
    bitwise identical by construction.
    """
    settings = settings or LossSettings()
    for size in sizes:
        if size > len(train_set):
            raise ValidationError(f"subset size {size} exceeds training pool {len(train_set)}")

    scores0 = score_dataset(train_set, theta0, world, settings)
    table = ExperimentTable()
    cache: dict[tuple, tuple[FitReport, list[int]]] = {}
    for size in sizes:
        for method in methods:
            if method not in ("random", "info_orthogonal") and method not in (
                "trace",
                "logdet",
                "mineig",
                "det",
            ):
                raise ValidationError(f"unknown curation method {method!r}")
            for seed in seeds:
                key = (size, method, seed if method == "random" else None)
                if key not in cache:
                    cache[key] = _fit_curated(
                        train_set, scores0, method, size, seed, theta0, opt, world, settings, truth
                    )
                report, indices = cache[key]
                metrics = eval_metrics(report.theta_hat, test_set, world, solver)
                table.cells.append(
                    ExperimentCell(
                        size=size,
                        method=method,
                        seed=seed,
                        selected_indices=indices,
                        vertex_rmse=report.vertex_rmse,
                        final_loss=report.loss_history[-1],
                        metrics=metrics,
                    )
                )
    return table
