"""Optimal toss design: pick initial conditions expected to be informative.

Candidates are sampled from a diagonal Gaussian over the 13 initial-state
coordinates (quaternion renormalized after the draw), forward simulated
under the current parameter estimate, and valued by a reduction of the
FIM of the simulated trajectory's score.  The design is the best-of-N
argmax, optionally sharpened by cross-entropy rounds that refit the
distribution to the top fraction and resample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contact_model import ContactParams
from .curate import RANK_METHODS
from .dynamics import BlockState, SolverSettings, Trajectory, World, rollout
from .errors import ValidationError
from .loss import LossSettings, score

_QUAT = slice(3, 7)


@dataclass
class TossDistribution:
    """Componentwise Gaussian over initial [p, q, v, w] vectors."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.asarray(self.std, dtype=float)
        if self.mean.shape != (13,) or self.std.shape != (13,):
            raise ValidationError("toss distribution needs 13-dim mean and std")
        if np.any(self.std < 0):
            raise ValidationError("std must be nonnegative")

    def sample(self, rng: np.random.Generator) -> BlockState:
        x = rng.normal(self.mean, self.std)
        q = x[_QUAT]
        norm = np.linalg.norm(q)
        x[_QUAT] = q / norm if norm > 1e-8 else np.array([1.0, 0.0, 0.0, 0.0])
        return BlockState.from_vector(x)


def fit_initial_distribution(dataset) -> TossDistribution:
    """Componentwise mean/std (ddof=1) of the initial states of a dataset."""
    if len(dataset) < 2:
        raise ValidationError("need at least two trajectories to fit a toss distribution")
    x0 = np.array([t.initial_state.as_vector() for t in dataset])
    return TossDistribution(mean=x0.mean(axis=0), std=x0.std(axis=0, ddof=1))


@dataclass
class DesignSettings:
    n_candidates: int = 32
    horizon: int = 150
    dt: float = 0.005
    phi_kind: str = "trace"
    cem_rounds: int = 0
    cem_top_frac: float = 0.2
    refit_between: bool = False  # re-estimate theta after each executed toss

    def __post_init__(self):
        if self.n_candidates < 1:
            raise ValidationError("n_candidates must be >= 1")
        if self.horizon < 2:
            raise ValidationError("horizon must be >= 2")
        if self.phi_kind not in RANK_METHODS:
            raise ValidationError(f"unknown reduction {self.phi_kind!r}")
        if not 0.0 < self.cem_top_frac <= 1.0:
            raise ValidationError("cem_top_frac must lie in (0, 1]")


@dataclass
class TossDesign:
    x0: BlockState
    expected_info: float
    phi_kind: str
    n_candidates: int
    seed: int
    converged: bool = True
    candidate_values: list[float] = field(default_factory=list)
    trajectory: Trajectory | None = None


def _candidate_value(
    x0: BlockState,
    theta: ContactParams,
    design: DesignSettings,
    world: World,
    solver: SolverSettings | None,
    settings: LossSettings | None,
) -> tuple[float, Trajectory, bool]:
    traj = rollout(x0, theta, design.dt, design.horizon, world, solver, traj_id="candidate")
    sv = score(traj, theta, world, settings)
    # reduction of the rank-one candidate FIM; trace == ||g||^2, the
    # determinant family degenerates to the same ordering at rank one
    value = float(sv.g @ sv.g)
    return value, traj, sv.converged and traj.solver_converged


def design_toss(
    dist: TossDistribution,
    theta: ContactParams,
    design: DesignSettings,
    world: World,
    solver: SolverSettings | None = None,
    settings: LossSettings | None = None,
    seed: int = 0,
) -> TossDesign:
    """Best-of-N (optionally CEM-refined) search for an informative toss."""
    rng = np.random.default_rng(seed)
    current = dist
    best: tuple[float, BlockState, Trajectory, bool] | None = None
    values: list[float] = []
    for _ in range(design.cem_rounds + 1):
        candidates = [current.sample(rng) for _ in range(design.n_candidates)]
        scored = []
        for x0 in candidates:
            value, traj, ok = _candidate_value(x0, theta, design, world, solver, settings)
            values.append(value)
            scored.append((value, x0, traj, ok))
            if best is None or value > best[0] or (value == best[0] and not best[3] and ok):
                best = (value, x0, traj, ok)
        if design.cem_rounds:
            scored.sort(key=lambda item: -item[0])
            top = scored[: max(2, int(np.ceil(design.cem_top_frac * len(scored))))]
            elite = np.array([item[1].as_vector() for item in top])
            current = TossDistribution(mean=elite.mean(axis=0), std=elite.std(axis=0, ddof=1))
    value, x0, traj, ok = best
    return TossDesign(
        x0=x0,
        expected_info=value,
        phi_kind=design.phi_kind,
        n_candidates=design.n_candidates,
        seed=seed,
        converged=ok,
        candidate_values=values,
        trajectory=traj,
    )


def generate_dataset(
    n_exp: int,
    dist: TossDistribution,
    theta: ContactParams,
    design: DesignSettings,
    world: World,
    solver: SolverSettings | None = None,
    settings: LossSettings | None = None,
    seed: int = 0,
    refit=None,
) -> list[Trajectory]:
    """Design and execute n_exp tosses; simulation stands in for the robot.

    ``refit`` is an optional callable(list[Trajectory]) -> ContactParams used
    to refresh the estimate between iterations when refit_between is set.
    """
    if n_exp < 1:
        raise ValidationError("n_exp must be >= 1")
    out: list[Trajectory] = []
    ss = np.random.SeedSequence(seed)
    child_seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(n_exp)]
    current_theta = theta
    for n in range(n_exp):
        d = design_toss(dist, current_theta, design, world, solver, settings, seed=child_seeds[n])
        traj = d.trajectory
        traj.id = f"design_{n:03d}"
        traj.meta = {
            "expected_info": d.expected_info,
            "phi_kind": d.phi_kind,
            "n_candidates": d.n_candidates,
            "design_seed": d.seed,
            "design_converged": d.converged,
        }
        out.append(traj)
        if design.refit_between and refit is not None:
            current_theta = refit(out)
    return out


def random_dataset(
    n_exp: int,
    dist: TossDistribution,
    theta: ContactParams,
    design: DesignSettings,
    world: World,
    solver: SolverSettings | None = None,
    seed: int = 0,
) -> list[Trajectory]:
    """Baseline: execute tosses drawn straight from the distribution."""
    if n_exp < 1:
        raise ValidationError("n_exp must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for n in range(n_exp):
        x0 = dist.sample(rng)
        traj = rollout(x0, theta, design.dt, design.horizon, world, solver, traj_id=f"random_{n:03d}")
        out.append(traj)
    return out
