"""Contact-aware Fisher information for toss datasets.

Quantifies how much a contact trajectory teaches about rigid-body geometry
and friction, ranks and curates datasets accordingly, fits parameters by
maximum likelihood on the curated subsets, and designs new initial tosses
that are expected to be informative.
"""

from .contact_model import ContactParams, kinematics, kinematics_param_jacobian
from .curate import info_orthogonal_select, random_select, rank
from .design import design_toss, fit_initial_distribution, generate_dataset
from .dynamics import (
    BlockState,
    ImpulseSet,
    MassProps,
    SolverSettings,
    Trajectory,
    World,
    rollout,
    step_contact,
    step_free,
)
from .estimate import curation_experiment, eval_metrics, fit
from .fisher import FisherMatrix, crlb_gap, empirical_fim, reduce_fim, subset_identity_gap
from .kernels import BACKEND
from .loss import (
    LossSettings,
    ScoreVector,
    TermWeights,
    score,
    score_dataset,
    solve_impulses,
    step_loss,
    step_residual,
    trajectory_loss,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BlockState",
    "ContactParams",
    "FisherMatrix",
    "ImpulseSet",
    "LossSettings",
    "MassProps",
    "ScoreVector",
    "SolverSettings",
    "TermWeights",
    "Trajectory",
    "World",
    "crlb_gap",
    "curation_experiment",
    "design_toss",
    "empirical_fim",
    "eval_metrics",
    "fit",
    "fit_initial_distribution",
    "generate_dataset",
    "info_orthogonal_select",
    "kinematics",
    "kinematics_param_jacobian",
    "random_select",
    "rank",
    "reduce_fim",
    "rollout",
    "score",
    "score_dataset",
    "solve_impulses",
    "step_contact",
    "step_free",
    "step_loss",
    "step_residual",
    "subset_identity_gap",
    "trajectory_loss",
]
