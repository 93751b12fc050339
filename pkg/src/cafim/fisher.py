"""Empirical Fisher information: assembly, reductions, and test utilities.

The information matrix of a set of per-trajectory scores g_i is the (mean or
plain) sum of their outer products.  Reductions map it to a scalar utility:
trace, log-determinant, determinant, or minimum eigenvalue.  The subset
identity gap ||F_subset^-1 F_full - I||_F measures how completely a curated
subset reproduces the information of the full dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

REDUCTIONS = ("trace", "logdet", "mineig", "det")


@dataclass
class FisherMatrix:
    matrix: np.ndarray
    n_samples: int
    normalization: str = "mean"

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.normalization not in ("mean", "sum"):
            raise ValidationError(f"unknown normalization {self.normalization!r}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def validate(self, sym_tol: float = 1e-12, psd_tol: float = 1e-9):
        asym = float(np.max(np.abs(self.matrix - self.matrix.T)))
        if asym > sym_tol:
            raise ValidationError(f"matrix asymmetry {asym} exceeds {sym_tol}")
        eigs = np.linalg.eigvalsh(self.matrix)
        scale = max(1.0, float(eigs[-1]))
        if eigs[0] < -psd_tol * scale:
            raise ValidationError(f"matrix is not PSD: min eigenvalue {eigs[0]}")


def _as_array(scores) -> np.ndarray:
    rows = [s.g if hasattr(s, "g") else np.asarray(s, dtype=float) for s in scores]
    if not rows:
        raise ValidationError("need at least one score")
    dim = rows[0].shape[0]
    if any(r.shape != (dim,) for r in rows):
        raise ValidationError("scores have mismatched dimensions")
    return np.array(rows)


def empirical_fim(scores, normalization: str = "mean") -> FisherMatrix:
    """Mean (or sum) of score outer products, symmetrized."""
    if normalization not in ("mean", "sum"):
        raise ValidationError(f"unknown normalization {normalization!r}")
    g = _as_array(scores)
    f = g.T @ g
    if normalization == "mean":
        f = f / g.shape[0]
    f = 0.5 * (f + f.T)
    return FisherMatrix(matrix=f, n_samples=g.shape[0], normalization=normalization)


def reduce_fim(fim: FisherMatrix | np.ndarray, phi: str, ridge: float = 1e-9) -> float:
    """Scalar information value of a PSD matrix under the named reduction."""
    m = fim.matrix if isinstance(fim, FisherMatrix) else np.asarray(fim, dtype=float)
    if phi == "trace":
        return float(np.trace(m))
    if phi == "det":
        return float(np.linalg.det(m))
    if phi == "mineig":
        return float(np.linalg.eigvalsh(m)[0])
    if phi == "logdet":
        reg = m + ridge * np.eye(m.shape[0])
        sign, value = np.linalg.slogdet(reg)
        if sign <= 0:
            raise ValidationError("logdet of a non-positive-definite matrix")
        return float(value)
    raise ValidationError(f"unknown reduction {phi!r}; expected one of {REDUCTIONS}")


def subset_identity_gap(
    f_subset: FisherMatrix, f_full: FisherMatrix, ridge: float = 1e-9
) -> float:
    """Frobenius norm of F_subset^-1 F_full - I (ridge-regularized).

    The ridge is added to both matrices: directions excited in neither (the
    shared near-null space of a contact FIM, e.g. parameters no toss ever
    touches) then map to ~1 and contribute nothing, so the gap measures the
    informative subspace and is exactly zero when the matrices coincide.
    """
    if f_subset.normalization != "mean" or f_full.normalization != "mean":
        raise ValidationError("subset identity gap expects mean-normalized matrices")
    if f_subset.dim != f_full.dim:
        raise ValidationError("dimension mismatch")
    eye = np.eye(f_subset.dim)
    prod = np.linalg.solve(f_subset.matrix + ridge * eye, f_full.matrix + ridge * eye)
    return float(np.linalg.norm(prod - eye, ord="fro"))


def greedy_gap_indices(
    scores, k_max: int, ridge: float = 1e-9
) -> tuple[list[int], list[float]]:
    """Grow a subset greedily to minimize the identity gap to the full FIM.

    Candidates are compared under a smoothing ridge proportional to the full
    matrix scale: with the bare ridge, a rank-deficient incumbent makes
    near-duplicate scores look better than genuinely new directions (their
    noise smears microscopic coverage across every uncovered direction).
    Returns the chosen indices and the reported gap (standard ridge) after
    each addition.
    """
    g = _as_array(scores)
    n, dim = g.shape
    if not 1 <= k_max <= n:
        raise ValidationError(f"k_max must be in [1, {n}]")
    f_full = (g.T @ g) / n
    eye = np.eye(dim)
    ridge_sel = max(ridge, 1e-3 * float(np.trace(f_full)) / dim)

    def gap_of(mat: np.ndarray, reg: float) -> float:
        return float(
            np.linalg.norm(np.linalg.solve(mat + reg * eye, f_full + reg * eye) - eye, ord="fro")
        )

    chosen: list[int] = []
    gaps: list[float] = []
    total = np.zeros((dim, dim))
    remaining = list(range(n))
    for _ in range(k_max):
        best_idx = -1
        best_gap = np.inf
        for idx in remaining:
            cand_mean = (total + np.outer(g[idx], g[idx])) / (len(chosen) + 1)
            gap = gap_of(cand_mean, ridge_sel)
            if gap < best_gap - 1e-15:
                best_gap = gap
                best_idx = idx
        total += np.outer(g[best_idx], g[best_idx])
        chosen.append(best_idx)
        remaining.remove(best_idx)
        gaps.append(gap_of(total / len(chosen), ridge))
    return chosen, gaps


def effective_condition_number(fim: FisherMatrix | np.ndarray, k: int) -> float:
    """Ratio of the largest to the k-th largest eigenvalue.

    The natural conditioning measure for a FIM assembled from k rank-one
    score outer products, whose trailing eigenvalues are structurally zero.
    """
    m = fim.matrix if isinstance(fim, FisherMatrix) else np.asarray(fim, dtype=float)
    eigs = np.sort(np.linalg.eigvalsh(m))[::-1]
    if k < 1 or k > eigs.size:
        raise ValidationError(f"k must be in [1, {eigs.size}]")
    denom = eigs[k - 1]
    if denom <= 0.0:
        return np.inf
    return float(eigs[0] / denom)


@dataclass
class GaussianLocationModel:
    """y = theta + eps, eps ~ N(0, sigma^2): the CRLB equality case."""

    theta: float = 0.0
    sigma: float = 1.0
    n_samples: int = 100

    @property
    def fisher_information(self) -> float:
        return self.n_samples / (self.sigma**2)

    @property
    def crlb(self) -> float:
        return 1.0 / self.fisher_information


def monte_carlo_mle_variance(model: GaussianLocationModel, n_trials: int, seed: int) -> float:
    """Sampled variance of the sample-mean MLE over repeated experiments."""
    rng = np.random.default_rng(seed)
    draws = rng.normal(model.theta, model.sigma, size=(n_trials, model.n_samples))
    theta_hat = draws.mean(axis=1)
    return float(np.var(theta_hat, ddof=1))


def crlb_gap(model: GaussianLocationModel, n_trials: int, seed: int) -> float:
    """Min eigenvalue of cov(theta_hat) - F^-1; nonnegative in expectation."""
    var = monte_carlo_mle_variance(model, n_trials, seed)
    return var - model.crlb
