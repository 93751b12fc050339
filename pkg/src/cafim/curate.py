"""Dataset ranking and subset selection over per-trajectory information.

Ranking reduces each trajectory's rank-one FIM (its score outer product) to a
scalar and sorts descending.  Determinant-family reductions are identically
zero (or ridge-dominated) on rank-one matrices, so det/logdet/mineig rankings
fall back to the trace ordering and flag it in the result.

The info-orthogonal selector greedily picks trajectories whose unit score
directions have minimal worst-case alignment with the already selected set,
spreading information across parameter subspaces instead of piling it onto
the largest one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contact_model import ContactParams
from .dynamics import World
from .errors import ValidationError
from .loss import LossSettings, score_dataset

RANK_METHODS = ("trace", "logdet", "mineig", "det")
SELECT_METHODS = RANK_METHODS + ("info_orthogonal", "random")
_RANK1_FALLBACK = ("logdet", "mineig", "det")


@dataclass
class RankResult:
    ordered_indices: list[int]
    values: list[float]
    method: str
    k_thresh: int
    phi_fallback: str | None = None

    def __post_init__(self):
        if len(set(self.ordered_indices)) != len(self.ordered_indices):
            raise ValidationError("ranked indices must be unique")


def _scores_matrix(scores) -> np.ndarray:
    return np.array([s.g if hasattr(s, "g") else np.asarray(s, dtype=float) for s in scores])


def rank_from_scores(scores, phi: str, k_thresh: int) -> RankResult:
    """Order trajectories by the reduction of their rank-one FIMs."""
    g = _scores_matrix(scores)
    n = g.shape[0]
    if n == 0:
        raise ValidationError("cannot rank an empty dataset")
    if not 1 <= k_thresh <= n:
        raise ValidationError(f"k_thresh must be in [1, {n}]")
    if phi not in RANK_METHODS:
        raise ValidationError(f"unknown ranking reduction {phi!r}")

    fallback = "trace" if phi in _RANK1_FALLBACK else None
    values = np.einsum("ij,ij->i", g, g)  # trace of g g^T
    # stable argsort on negated values: ties broken by lower index
    order = np.argsort(-values, kind="stable")[:k_thresh]
    return RankResult(
        ordered_indices=[int(i) for i in order],
        values=[float(values[i]) for i in order],
        method=phi,
        k_thresh=k_thresh,
        phi_fallback=fallback,
    )


def rank(
    dataset,
    params: ContactParams,
    phi: str,
    k_thresh: int,
    world: World,
    settings: LossSettings | None = None,
    threads: int = 1,
) -> RankResult:
    """Score the dataset at the given parameters and rank by the reduction."""
    if len(dataset) == 0:
        raise ValidationError("cannot rank an empty dataset")
    scores = score_dataset(dataset, params, world, settings, threads=threads)
    return rank_from_scores(scores, phi, k_thresh)


def info_orthogonal_select_from_scores(scores, k: int) -> RankResult:
    """Greedy selection minimizing |cos| to the already selected scores.

    Seeds with the largest-norm score; each following pick minimizes the max
    absolute inner product of unit scores against the selected set, breaking
    ties by larger norm then lower index.  Zero-score trajectories are
    excluded until nothing else remains.
    """
    g = _scores_matrix(scores)
    n = g.shape[0]
    if n == 0:
        raise ValidationError("cannot select from an empty dataset")
    if not 1 <= k <= n:
        raise ValidationError(f"k must be in [1, {n}]")

    norms = np.linalg.norm(g, axis=1)
    unit = np.zeros_like(g)
    nonzero = norms > 0.0
    unit[nonzero] = g[nonzero] / norms[nonzero, None]

    selected: list[int] = []
    values: list[float] = []
    seed = int(np.argmax(norms))  # argmax takes the first maximum: lowest index on ties
    selected.append(seed)
    values.append(float(norms[seed]))

    while len(selected) < k:
        candidates = [i for i in range(n) if i not in selected and nonzero[i]]
        if not candidates:
            candidates = [i for i in range(n) if i not in selected]
            idx = candidates[0]
            selected.append(idx)
            values.append(0.0)
            continue
        sel_unit = unit[selected]
        best = None
        for i in candidates:
            alignment = float(np.max(np.abs(sel_unit @ unit[i])))
            key = (alignment, -norms[i], i)
            if best is None or key < best[0]:
                best = (key, i, alignment)
        selected.append(best[1])
        values.append(best[2])
    return RankResult(
        ordered_indices=selected,
        values=values,
        method="info_orthogonal",
        k_thresh=k,
    )


def info_orthogonal_select(
    dataset,
    params: ContactParams,
    k: int,
    world: World,
    settings: LossSettings | None = None,
    threads: int = 1,
) -> RankResult:
    scores = score_dataset(dataset, params, world, settings, threads=threads)
    return info_orthogonal_select_from_scores(scores, k)


def random_select(n_dataset: int, k: int, seed: int) -> RankResult:
    """Uniform sample without replacement, reproducible from the seed."""
    if not 1 <= k <= n_dataset:
        raise ValidationError(f"k must be in [1, {n_dataset}]")
    rng = np.random.default_rng(seed)
    picks = rng.choice(n_dataset, size=k, replace=False)
    return RankResult(
        ordered_indices=[int(i) for i in picks],
        values=[0.0] * k,
        method="random",
        k_thresh=k,
    )
