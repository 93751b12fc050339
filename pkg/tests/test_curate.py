import numpy as np
import pytest

from cafim.curate import (
    info_orthogonal_select_from_scores,
    rank,
    rank_from_scores,
    random_select,
)
from cafim.errors import ValidationError
from cafim.fisher import effective_condition_number, empirical_fim
from cafim.loss import ScoreVector

from util import CUBE, WORLD, contact_rich_toss, free_flight_toss


def _sv(*components):
    return ScoreVector(g=np.array(components, dtype=float))


def test_rank_sorts_descending_with_index_ties():
    scores = [_sv(1.0, 0.0), _sv(2.0, 0.0), _sv(1.0, 0.0), _sv(0.0, 0.0)]
    result = rank_from_scores(scores, "trace", 4)
    assert result.ordered_indices == [1, 0, 2, 3]
    assert result.values == sorted(result.values, reverse=True)
    assert result.phi_fallback is None


def test_rank_full_permutation_and_prefix_consistency():
    rng = np.random.default_rng(0)
    scores = [ScoreVector(g=rng.normal(size=5)) for _ in range(9)]
    full = rank_from_scores(scores, "trace", 9)
    assert sorted(full.ordered_indices) == list(range(9))
    top3 = rank_from_scores(scores, "trace", 3)
    assert top3.ordered_indices == full.ordered_indices[:3]


def test_rank_determinant_family_falls_back_to_trace():
    rng = np.random.default_rng(1)
    scores = [ScoreVector(g=rng.normal(size=5)) for _ in range(6)]
    base = rank_from_scores(scores, "trace", 6)
    for phi in ("det", "logdet", "mineig"):
        result = rank_from_scores(scores, phi, 6)
        assert result.phi_fallback == "trace"
        assert result.ordered_indices == base.ordered_indices


def test_rank_scale_invariance():
    rng = np.random.default_rng(2)
    scores = [rng.normal(size=6) for _ in range(8)]
    scaled = [7.3 * g for g in scores]
    for phi in ("trace", "det", "logdet", "mineig"):
        a = rank_from_scores(scores, phi, 8).ordered_indices
        b = rank_from_scores(scaled, phi, 8).ordered_indices
        assert a == b


def test_rank_on_real_dataset_puts_free_flight_last():
    rng = np.random.default_rng(3)
    dataset = [
        contact_rich_toss(rng, steps=60, traj_id="a"),
        free_flight_toss(rng, steps=40, traj_id="b"),
        contact_rich_toss(rng, steps=60, traj_id="c"),
    ]
    result = rank(dataset, CUBE, "trace", 3, WORLD)
    assert result.ordered_indices[-1] == 1
    assert result.values[-1] == 0.0


def test_rank_validation():
    with pytest.raises(ValidationError):
        rank_from_scores([], "trace", 1)
    with pytest.raises(ValidationError):
        rank_from_scores([_sv(1.0)], "trace", 2)


def test_info_orthogonal_by_inspection():
    n = np.linalg.norm([0.9, 0.1])
    scores = [_sv(1.0, 0.0), _sv(0.9 / n, 0.1 / n), _sv(0.0, 1.0)]
    result = info_orthogonal_select_from_scores(scores, 2)
    assert result.ordered_indices == [0, 2]


def test_info_orthogonal_parallel_scores_fall_back_to_norms():
    scores = [_sv(1.0, 0.0), _sv(3.0, 0.0), _sv(2.0, 0.0)]
    result = info_orthogonal_select_from_scores(scores, 3)
    assert result.ordered_indices == [1, 2, 0]


def test_info_orthogonal_prefers_orthogonal_set():
    # mutually orthogonal scores are exhausted before any dependent one
    scores = [
        _sv(2.0, 0.0, 0.0),
        _sv(1.9, 0.1, 0.0),
        _sv(0.0, 1.5, 0.0),
        _sv(0.0, 0.0, 1.0),
    ]
    result = info_orthogonal_select_from_scores(scores, 3)
    assert set(result.ordered_indices) == {0, 2, 3}


def test_info_orthogonal_defers_zero_scores():
    scores = [_sv(0.0, 0.0), _sv(1.0, 0.0), _sv(0.0, 0.0), _sv(0.0, 1.0)]
    result = info_orthogonal_select_from_scores(scores, 4)
    assert result.ordered_indices[:2] == [1, 3]
    assert set(result.ordered_indices[2:]) == {0, 2}


def test_two_family_condition_number_advantage():
    rng = np.random.default_rng(4)
    fam_a = [np.array([1.0, 0.02 * rng.normal(), 0.0]) * rng.uniform(1.5, 2.0) for _ in range(6)]
    fam_b = [np.array([0.02 * rng.normal(), 1.0, 0.0]) * rng.uniform(0.5, 0.9) for _ in range(6)]
    scores = fam_a + fam_b
    orth = info_orthogonal_select_from_scores(scores, 2)
    traced = rank_from_scores(scores, "trace", 2)
    f_orth = empirical_fim([scores[i] for i in orth.ordered_indices], "mean")
    f_trace = empirical_fim([scores[i] for i in traced.ordered_indices], "mean")
    assert effective_condition_number(f_orth, 2) < effective_condition_number(f_trace, 2)


def test_random_select_contracts():
    perm = random_select(10, 10, seed=0)
    assert sorted(perm.ordered_indices) == list(range(10))
    again = random_select(10, 10, seed=0)
    assert perm.ordered_indices == again.ordered_indices

    picks = [tuple(random_select(50, 10, seed=s).ordered_indices) for s in range(10)]
    assert len(set(picks)) == 10
    with pytest.raises(ValidationError):
        random_select(5, 6, seed=0)
