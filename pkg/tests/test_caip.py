import math
import numpy as np
import pytest
import torch
from lanet.config import CaipConfig
from lanet.core.domain.geometry import EdgeList
from lanet.core.model.caip import (
    CaipModule,
    caip_edge_features,
    hard_mask,
    score_edges,
    soft_weight,
    soft_weights,
)
from lanet.core.nn.gradcheck import grad_check
from lanet.core.nn.layers import zero_module
from lanet.errors import InvalidArgumentError


@pytest.fixture
def caip():
    return CaipModule(CaipConfig(scorer_hidden=(4,))).double()


def _random_edges(rng, n_edges, n_queries) -> EdgeList:
    rel = np.column_stack(
        [
            rng.uniform(0, 50, n_edges),
            rng.uniform(-math.pi, math.pi, n_edges),
            rng.uniform(-math.pi, math.pi, n_edges),
            np.zeros(n_edges),
        ]
    )
    return EdgeList(rng.integers(0, 10, n_edges), rng.integers(0, n_queries, n_edges), rel)


def test_zero_scorer_gives_one_half(caip, rng):
    zero_module(caip.scorer)
    s = score_edges(caip, caip_edge_features(_random_edges(rng, 12, 3).rel))
    torch.testing.assert_close(s, torch.full((12,), 0.5, dtype=torch.float64), atol=0, rtol=0)


def test_scores_lie_strictly_inside_unit_interval(caip):
    s = caip.score_edges(torch.randn(200, 5, dtype=torch.float64))
    assert bool(((s > 0) & (s < 1)).all())


def test_score_width_mismatch(caip):
    with pytest.raises(InvalidArgumentError):
        caip.score_edges(torch.randn(4, 6, dtype=torch.float64))


def test_heading_alignment_feature():
    feats = caip_edge_features(np.array([[3.0, math.pi, 0.0, 0.0]]))
    torch.testing.assert_close(feats[0], torch.tensor([3.0, -1.0, 0.0, 1.0, 0.0], dtype=torch.float64), atol=1e-12, rtol=0)


def test_hard_mask_extremes(caip):
    s = caip.score_edges(torch.randn(50, 5, dtype=torch.float64))
    assert bool(hard_mask(s, 1e-12).all())
    assert not bool(hard_mask(s, 1.0 - 1e-12).any())


def test_hard_mask_does_not_track_theta_gradient(caip):
    s = caip.score_edges(torch.randn(5, 5, dtype=torch.float64))
    mask = hard_mask(s, caip.theta)
    assert mask.dtype == torch.bool
    assert not mask.requires_grad


@pytest.mark.parametrize("sign", [1, -1])
@pytest.mark.parametrize("theta, tau", [(0.2, 0.05), (0.9, 3.0)])
def test_equal_scores_split_evenly(sign, theta, tau):
    w = soft_weights(torch.tensor([0.4, 0.4], dtype=torch.float64), torch.tensor([0, 0]), theta, tau, sign)
    torch.testing.assert_close(w, torch.tensor([0.5, 0.5], dtype=torch.float64), atol=1e-12, rtol=0)


def test_singleton_weight_is_one():
    w = soft_weights(torch.tensor([0.73], dtype=torch.float64), torch.tensor([0]), 0.5, 0.1)
    assert w.item() == 1.0


def test_small_temperature_concentrates_on_best_edge():
    scores = torch.tensor([0.55, 0.62, 0.91], dtype=torch.float64)
    values = torch.ones(3, 2, dtype=torch.float64)
    out = soft_weight(values, scores, torch.zeros(3, dtype=torch.long), 0.7, 1e-4)
    torch.testing.assert_close(out[:, 0], torch.tensor([0.0, 0.0, 1.0], dtype=torch.float64), atol=1e-6, rtol=0)


def test_flipped_sign_concentrates_on_worst_edge():
    scores = torch.tensor([0.55, 0.62, 0.91], dtype=torch.float64)
    w = soft_weights(scores, torch.zeros(3, dtype=torch.long), 0.7, 1e-4, sign=-1)
    torch.testing.assert_close(w, torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64), atol=1e-6, rtol=0)


def test_weights_normalise_per_query(rng):
    scores = torch.as_tensor(rng.uniform(0, 1, 30))
    index = torch.as_tensor(rng.integers(0, 4, 30))
    w = soft_weights(scores, index, 0.5, 0.2, num_nodes=4)
    totals = torch.zeros(4, dtype=torch.float64).index_add_(0, index, w)
    present = torch.unique(index)
    torch.testing.assert_close(totals[present], torch.ones(len(present), dtype=torch.float64), atol=1e-12, rtol=0)


def test_non_positive_temperature():
    with pytest.raises(InvalidArgumentError):
        soft_weights(torch.tensor([0.5]), torch.tensor([0]), 0.5, 0.0)


def test_initial_threshold_and_temperature():
    module = CaipModule(CaipConfig(threshold_init=0.3, temperature_init=0.25, learn_temperature=False))
    assert module.theta.item() == pytest.approx(0.3)
    assert module.tau.item() == pytest.approx(0.25)
    names = {n for n, _ in module.named_parameters()}
    assert "threshold_logit" in names and "log_tau" not in names


def test_prune_keeps_only_edges_above_threshold(caip, rng):
    edges = _random_edges(rng, 40, 5)
    pruned = caip.prune(edges, num_queries=5, threshold=0.5)
    scores = pruned.all_scores.detach().numpy()
    for q in range(5):
        rows = np.flatnonzero(edges.targets == q)
        if not len(rows):
            continue
        above = rows[scores[rows] >= 0.5]
        expected = above if len(above) else rows[[np.argmax(scores[rows])]]
        np.testing.assert_array_equal(np.flatnonzero(pruned.valid_mask & (edges.targets == q)), np.sort(expected))
    assert pruned.num_candidates == 40
    assert pruned.num_kept == len(pruned.kept_edges) == len(pruned.soft_weights)


def test_no_query_is_starved(caip, rng):
    edges = _random_edges(rng, 25, 6)
    pruned = caip.prune(edges, num_queries=6, threshold=1.0 - 1e-9)
    assert set(pruned.kept_edges.targets.tolist()) == set(edges.targets.tolist())
    np.testing.assert_allclose(pruned.soft_weights.detach().numpy(), 1.0)


def test_kept_sets_shrink_as_threshold_rises(caip, rng):
    edges = _random_edges(rng, 60, 4)
    previous = None
    for theta in np.linspace(0.0, 1.0, 21):
        mask = caip.prune(edges, num_queries=4, threshold=float(theta)).valid_mask
        if previous is not None:
            assert not np.any(mask & ~previous)
        previous = mask


def test_threshold_and_scorer_receive_gradients(caip, rng):
    edges = _random_edges(rng, 30, 2)
    pruned = caip.prune(edges, num_queries=2)
    values = torch.randn(len(pruned.kept_edges), dtype=torch.float64)
    (pruned.soft_weights * values).sum().backward()
    assert caip.threshold_logit.grad is not None
    assert caip.log_tau.grad is not None
    assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in caip.scorer.parameters())


def test_threshold_and_temperature_gradients_match_finite_differences(caip, rng):
    rel = np.column_stack([rng.uniform(0, 5, 30), rng.uniform(-math.pi, math.pi, (30, 2)), np.zeros(30)])
    edges = EdgeList(rng.integers(0, 10, 30), np.arange(30) % 2, rel)
    with torch.no_grad():
        caip.threshold_logit.fill_(-6.0)
    values = torch.as_tensor(rng.normal(size=30))

    def downstream():
        pruned = caip.prune(edges, num_queries=2)
        return (pruned.soft_weights * values[torch.as_tensor(np.flatnonzero(pruned.valid_mask))]).sum()

    kept = caip.prune(edges, num_queries=2).kept_edges
    assert np.bincount(kept.targets, minlength=2).min() >= 2

    downstream().backward()
    assert caip.threshold_logit.grad.abs().item() > 0
    assert caip.log_tau.grad.abs().item() > 0

    report = grad_check(downstream, {"threshold_logit": caip.threshold_logit, "log_tau": caip.log_tau})
    assert report.ok, report.failures


def test_prune_without_candidates(caip):
    pruned = caip.prune(EdgeList.empty(), num_queries=3)
    assert pruned.num_candidates == 0
    assert pruned.kept_fraction == 1.0
    assert len(pruned.kept_edges) == 0
