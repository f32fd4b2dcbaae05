"""
Closed-form count moments, target scaling and the matching loss.
"""
import math

import numpy as np
import pytest

from src.countstats import (
    BlockCountStats,
    CountTarget,
    block_count_stats,
    gaussian_match_loss,
    inter_instance_stats,
    scale_target,
    total_variance_stats,
)
from src.diffcore import Tensor
from src.utils.errors import ConfigError, DataError, MixedGroupError, NonFiniteError, ShapeError

GOLDEN_LOSS = -0.10364655978937294


def _stats(mu: float, var: float, class_id: int = 1, z: int = 0) -> BlockCountStats:
    return BlockCountStats(mu=Tensor(mu), var=Tensor(var), block_size=4, class_id=class_id, low_res_label=z)


class TestBlockCountStats:
    def test_certain_pixels(self):
        stats = block_count_stats(np.ones((2, 2)), class_id=1)
        assert stats.mu.item() == 1.0
        assert stats.var.item() == 0.0

    def test_half_pixels(self):
        stats = block_count_stats(np.full((2, 2), 0.5), class_id=1)
        assert stats.mu.item() == 0.5
        assert stats.var.item() == pytest.approx(0.0625, abs=1e-15)

    def test_main_normalization_divides_once(self):
        p = np.full((2, 2), 0.5)
        assert block_count_stats(p, 1, normalization="per_pixel").var.item() == pytest.approx(0.25)

    def test_class_slice_of_probability_map(self):
        probs = np.stack([np.full((2, 2), 0.75), np.full((2, 2), 0.25)])
        stats = block_count_stats(probs, class_id=0, low_res_label=3)
        assert stats.mu.item() == 0.75
        assert stats.class_id == 0
        assert stats.low_res_label == 3
        assert stats.block_size == 4

    def test_invalid_maps(self):
        with pytest.raises(DataError):
            block_count_stats(np.zeros((0,)), class_id=1)
        with pytest.raises(DataError):
            block_count_stats(np.array([0.5, 1.5]), class_id=1)


class TestInterInstanceStats:
    def test_identical_blocks(self):
        stats = inter_instance_stats([0.3, 0.3, 0.3])
        assert stats.mu.item() == pytest.approx(0.3, abs=1e-15)
        assert stats.var.item() == pytest.approx(0.0, abs=1e-15)

    def test_two_values(self):
        stats = inter_instance_stats([0.2, 0.4])
        assert stats.mu.item() == pytest.approx(0.3, abs=1e-15)
        assert stats.var.item() == pytest.approx(0.01, abs=1e-15)

    def test_matches_two_pass_variance(self):
        values = np.random.default_rng(0).random(15)
        mean = sum(values) / len(values)
        expected = sum((v - mean) ** 2 for v in values) / len(values)
        stats = inter_instance_stats(list(values))
        assert stats.var.item() == pytest.approx(expected, abs=1e-12)
        assert stats.n_blocks == 15

    def test_single_block_is_flagged(self):
        stats = inter_instance_stats([0.4])
        assert stats.single_block
        assert stats.var.item() == 0.0

    def test_empty(self):
        with pytest.raises(DataError):
            inter_instance_stats([])


class TestTotalVarianceStats:
    def test_identical_blocks_keep_block_moments(self):
        stats = total_variance_stats([_stats(0.4, 0.02)] * 3)
        assert stats.mu.item() == pytest.approx(0.4)
        assert stats.var.item() == pytest.approx(0.02)
        assert stats.mode == "total_variance"

    def test_single_block(self):
        stats = total_variance_stats([_stats(0.6, 0.03)])
        assert (stats.mu.item(), stats.var.item()) == pytest.approx((0.6, 0.03))
        assert stats.single_block

    def test_law_of_total_variance(self):
        stats = total_variance_stats([_stats(0.2, 0.01), _stats(0.4, 0.03)])
        assert stats.var.item() == pytest.approx(0.02 + 0.01)

    def test_mixed_labels_rejected(self):
        with pytest.raises(MixedGroupError):
            total_variance_stats([_stats(0.2, 0.01, z=0), _stats(0.2, 0.01, z=1)])
        with pytest.raises(MixedGroupError):
            total_variance_stats([_stats(0.2, 0.01, class_id=0), _stats(0.2, 0.01, class_id=1)])


class TestScaleTarget:
    def test_identity_at_one(self):
        target = CountTarget(eta=0.7, rho=0.05)
        assert scale_target(target) == target

    def test_top_bin_at_point_eight(self):
        scaled = scale_target(CountTarget(eta=0.70, rho=0.05, alpha=0.8))
        assert scaled.rho == pytest.approx(0.04, abs=1e-15)
        assert scaled.eta == 0.70

    def test_zero_rho(self):
        assert scale_target(CountTarget(eta=0.1, rho=0.0, alpha=0.5)).rho == 0.0

    def test_invalid_targets(self):
        with pytest.raises(ConfigError):
            CountTarget(eta=0.5, rho=0.1, alpha=0.0)
        with pytest.raises(ConfigError):
            CountTarget(eta=0.5, rho=0.1, alpha=1.2)
        with pytest.raises(DataError):
            CountTarget(eta=1.5, rho=0.1)
        with pytest.raises(DataError):
            CountTarget(eta=0.5, rho=-0.1)


class TestGaussianMatchLoss:
    def test_golden_value(self):
        loss = gaussian_match_loss(0.5, 0.01, eta=0.7, rho=0.05, var_floor=0.0)
        assert loss.item() == pytest.approx(GOLDEN_LOSS, abs=1e-12)

    def test_matching_mean_leaves_log_term(self):
        loss = gaussian_match_loss(0.3, 0.02, eta=0.3, rho=0.1, var_floor=0.0)
        assert loss.item() == pytest.approx(0.5 * math.log(2 * math.pi * 0.02), abs=1e-12)

    def test_floor_keeps_zero_variance_finite(self):
        loss = gaussian_match_loss(0.3, 0.0, eta=0.3, rho=0.1)
        assert loss.item() == pytest.approx(0.5 * math.log(2 * math.pi * 1e-8), abs=1e-9)

    def test_gradient_flows_to_mu_and_var(self):
        mu = Tensor(0.5, requires_grad=True)
        var = Tensor(0.01, requires_grad=True)
        gaussian_match_loss(mu, var, eta=0.7, rho=0.05, var_floor=0.0).backward()
        # d/dmu = -v (eta - mu) / (rho^2 + v)^2
        assert float(mu.grad) == pytest.approx(-0.01 * 0.2 / 0.0125 ** 2)
        assert var.grad is not None

    def test_rejects_bad_inputs(self):
        with pytest.raises(NonFiniteError):
            gaussian_match_loss(0.5, 0.01, eta=float("nan"), rho=0.05)
        with pytest.raises(DataError):
            gaussian_match_loss(0.5, 0.01, eta=0.5, rho=-0.1)
        with pytest.raises(ShapeError):
            gaussian_match_loss(Tensor([0.5, 0.5]), 0.01, eta=0.5, rho=0.1)

    def test_convolved_golden_value(self):
        loss = gaussian_match_loss(0.5, 0.01, eta=0.7, rho=0.05, var_floor=0.0, form="convolved")
        spread = 0.05 ** 2 + 0.01
        expected = 0.5 * 0.2 ** 2 / spread + 0.5 * math.log(2 * math.pi * spread)
        assert loss.item() == pytest.approx(expected, abs=1e-12)

    def test_variance_weighted_rewards_saturated_predictions(self):
        # a confident wrong count (mu far from eta, var ~ 0) scores below a correct spread-out one
        saturated = gaussian_match_loss(0.0, 0.0, eta=0.7, rho=0.05)
        matched = gaussian_match_loss(0.7, 0.05 ** 2, eta=0.7, rho=0.05)
        assert saturated.item() < matched.item()

    def test_convolved_penalises_saturated_predictions(self):
        saturated = gaussian_match_loss(0.0, 0.0, eta=0.7, rho=0.05, form="convolved")
        matched = gaussian_match_loss(0.7, 0.0, eta=0.7, rho=0.05, form="convolved")
        assert saturated.item() > matched.item() + 50.0

    def test_convolved_is_stationary_at_the_target_mean(self):
        mu = Tensor(0.7, requires_grad=True)
        gaussian_match_loss(mu, 0.01, eta=0.7, rho=0.05, form="convolved").backward()
        assert float(mu.grad) == pytest.approx(0.0, abs=1e-12)
        for off in (0.65, 0.75):
            assert (
                gaussian_match_loss(off, 0.01, eta=0.7, rho=0.05, form="convolved").item()
                > gaussian_match_loss(0.7, 0.01, eta=0.7, rho=0.05, form="convolved").item()
            )

    def test_unknown_form(self):
        with pytest.raises(ConfigError):
            gaussian_match_loss(0.5, 0.01, eta=0.5, rho=0.1, form="kl")
