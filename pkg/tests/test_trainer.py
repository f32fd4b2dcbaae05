"""
RMSprop, batch sampling, the training loop, baselines and the alpha sweep.
"""
import json
from collections import Counter

import numpy as np
import pytest
from pydantic import ValidationError

from src.evalmetrics.evaluate import evaluate_model, evaluate_split
from src.lsrloss import LossMode, batch_loss
from src.segmodel import init_params
from src.synthdata.dataset import generate_dataset
from src.synthdata.generator import GeneratorConfig
from src.synthdata.labeler import BinScheme, LabelerConfig
from src.synthdata.tables import (
    CountDistributionTable,
    build_table_mask_estimation,
    draw_annotation_sample,
    reference_table,
)
from src.trainer import (
    BatchConfig,
    GroupSampler,
    RMSpropState,
    TrainConfig,
    ablate_alpha,
    build_sampler,
    lowres_baseline_masks,
    make_groups,
    rmsprop_step,
    sample_groups,
    train,
    train_supervised_baseline,
)
from src.trainer.ablation import scaled_target_error
from src.trainer.trainer import CHECKPOINT_NAME, RUN_LOG_NAME
from src.utils.errors import (
    ConfigError,
    DataError,
    DivergenceError,
    NoEligibleLabelError,
    NonFiniteError,
    ShapeError,
    UnknownLabelError,
)
from tests.helpers import make_block

QUICK = dict(epochs=1, seed=4)


@pytest.fixture
def train_table(tiny_dataset, two_bins):
    return build_table_mask_estimation(tiny_dataset.split("train"), bins=two_bins)


class TestRMSprop:
    def test_zero_gradient_leaves_params(self, tiny_model_cfg):
        params = init_params(tiny_model_cfg, 0)
        grads = {name: np.zeros(t.shape) for name, t in params.items()}
        updated, state = rmsprop_step(params, grads, RMSpropState.zeros_like(params), lr=0.1)
        assert updated.equals(params)
        assert state.step == 1
        assert all(np.all(v == 0.0) for v in state.square_avg.values())

    def test_constant_gradient_recurrence(self, tiny_model_cfg):
        params = init_params(tiny_model_cfg, 1)
        name = next(iter(params.tensors))
        start = params.tensors[name].values.copy()
        grads = {n: np.ones(t.shape) for n, t in params.items()}
        state = RMSpropState.zeros_like(params)
        lr, decay, eps = 0.01, 0.9, 1e-8

        expected = start.copy()
        avg = 0.0
        for _ in range(5):
            params, state = rmsprop_step(params, grads, state, lr, decay, eps)
            avg = decay * avg + (1.0 - decay)
            expected = expected - lr / (np.sqrt(avg) + eps)
        np.testing.assert_allclose(params.tensors[name].values, expected, rtol=0, atol=1e-14)
        np.testing.assert_allclose(state.square_avg[name], 1.0 - decay ** 5, atol=1e-15)
        assert state.step == 5

    def test_inputs_untouched_and_deterministic(self, tiny_model_cfg):
        params = init_params(tiny_model_cfg, 2)
        before = init_params(tiny_model_cfg, 2)
        rng = np.random.default_rng(0)
        grads = {n: rng.standard_normal(t.shape) for n, t in params.items()}
        state = RMSpropState.zeros_like(params)
        first, _ = rmsprop_step(params, grads, state, lr=1e-3)
        second, _ = rmsprop_step(params, grads, state, lr=1e-3)
        assert first.equals(second)
        assert params.equals(before)
        assert state.step == 0

    def test_invalid_arguments(self, tiny_model_cfg):
        params = init_params(tiny_model_cfg, 0)
        grads = {n: np.zeros(t.shape) for n, t in params.items()}
        state = RMSpropState.zeros_like(params)
        with pytest.raises(ConfigError):
            rmsprop_step(params, grads, state, lr=0.0)
        with pytest.raises(ConfigError):
            rmsprop_step(params, grads, state, lr=1e-3, decay=1.0)
        grads[next(iter(grads))] = np.zeros(7)
        with pytest.raises(ShapeError):
            rmsprop_step(params, grads, state, lr=1e-3)


class TestGroupSampler:
    def test_only_eligible_label_forms_the_group(self):
        labels = [3] * 15 + [1] * 5 + [0] * 4
        batch = sample_groups(labels, "intra_inter", BatchConfig(group_size=15, groups_per_batch=1), np.random.default_rng(0))
        assert len(batch) == 1
        assert sorted(batch[0]) == list(range(15))

    def test_fixed_seed_same_batches(self):
        labels = [0] * 20 + [1] * 30
        cfg = BatchConfig(group_size=5, groups_per_batch=2)
        first = GroupSampler(labels, True, cfg, np.random.default_rng(7))
        second = GroupSampler(labels, True, cfg, np.random.default_rng(7))
        assert [first.sample() for _ in range(5)] == [second.sample() for _ in range(5)]

    def test_groups_are_single_label_without_repeats(self):
        labels = np.repeat([0, 1, 2], [10, 20, 30])
        sampler = GroupSampler(labels, True, BatchConfig(group_size=6, groups_per_batch=3), np.random.default_rng(1))
        for group in sampler.sample():
            assert len(set(group)) == 6
            assert len({int(labels[i]) for i in group}) == 1

    def test_labels_drawn_in_proportion_to_counts(self):
        labels = [0] * 30 + [1] * 15
        sampler = GroupSampler(labels, True, BatchConfig(group_size=15, groups_per_batch=1), np.random.default_rng(2))
        drawn = Counter(labels[sampler.sample()[0][0]] for _ in range(3000))
        assert drawn[0] / 3000 == pytest.approx(2 / 3, abs=0.05)

    def test_no_label_large_enough(self):
        with pytest.raises(NoEligibleLabelError):
            GroupSampler([0] * 5 + [1] * 5, True, BatchConfig(group_size=15), np.random.default_rng(0))

    def test_intra_batches_are_distinct_singletons(self):
        batch = sample_groups([0, 0, 1, 1, 2, 2], "intra", BatchConfig(batch_size=4), np.random.default_rng(3))
        assert all(len(group) == 1 for group in batch)
        assert len({group[0] for group in batch}) == 4

    def test_accepts_blocks(self):
        blocks = [make_block(np.zeros((2, 2)), block_id=i, z=0) for i in range(3)]
        batch = sample_groups(blocks, "inter", BatchConfig(group_size=3, groups_per_batch=1), np.random.default_rng(0))
        assert sorted(batch[0]) == [0, 1, 2]

    def test_empty_split(self):
        with pytest.raises(DataError):
            GroupSampler([], False, BatchConfig(), np.random.default_rng(0))


class TestTrainConfig:
    def test_default_learning_rates(self):
        assert TrainConfig(mode="intra").effective_learning_rate == 3e-4
        assert TrainConfig(mode="inter").effective_learning_rate == 1e-3
        assert TrainConfig(mode="intra_inter", learning_rate=0.05).effective_learning_rate == 0.05

    def test_group_size_below_minimum(self):
        with pytest.raises(ValidationError):
            TrainConfig(group_size=1, min_group_size=2)

    def test_alpha_range(self):
        with pytest.raises(ValidationError):
            TrainConfig(alpha=0.0)

    def test_loss_form_reaches_the_loss_options(self):
        assert TrainConfig().loss_options.form == "convolved"
        assert TrainConfig(loss_form="variance_weighted").loss_options.form == "variance_weighted"
        with pytest.raises(ValidationError):
            TrainConfig(loss_form="kl")

    def test_supervised_has_no_lsr_loss(self):
        with pytest.raises(ConfigError):
            TrainConfig(mode="supervised").loss_mode


class TestTrain:
    def test_zero_epochs_returns_initial_params(self, tiny_dataset, train_table, tiny_model_cfg):
        params, log = train(TrainConfig(epochs=0, seed=6), tiny_dataset, train_table, tiny_model_cfg)
        assert params.equals(init_params(tiny_model_cfg, 6))
        assert log.steps == []
        assert log.evals == []

    def test_same_seed_same_run(self, tiny_dataset, train_table, tiny_model_cfg):
        config = TrainConfig(mode="intra_inter", alpha=0.8, **QUICK)
        first_params, first_log = train(config, tiny_dataset, train_table, tiny_model_cfg)
        second_params, second_log = train(config, tiny_dataset, train_table, tiny_model_cfg)
        assert first_params.equals(second_params)
        assert list(first_log.records()) == list(second_log.records())
        assert len(first_log.steps) == config.steps_per_epoch(60)
        assert all(np.isfinite(first_log.losses))

    @pytest.mark.parametrize("mode", ["intra", "inter", "intra_inter"])
    def test_first_logged_loss_is_the_first_batch_at_init(self, tiny_dataset, train_table, tiny_model_cfg, mode):
        config = TrainConfig(mode=mode, **QUICK)
        _, log = train(config, tiny_dataset, train_table, tiny_model_cfg)

        blocks = tiny_dataset.split("train")
        first_batch = build_sampler(config, blocks).sample()
        groups = make_groups(init_params(tiny_model_cfg, config.seed), blocks, first_batch)
        expected = batch_loss(groups, config.loss_mode, train_table, config.loss_options)
        assert log.steps[0]["step"] == 0
        assert log.steps[0]["loss"] == expected.item()

    def test_writes_checkpoint_and_log(self, tiny_dataset, train_table, tiny_model_cfg, tmp_path):
        config = TrainConfig(mode="intra", batch_size=20, **QUICK)
        for run in ("a", "b"):
            train(config, tiny_dataset, train_table, tiny_model_cfg, out_dir=tmp_path / run)
        for name in (CHECKPOINT_NAME, RUN_LOG_NAME):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

        records = [json.loads(line) for line in (tmp_path / "a" / RUN_LOG_NAME).read_text().splitlines()]
        assert records[0]["type"] == "header"
        assert records[0]["kind"] == "intra"
        assert [r["type"] for r in records].count("step") == 3
        assert records[-1]["type"] == "final"

    def test_table_must_cover_labels(self, tiny_dataset, tiny_model_cfg):
        one_bin = CountDistributionTable(edges=(0.0, 1.0), eta=[[0.5, 0.5]], rho=[[0.1, 0.1]], n=[0])
        with pytest.raises(UnknownLabelError):
            train(TrainConfig(**QUICK), tiny_dataset, one_bin, tiny_model_cfg)

    def test_model_must_fit_blocks(self, tiny_dataset, train_table, tiny_model_cfg):
        wrong = tiny_model_cfg.model_copy(update={"input_side": 16})
        with pytest.raises(ConfigError):
            train(TrainConfig(**QUICK), tiny_dataset, train_table, wrong)

    def test_non_finite_loss_is_divergence(self, tiny_dataset, train_table, tiny_model_cfg, mocker):
        mocker.patch("src.trainer.trainer.batch_loss", side_effect=NonFiniteError("loss is nan"))
        with pytest.raises(DivergenceError):
            train(TrainConfig(**QUICK), tiny_dataset, train_table, tiny_model_cfg)


class TestBaselines:
    def test_supervised_loss_decreases(self, tiny_dataset, tiny_model_cfg):
        blocks = tiny_dataset.split("val")
        config = TrainConfig(epochs=10, batch_size=len(blocks), seed=1)
        _, log = train_supervised_baseline(config, blocks, tiny_model_cfg)
        assert len(log.losses) == 10
        assert log.losses[-1] < log.losses[0]
        assert log.header["kind"] == "supervised"

    def test_supervised_needs_blocks(self, tiny_model_cfg):
        with pytest.raises(DataError):
            train_supervised_baseline(TrainConfig(), [], tiny_model_cfg)

    def test_lowres_masks_follow_table(self):
        table = reference_table("expert")
        blocks = [make_block(np.zeros((4, 4)), block_id=0, z=9), make_block(np.zeros((4, 4)), block_id=1, z=3)]
        top, low = lowres_baseline_masks(blocks, table)
        assert np.all(top == 1)
        assert np.all(low == 0)

    def test_lowres_unknown_label(self):
        table = CountDistributionTable(edges=(0.0, 1.0), eta=[[0.5, 0.5]], rho=[[0.1, 0.1]], n=[0])
        with pytest.raises(UnknownLabelError):
            lowres_baseline_masks([make_block(np.zeros((2, 2)), z=1)], table)


class TestAlphaSweep:
    def test_combined_loss_matches_scaled_std_exactly(self):
        for variant, alpha in (("expert", 0.8), ("visual", 0.2), ("mask", 0.5)):
            mode = LossMode(name="intra_inter", alpha=alpha)
            assert scaled_target_error(reference_table(variant), mode) == 0.0

    def test_unscaled_inter_target_is_detected(self):
        table = reference_table("expert")
        error = scaled_target_error(table, LossMode(name="inter", alpha=0.5))
        assert error == pytest.approx(0.5 * float(np.max(table.rho)))

    def test_single_alpha_matches_plain_run(self, tiny_dataset, train_table, tiny_model_cfg):
        base = TrainConfig(**QUICK)
        sweep = ablate_alpha(base, [1.0], tiny_dataset, train_table, tiny_model_cfg)
        params, _ = train(base.model_copy(update={"alpha": 1.0}), tiny_dataset, train_table, tiny_model_cfg)
        expected = evaluate_model(params, tiny_dataset.split("test"))
        assert sweep.split == "test"
        assert sweep.rows["masked_iou"].iloc[0] == expected.masked_iou
        assert sweep.rows["rho_scale_error"].iloc[0] == 0.0
        assert sweep.best_alpha == 1.0
        assert sweep.wide().shape == (2, 1)

    def test_invalid_sweeps(self, tiny_dataset, train_table, tiny_model_cfg):
        with pytest.raises(ConfigError):
            ablate_alpha(TrainConfig(**QUICK), [], tiny_dataset, train_table, tiny_model_cfg)
        with pytest.raises(ConfigError):
            ablate_alpha(TrainConfig(**QUICK), [0.5, 1.5], tiny_dataset, train_table, tiny_model_cfg)


@pytest.mark.slow
class TestModeOrdering:
    """Default dataset, annotation-sample mask table, three seeds per mode."""

    @pytest.fixture(scope="class")
    def default_data(self):
        bins = BinScheme()
        dataset = generate_dataset(GeneratorConfig(), LabelerConfig(), bins, seed=7)
        sample = draw_annotation_sample(dataset.split("train"), seed=7)
        return dataset, build_table_mask_estimation(sample, per_z_cap=20, bins=bins)

    def test_combined_beats_intra_beats_lowres(self, default_data):
        dataset, table = default_data
        test_blocks = dataset.split("test")
        lowres = evaluate_split(test_blocks, lowres_baseline_masks(test_blocks, table)).masked_iou

        medians = {}
        for mode in ("intra", "intra_inter"):
            scores = [train(TrainConfig(mode=mode, seed=seed), dataset, table)[1].final["masked_iou"] for seed in (1, 2, 3)]
            medians[mode] = float(np.median(scores))

        assert medians["intra_inter"] >= medians["intra"] >= lowres
        assert medians["intra_inter"] - lowres >= 0.01
