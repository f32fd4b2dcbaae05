"""
Count distribution tables: estimation, annotation sampling and table files.
"""
import numpy as np
import pytest
from scipy import stats

from src.countstats import CountTarget, scale_target
from src.synthdata.dataset import generate_dataset
from src.synthdata.generator import GeneratorConfig, SplitSizes
from src.synthdata.labeler import BinScheme, LabelerConfig
from src.synthdata.tables import (
    AnnotatorNoiseConfig,
    CountDistributionTable,
    build_table_mask_estimation,
    build_table_visual_approx,
    draw_annotation_sample,
    load_table,
    reference_table,
    save_table,
)
from src.utils.errors import ConfigError, UnderSampledBinError, UnknownLabelError
from tests.helpers import fraction_block

SIDE = 10


@pytest.fixture
def two_bin_blocks():
    """Bin 0 holds fractions 0.2 and 0.4; bin 1 holds 0.3 twice."""
    return [
        fraction_block(20, SIDE, block_id=0, z=0),
        fraction_block(30, SIDE, block_id=1, z=1),
        fraction_block(40, SIDE, block_id=2, z=0),
        fraction_block(30, SIDE, block_id=3, z=1),
    ]


class TestMaskEstimation:
    def test_shared_fraction_has_no_spread(self, two_bin_blocks, two_bins):
        table = build_table_mask_estimation(two_bin_blocks, bins=two_bins)
        assert table.eta[1, 1] == pytest.approx(0.3, abs=1e-12)
        assert table.rho[1, 1] == pytest.approx(0.0, abs=1e-12)

    def test_two_fractions(self, two_bin_blocks, two_bins):
        table = build_table_mask_estimation(two_bin_blocks, bins=two_bins)
        assert table.eta[0, 1] == pytest.approx(0.3, abs=1e-12)
        assert table.rho[0, 1] == pytest.approx(0.1, abs=1e-12)
        np.testing.assert_array_equal(table.n, [2, 2])
        assert table.provenance == "mask_estimated"

    def test_negative_class_is_complement(self, two_bin_blocks, two_bins):
        table = build_table_mask_estimation(two_bin_blocks, bins=two_bins)
        np.testing.assert_array_equal(table.eta[:, 0], 1.0 - table.eta[:, 1])
        np.testing.assert_array_equal(table.rho[:, 0], table.rho[:, 1])

    def test_cap_takes_lowest_block_ids(self, two_bin_blocks, two_bins):
        extra = fraction_block(90, SIDE, block_id=9, z=0)
        table = build_table_mask_estimation(two_bin_blocks + [extra], per_z_cap=2, bins=two_bins)
        assert table.eta[0, 1] == pytest.approx(0.3, abs=1e-12)

    def test_under_sampled_bin(self, two_bin_blocks, two_bins):
        with pytest.raises(UnderSampledBinError) as info:
            build_table_mask_estimation(two_bin_blocks[:3], bins=two_bins)
        assert info.value.bins == [1]

    def test_cap_below_minimum(self, two_bin_blocks, two_bins):
        with pytest.raises(ConfigError):
            build_table_mask_estimation(two_bin_blocks, per_z_cap=1, bins=two_bins)

    def test_capped_close_to_exhaustive(self, tiny_dataset, two_bins):
        blocks = tiny_dataset.split("train")
        capped = build_table_mask_estimation(blocks, per_z_cap=12, bins=two_bins)
        full = build_table_mask_estimation(blocks, per_z_cap=10 ** 6, bins=two_bins)
        for z in range(two_bins.num_bins):
            tolerance = 3 * full.rho[z, 1] / np.sqrt(capped.n[z])
            assert abs(capped.eta[z, 1] - full.eta[z, 1]) <= tolerance

    def test_positive_eta_rises_with_the_label(self):
        generator = GeneratorConfig(side=16, splits=SplitSizes(train=800, val=0, test=0))
        dataset = generate_dataset(generator, LabelerConfig(), BinScheme(), seed=13)
        eta_pos = build_table_mask_estimation(dataset.split("train")).positive_eta()
        # loose trend, neighbouring bins may swap
        assert stats.spearmanr(np.arange(eta_pos.size), eta_pos).statistic >= 0.8
        assert eta_pos[-1] - eta_pos[0] >= 0.3


class TestVisualApproximation:
    def test_zero_noise_matches_masks(self, tiny_dataset, two_bins):
        blocks = tiny_dataset.split("train")
        quiet = AnnotatorNoiseConfig(additive_std=0.0, multiplicative_std=0.0)
        visual = build_table_visual_approx(blocks, noise=quiet, seed=4, bins=two_bins)
        assert visual.equals(build_table_mask_estimation(blocks, bins=two_bins))

    def test_same_seed_same_table(self, tiny_dataset, two_bins):
        blocks = tiny_dataset.split("train")
        first = build_table_visual_approx(blocks, seed=4, bins=two_bins)
        assert first.equals(build_table_visual_approx(blocks, seed=4, bins=two_bins))
        assert first.provenance == "visual_approx"

    def test_noise_moves_the_estimates(self, tiny_dataset, two_bins):
        blocks = tiny_dataset.split("train")
        visual = build_table_visual_approx(blocks, seed=4, bins=two_bins)
        assert not np.array_equal(visual.eta, build_table_mask_estimation(blocks, bins=two_bins).eta)


class TestAnnotationSample:
    @pytest.fixture
    def ten_bin_blocks(self):
        return [fraction_block(z * 10, SIDE, block_id=z * 25 + i, z=z) for z in range(10) for i in range(25)]

    def test_budget_and_per_bin_bounds(self, ten_bin_blocks):
        sample = draw_annotation_sample(ten_bin_blocks, total=167, per_z_min=12, per_z_cap=20, seed=1)
        assert len(sample) == 167
        counts = np.bincount([b.low_res_label for b in sample], minlength=10)
        assert counts.min() >= 12 and counts.max() <= 20
        assert [b.block_id for b in sample] == sorted(b.block_id for b in sample)

    def test_seeded_selection(self, ten_bin_blocks):
        first = draw_annotation_sample(ten_bin_blocks, seed=2)
        second = draw_annotation_sample(ten_bin_blocks, seed=2)
        assert [b.block_id for b in first] == [b.block_id for b in second]

    def test_thin_bin_gives_what_it_has(self, ten_bin_blocks):
        blocks = [b for b in ten_bin_blocks if b.low_res_label != 3] + [
            fraction_block(30, SIDE, block_id=1000 + i, z=3) for i in range(5)
        ]
        sample = draw_annotation_sample(blocks, seed=0)
        assert sum(b.low_res_label == 3 for b in sample) == 5
        assert len(sample) == 167

    def test_minimum_above_cap(self, ten_bin_blocks):
        with pytest.raises(ConfigError):
            draw_annotation_sample(ten_bin_blocks, per_z_min=21, per_z_cap=20)


class TestReferenceTables:
    def test_main_top_bin(self):
        table = reference_table("expert")
        assert table.eta[9, 1] == pytest.approx(0.70)
        assert table.rho[9, 1] == pytest.approx(0.05)
        assert table.provenance == "reference"

    def test_scaled_top_bin(self):
        target = reference_table("expert").target(9, 1)
        scaled = scale_target(CountTarget(eta=target.eta, rho=target.rho, alpha=0.8))
        assert scaled.rho == pytest.approx(0.04, abs=1e-12)

    @pytest.mark.parametrize("variant", ["expert", "visual", "mask"])
    def test_complement(self, variant):
        table = reference_table(variant)
        np.testing.assert_allclose(table.eta.sum(axis=1), 1.0)
        np.testing.assert_array_equal(table.rho[:, 0], table.rho[:, 1])

    def test_unknown_variant_and_label(self):
        with pytest.raises(ConfigError):
            reference_table("bogus")
        with pytest.raises(UnknownLabelError):
            reference_table().target(10, 1)


class TestTableFiles:
    def test_round_trip(self, two_bin_blocks, two_bins, tmp_path):
        table = build_table_mask_estimation(two_bin_blocks, bins=two_bins)
        path = save_table(table, tmp_path / "table.tsv", cfg_hash="abc123", seed=5)
        assert load_table(path).equals(table)
        assert path.read_text().startswith("# tool=lsrlab")

    def test_floats_survive_bit_for_bit(self, tmp_path):
        third = 1.0 / 3.0
        awkward = 0.1 + 0.2
        table = CountDistributionTable(
            edges=(0.0, third, 1.0),
            eta=[[1.0 - awkward, awkward], [1.0 - 0.7 * third, 0.7 * third]],
            rho=[[0.1 * 3, 0.1 * 3], [third / 7, third / 7]],
            n=[3, 5],
        )
        loaded = load_table(save_table(table, tmp_path / "exact.tsv", cfg_hash="abc123", seed=1))
        assert loaded.edges[1] == third
        assert loaded.eta[0, 1] == awkward
        assert loaded.equals(table)

    def test_reference_round_trip_keeps_variant(self, tmp_path):
        path = save_table(reference_table("visual"), tmp_path / "ref.tsv", cfg_hash="abc123", seed=None)
        loaded = load_table(path)
        assert loaded.equals(reference_table("visual"))
        assert loaded.meta["variant"] == "visual"

    def test_rewrite_is_byte_identical(self, two_bin_blocks, two_bins, tmp_path):
        table = build_table_mask_estimation(two_bin_blocks, bins=two_bins)
        first = save_table(table, tmp_path / "a.tsv", cfg_hash="abc123", seed=5).read_bytes()
        second = save_table(table, tmp_path / "b.tsv", cfg_hash="abc123", seed=5).read_bytes()
        assert first == second
