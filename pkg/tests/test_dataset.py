"""
Dataset generation, record files and regeneration from the manifest.
"""
import numpy as np
import pytest

from src.synthdata.dataset import (
    MANIFEST_NAME,
    block_seeds,
    generate_dataset,
    load_dataset,
    read_manifest,
    read_split,
    regenerate_from_manifest,
    save_dataset,
)
from src.synthdata.labeler import LabelerConfig
from src.utils.errors import DataError


def _assert_same_blocks(left, right):
    assert [b.block_id for b in left] == [b.block_id for b in right]
    for a, b in zip(left, right):
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_array_equal(a.gt_mask, b.gt_mask)
        assert a.true_fraction == b.true_fraction
        assert a.seed == b.seed
        assert a.low_res_label == b.low_res_label


class TestGenerateDataset:
    def test_block_ids_run_over_splits(self, tiny_dataset):
        ids = [b.block_id for b in tiny_dataset]
        assert ids == list(range(76))
        assert [b.block_id for b in tiny_dataset.split("val")] == list(range(60, 68))

    def test_every_block_is_labelled(self, tiny_dataset):
        labels = tiny_dataset.labels("train")
        assert labels.dtype == np.int64
        assert set(labels.tolist()) <= {0, 1}

    def test_same_seed_same_dataset(self, tiny_generator, tiny_dataset, two_bins):
        again = generate_dataset(tiny_generator, LabelerConfig(), two_bins, seed=3)
        for name in ("train", "val", "test"):
            _assert_same_blocks(tiny_dataset.split(name), again.split(name))

    def test_block_seeds(self):
        assert block_seeds(7, 5) == block_seeds(7, 5)
        assert len(set(block_seeds(7, 100))) == 100
        assert block_seeds(7, 0) == []

    def test_unknown_split(self, tiny_dataset):
        with pytest.raises(DataError):
            tiny_dataset.split("holdout")


class TestDatasetFiles:
    def test_round_trip(self, tiny_dataset, tmp_path):
        save_dataset(tiny_dataset, tmp_path)
        loaded = load_dataset(tmp_path)
        assert loaded.config_hash() == tiny_dataset.config_hash()
        for name in ("train", "val", "test"):
            _assert_same_blocks(tiny_dataset.split(name), loaded.split(name))

    def test_load_selected_splits(self, tiny_dataset, tmp_path):
        save_dataset(tiny_dataset, tmp_path)
        assert sorted(load_dataset(tmp_path, splits=["test"]).splits) == ["test"]

    def test_regenerate_is_bit_identical(self, tiny_dataset, tmp_path):
        save_dataset(tiny_dataset, tmp_path)
        rebuilt = regenerate_from_manifest(tmp_path)
        for name in ("train", "val", "test"):
            _assert_same_blocks(tiny_dataset.split(name), rebuilt.split(name))

    def test_same_seed_same_bytes(self, tiny_generator, two_bins, tmp_path):
        for run in ("a", "b"):
            dataset = generate_dataset(tiny_generator, LabelerConfig(), two_bins, seed=8)
            save_dataset(dataset, tmp_path / run)
        for name in (MANIFEST_NAME, "train.bin", "val.bin", "test.bin"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_manifest_records_seeds(self, tiny_dataset, tmp_path):
        save_dataset(tiny_dataset, tmp_path)
        manifest = read_manifest(tmp_path)
        assert manifest["seed"] == 3
        assert manifest["splits"]["test"]["seeds"] == [b.seed for b in tiny_dataset.split("test")]
        assert manifest["header"]["config_hash"] == tiny_dataset.config_hash()

    def test_infinite_threshold_survives_the_manifest(self, tiny_generator, two_bins, tmp_path):
        generator = tiny_generator.model_copy(update={"threshold": float("-inf")})
        dataset = generate_dataset(generator, LabelerConfig(), two_bins, seed=2)
        save_dataset(dataset, tmp_path)

        assert read_manifest(tmp_path)["data"]["threshold"] == float("-inf")
        assert load_dataset(tmp_path).config_hash() == dataset.config_hash()
        rebuilt = regenerate_from_manifest(tmp_path)
        assert all(b.true_fraction == 1.0 for b in rebuilt)
        _assert_same_blocks(dataset.split("train"), rebuilt.split("train"))

    def test_infinite_threshold_changes_the_hash(self, tiny_generator, two_bins):
        infinite_generator = tiny_generator.model_copy(update={"threshold": float("-inf")})
        unset = generate_dataset(tiny_generator, LabelerConfig(), two_bins, seed=2)
        infinite = generate_dataset(infinite_generator, LabelerConfig(), two_bins, seed=2)
        assert unset.config_hash() != infinite.config_hash()

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(tmp_path)

    def test_corrupt_record_files(self, tiny_dataset, tmp_path):
        save_dataset(tiny_dataset, tmp_path)
        path = tmp_path / "val.bin"
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(DataError):
            read_split(path)
        path.write_bytes(b"XXXXXXXX" + raw[8:])
        with pytest.raises(DataError):
            read_split(path)
