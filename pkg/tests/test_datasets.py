import os

import numpy as np
import pytest

from oclbench.datasets import (
    Dataset,
    SyntheticClassSpec,
    default_class_specs,
    export_dataset,
    gen_feature_dataset,
    gen_image_dataset,
    load_manifest,
)
from oclbench.errors import ContractError, DataError, FormatError


class TestImageDataset:
    def test_counts(self):
        ds = gen_image_dataset(default_class_specs(2), train_per_class=5, test_per_class=3)
        assert ds.train_x.shape == (10, 32, 32, 3)
        assert ds.train_counts() == {0: 5, 1: 5}
        assert len(ds.test_y) == 6

    def test_deterministic(self):
        a = gen_image_dataset(train_per_class=2, test_per_class=1, seed=4)
        b = gen_image_dataset(train_per_class=2, test_per_class=1, seed=4)
        assert a.train_x.tobytes() == b.train_x.tobytes()
        c = gen_image_dataset(train_per_class=2, test_per_class=1, seed=5)
        assert a.train_x.tobytes() != c.train_x.tobytes()

    def test_pixel_range(self):
        ds = gen_image_dataset(train_per_class=2, test_per_class=1)
        assert ds.train_x.min() >= 0 and ds.train_x.max() <= 1

    def test_needs_two_classes(self):
        with pytest.raises(ContractError):
            gen_image_dataset(default_class_specs(1))

    def test_duplicate_ids(self):
        spec = SyntheticClassSpec(0, "disk", 0.1, 1.0, 0.3)
        with pytest.raises(DataError):
            gen_image_dataset([spec, spec])

    def test_bad_shape(self):
        with pytest.raises(ContractError):
            SyntheticClassSpec(0, "star", 0.1, 1.0, 0.3)

    def test_more_classes_than_shapes_stay_distinct(self):
        specs = default_class_specs(10)
        keys = {(s.shape, round(s.hue, 6), s.texture_freq) for s in specs}
        assert len(keys) == 10


class TestFeatureDataset:
    def test_shapes(self):
        ds = gen_feature_dataset(n_classes=3, dim=4, train_per_class=2, test_per_class=5)
        assert ds.kind == "vectors"
        assert ds.train_x.shape == (6, 4)
        assert ds.test_x.shape == (15, 4)

    def test_anisotropy_spectrum(self):
        ds = gen_feature_dataset(n_classes=1, dim=3, train_per_class=20000, test_per_class=1, anisotropy=100.0)
        eig = np.linalg.eigvalsh(np.cov(ds.train_x.T))
        assert eig.max() / eig.min() == pytest.approx(100.0, rel=0.1)

    def test_rejects_bad_anisotropy(self):
        with pytest.raises(ContractError):
            gen_feature_dataset(anisotropy=0.5)


class TestManifest:
    def test_round_trip_vectors(self, tmp_path):
        ds = gen_feature_dataset(n_classes=2, dim=3, train_per_class=2, test_per_class=1)
        path = export_dataset(ds, str(tmp_path))
        with open(path, "rb") as fh:
            text = fh.read()
        assert b"\r" not in text
        assert text.splitlines()[0] == b"train_00000.oclt,0,train"
        back = load_manifest(path)
        assert back.kind == "vectors"
        np.testing.assert_array_equal(back.train_x, ds.train_x.astype(np.float32))
        np.testing.assert_array_equal(back.test_y, ds.test_y)

    def test_round_trip_maps(self, tmp_path):
        ds = Dataset(np.ones((2, 2, 2, 3)), np.array([0, 1]), np.zeros((1, 2, 2, 3)), np.array([1]), kind="fmaps")
        back = load_manifest(export_dataset(ds, str(tmp_path)))
        assert back.kind == "fmaps"
        assert back.train_x.shape == (2, 2, 2, 3)

    def test_bad_rows(self, tmp_path):
        ds = gen_feature_dataset(n_classes=2, dim=2, train_per_class=1, test_per_class=1)
        path = export_dataset(ds, str(tmp_path))
        with open(path, "a", encoding="utf-8") as fh:
            fh.write("train_00000.oclt,zero,train\n")
        with pytest.raises(DataError):
            load_manifest(path)

    def test_corrupt_record(self, tmp_path):
        ds = gen_feature_dataset(n_classes=2, dim=2, train_per_class=1, test_per_class=1)
        path = export_dataset(ds, str(tmp_path))
        with open(os.path.join(tmp_path, "train_00000.oclt"), "r+b") as fh:
            fh.write(b"XXXX")
        with pytest.raises(FormatError):
            load_manifest(path)
