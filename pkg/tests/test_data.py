"""Ingestion, normalization, and split tests.

IDX fixtures are hand-built byte strings via struct.pack, so every
expected value is pinned at the byte level.
"""

import gzip
import struct

import numpy as np
import pytest

from synpil.data import (
    LabeledDataset,
    NormStats,
    RawTable,
    load_csv,
    load_features_csv,
    load_idx,
    load_idx_images,
    load_idx_labels,
    split,
    split_indices,
    to_dataset,
)
from synpil.errors import DataFormatError, DataWarning, DimensionError


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def _idx_images(images: np.ndarray) -> bytes:
    # images: (n, rows, cols) uint8
    n, rows, cols = images.shape
    return struct.pack(">IIII", 0x803, n, rows, cols) + images.tobytes()


def _idx_labels(labels) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", 0x801, labels.size) + labels.tobytes()


class TestNormStats:
    def test_apply_z_scores(self):
        x = np.array([[1.0, 3.0], [10.0, 10.0]])
        stats = NormStats.from_features(x)
        out = stats.apply(x)
        np.testing.assert_allclose(out.mean(axis=1), [0.0, 0.0], atol=1e-12)
        # Constant feature: mean subtracted, no division.
        np.testing.assert_allclose(out[1], [0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(out[0].std(), 1.0, atol=1e-12)

    def test_identity_is_noop(self):
        x = np.array([[1.0, -2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(NormStats.identity(2).apply(x), x)

    def test_length_mismatch_raises(self):
        with pytest.raises(DimensionError):
            NormStats(np.zeros(3), np.ones(2))
        with pytest.raises(DimensionError):
            NormStats.identity(2).apply(np.zeros((3, 4)))


class TestLoadCsv:
    def test_two_row_example(self, tmp_path):
        p = _write(tmp_path, "toy.csv", "1,0,a\n0,1,b\n")
        raw = load_csv(p, label_column=2)
        ds = to_dataset(raw)
        assert ds.n_features == 2
        assert ds.n_samples == 2
        assert ds.n_classes == 2
        assert ds.class_names == ("a", "b")
        np.testing.assert_array_equal(ds.t, [[1.0, 0.0], [0.0, 1.0]])

    def test_negative_label_column(self, tmp_path):
        p = _write(tmp_path, "toy.csv", "1,0,a\n0,1,b\n")
        raw = load_csv(p, label_column=-1)
        assert raw.labels == ("a", "b")
        np.testing.assert_array_equal(raw.features, [[1.0, 0.0], [0.0, 1.0]])

    def test_label_column_by_name(self, tmp_path):
        p = _write(tmp_path, "toy.csv", "f1,target,f2\n1,yes,2\n3,no,4\n")
        raw = load_csv(p, label_column="target", has_header=True)
        assert raw.labels == ("yes", "no")
        np.testing.assert_array_equal(raw.features, [[1.0, 2.0], [3.0, 4.0]])

    def test_unknown_name_raises(self, tmp_path):
        p = _write(tmp_path, "toy.csv", "f1,f2\n1,2\n")
        with pytest.raises(DataFormatError, match="no column named"):
            load_csv(p, label_column="target", has_header=True)

    def test_name_without_header_raises(self, tmp_path):
        p = _write(tmp_path, "toy.csv", "1,2\n")
        with pytest.raises(DataFormatError, match="no header"):
            load_csv(p, label_column="target")

    def test_unparseable_cell_names_position(self, tmp_path):
        p = _write(tmp_path, "bad.csv", "1,2,a\n1,oops,b\n")
        with pytest.raises(DataFormatError, match=r"row 2, column 2.*'oops'"):
            load_csv(p, label_column=2)

    def test_non_finite_cell_rejected(self, tmp_path):
        p = _write(tmp_path, "bad.csv", "1,inf,a\n")
        with pytest.raises(DataFormatError, match="non-finite"):
            load_csv(p, label_column=2)

    def test_ragged_row_names_row(self, tmp_path):
        p = _write(tmp_path, "bad.csv", "1,2,a\n1,b\n")
        with pytest.raises(DataFormatError, match="row 2 has 2 cells"):
            load_csv(p, label_column=2)

    def test_empty_file_raises(self, tmp_path):
        p = _write(tmp_path, "empty.csv", "")
        with pytest.raises(DataFormatError, match="empty"):
            load_csv(p, label_column=0)

    def test_label_column_out_of_range(self, tmp_path):
        p = _write(tmp_path, "toy.csv", "1,2,a\n")
        with pytest.raises(DataFormatError, match="out of range"):
            load_csv(p, label_column=7)


class TestLoadFeaturesCsv:
    def test_transposed_to_columns(self, tmp_path):
        p = _write(tmp_path, "x.csv", "1,2\n3,4\n5,6\n")
        x = load_features_csv(p)
        assert x.shape == (2, 3)
        np.testing.assert_array_equal(x, [[1.0, 3.0, 5.0], [2.0, 4.0, 6.0]])

    def test_parse_error_position(self, tmp_path):
        p = _write(tmp_path, "x.csv", "1,2\n3,oops\n")
        with pytest.raises(DataFormatError, match="row 2, column 2"):
            load_features_csv(p)


class TestToDataset:
    def test_z_scored_train_features(self, tmp_path):
        rng = np.random.default_rng(401)
        rows = ["%f,%f,%s" % (a, b, "xy"[i % 2])
                for i, (a, b) in enumerate(rng.standard_normal((40, 2)) * 5 + 3)]
        p = _write(tmp_path, "t.csv", "\n".join(rows) + "\n")
        ds = to_dataset(load_csv(p, label_column=2))
        assert np.abs(ds.x.mean(axis=1)).max() <= 1e-10
        np.testing.assert_allclose(ds.x.std(axis=1), [1.0, 1.0], atol=1e-10)

    def test_constant_feature_maps_to_zero(self):
        raw = RawTable(
            features=np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]]),
            labels=("a", "b", "a"),
        )
        ds = to_dataset(raw)
        np.testing.assert_array_equal(ds.x[0], [0.0, 0.0, 0.0])

    def test_first_appearance_class_order(self):
        raw = RawTable(
            features=np.ones((4, 1)), labels=("z", "a", "z", "m")
        )
        ds = to_dataset(raw)
        assert ds.class_names == ("z", "a", "m")

    def test_train_stats_reproduce_train_exactly(self):
        rng = np.random.default_rng(409)
        raw = RawTable(
            features=rng.standard_normal((30, 4)),
            labels=tuple("ab"[i % 2] for i in range(30)),
        )
        train = to_dataset(raw)
        again = to_dataset(raw, norm=train.norm_stats)
        np.testing.assert_allclose(again.x, train.x, atol=1e-12)

    def test_unknown_class_at_apply_time(self):
        raw = RawTable(features=np.ones((2, 1)), labels=("a", "q"))
        with pytest.raises(DataFormatError, match=r"unknown class 'q'.*a, b"):
            to_dataset(raw, class_names=("a", "b"))

    def test_one_hot_validity(self):
        raw = RawTable(
            features=np.arange(6.0).reshape(3, 2), labels=("a", "b", "b")
        )
        ds = to_dataset(raw)
        assert np.isin(ds.t, (0.0, 1.0)).all()
        np.testing.assert_array_equal(ds.t.sum(axis=0), np.ones(3))


class TestLoadIdx:
    def test_crafted_two_image_file(self, tmp_path):
        # Two 2x2 images; image 1 has pixel 255 at row 0, col 1, which
        # flattens row-major to feature index 1, sample column 1.
        images = np.zeros((2, 2, 2), dtype=np.uint8)
        images[1, 0, 1] = 255
        img_p = tmp_path / "img.idx"
        img_p.write_bytes(_idx_images(images))
        lab_p = tmp_path / "lab.idx"
        lab_p.write_bytes(_idx_labels([0, 1]))
        ds = load_idx(img_p, lab_p)
        assert ds.x.shape == (4, 2)
        assert ds.x[1, 1] == 1.0
        assert ds.x.sum() == 1.0
        assert ds.class_names[:2] == ("0", "1")
        assert len(ds.class_names) == 10

    def test_all_zero_single_image(self, tmp_path):
        img_p = tmp_path / "img.idx"
        img_p.write_bytes(_idx_images(np.zeros((1, 3, 3), dtype=np.uint8)))
        lab_p = tmp_path / "lab.idx"
        lab_p.write_bytes(_idx_labels([4]))
        ds = load_idx(img_p, lab_p)
        assert ds.x.shape == (9, 1)
        assert not ds.x.any()
        assert ds.t[4, 0] == 1.0

    def test_gzip_transparent(self, tmp_path):
        images = np.full((2, 2, 2), 128, dtype=np.uint8)
        img_p = tmp_path / "img.idx.gz"
        img_p.write_bytes(gzip.compress(_idx_images(images)))
        x = load_idx_images(img_p)
        np.testing.assert_allclose(x, np.full((4, 2), 128 / 255))

    def test_bad_images_magic_offset(self, tmp_path):
        p = tmp_path / "bad.idx"
        p.write_bytes(struct.pack(">IIII", 0x801, 1, 2, 2) + bytes(4))
        with pytest.raises(DataFormatError, match="magic 0x00000801 at byte 0"):
            load_idx_images(p)

    def test_bad_labels_magic(self, tmp_path):
        p = tmp_path / "bad.idx"
        p.write_bytes(struct.pack(">II", 0x803, 1) + bytes(1))
        with pytest.raises(DataFormatError, match="labels magic"):
            load_idx_labels(p)

    def test_truncated_pixels_names_offset(self, tmp_path):
        p = tmp_path / "short.idx"
        p.write_bytes(struct.pack(">IIII", 0x803, 2, 2, 2) + bytes(5))
        with pytest.raises(DataFormatError, match="truncated at byte 21"):
            load_idx_images(p)

    def test_trailing_bytes_rejected(self, tmp_path):
        p = tmp_path / "long.idx"
        p.write_bytes(_idx_images(np.zeros((1, 1, 1), dtype=np.uint8)) + b"x")
        with pytest.raises(DataFormatError, match="trailing data at byte 17"):
            load_idx_images(p)

    def test_count_mismatch(self, tmp_path):
        img_p = tmp_path / "img.idx"
        img_p.write_bytes(_idx_images(np.zeros((2, 1, 1), dtype=np.uint8)))
        lab_p = tmp_path / "lab.idx"
        lab_p.write_bytes(_idx_labels([0, 1, 2]))
        with pytest.raises(DataFormatError, match="2 images but .* 3 labels"):
            load_idx(img_p, lab_p)

    def test_identity_stats_keep_scaling_stable(self, tmp_path):
        img_p = tmp_path / "img.idx"
        img_p.write_bytes(_idx_images(np.full((2, 2, 2), 51, dtype=np.uint8)))
        lab_p = tmp_path / "lab.idx"
        lab_p.write_bytes(_idx_labels([0, 1]))
        ds = load_idx(img_p, lab_p)
        np.testing.assert_array_equal(ds.norm_stats.apply(ds.x), ds.x)


def _balanced_dataset(n_per_class: int, seed: int) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    n = 2 * n_per_class
    labels = np.repeat(np.array([0, 1]), n_per_class)
    t = np.zeros((2, n))
    t[labels, np.arange(n)] = 1.0
    return LabeledDataset(
        x=rng.standard_normal((3, n)),
        t=t,
        class_names=("a", "b"),
        norm_stats=NormStats.identity(3),
    )


class TestSplit:
    def test_balanced_fraction_counts(self):
        ds = _balanced_dataset(50, seed=411)
        train, val = split(ds, fraction=0.2, seed=0)
        assert val.n_samples == 20
        assert train.n_samples == 80
        np.testing.assert_array_equal(val.t.sum(axis=1), [10.0, 10.0])

    def test_same_seed_same_split(self):
        ds = _balanced_dataset(30, seed=419)
        a_train, a_val = split(ds, 0.25, seed=5)
        b_train, b_val = split(ds, 0.25, seed=5)
        np.testing.assert_array_equal(a_train.x, b_train.x)
        np.testing.assert_array_equal(a_val.x, b_val.x)

    def test_union_is_original_multiset(self):
        ds = _balanced_dataset(25, seed=421)
        train, val = split(ds, 0.2, seed=3)
        merged = np.hstack([train.x, val.x])
        assert merged.shape == ds.x.shape
        np.testing.assert_array_equal(
            np.sort(merged, axis=1), np.sort(ds.x, axis=1)
        )

    def test_proportions_within_one_sample(self):
        rng = np.random.default_rng(431)
        labels = rng.integers(0, 3, 90)
        t = np.zeros((3, 90))
        t[labels, np.arange(90)] = 1.0
        ds = LabeledDataset(
            x=rng.standard_normal((2, 90)),
            t=t,
            class_names=("a", "b", "c"),
            norm_stats=NormStats.identity(2),
        )
        _, val = split(ds, 0.3, seed=0)
        for c in range(3):
            n_c = int(t[c].sum())
            got = int(val.t[c].sum())
            assert abs(got - 0.3 * n_c) <= 1.0

    def test_singleton_class_warns_and_stays_in_train(self):
        t = np.zeros((2, 5))
        t[0, :4] = 1.0
        t[1, 4] = 1.0
        ds = LabeledDataset(
            x=np.arange(10.0).reshape(2, 5),
            t=t,
            class_names=("a", "b"),
            norm_stats=NormStats.identity(2),
        )
        with pytest.warns(DataWarning, match="class 1"):
            train, val = split(ds, 0.25, seed=0)
        assert train.t[1].sum() == 1.0
        assert val.t[1].sum() == 0.0

    def test_halves_share_parent_stats(self):
        ds = _balanced_dataset(20, seed=433)
        train, val = split(ds, 0.2, seed=1)
        assert train.norm_stats is ds.norm_stats
        assert val.norm_stats is ds.norm_stats

    def test_bad_fraction_raises(self):
        ds = _balanced_dataset(10, seed=439)
        with pytest.raises(ValueError):
            split(ds, 1.0, seed=0)

    def test_split_indices_sorted(self):
        ds = _balanced_dataset(20, seed=443)
        tr, va = split_indices(ds.t, 0.3, seed=2)
        assert np.all(np.diff(tr) > 0)
        assert np.all(np.diff(va) > 0)
        assert np.intersect1d(tr, va).size == 0
