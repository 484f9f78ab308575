"""Dataset ingestion, label encoding, normalization, and splits.

Datasets are held column-per-sample: x is d x N features and t is c x N
one-hot targets. Tabular (CSV) features are z-scored with statistics
computed on the training table only; image (IDX) pixels are scaled into
[0, 1]. Whatever transform was used is stored in the dataset's NormStats
so the exact same preprocessing can be replayed at predict time.
"""

import csv
import gzip
import math
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, DataWarning, DimensionError
from .linalg import as_matrix

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class NormStats:
    """Per-feature mean and standard deviation from the training data."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).ravel()
        std = np.asarray(self.std, dtype=np.float64).ravel()
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        if mean.size != std.size:
            raise DimensionError(
                f"mean has {mean.size} entries but std has {std.size}"
            )
        if mean.size == 0:
            raise DimensionError("normalization statistics are empty")

    @classmethod
    def identity(cls, d: int) -> "NormStats":
        return cls(np.zeros(d), np.ones(d))

    @classmethod
    def from_features(cls, x) -> "NormStats":
        x = as_matrix(x, "x")
        return cls(x.mean(axis=1), x.std(axis=1))

    def apply(self, x) -> np.ndarray:
        """Z-score the columns; zero-variance features only lose the mean."""
        x = as_matrix(x, "x")
        if x.shape[0] != self.mean.size:
            raise DimensionError(
                f"input has {x.shape[0]} features but stats cover {self.mean.size}"
            )
        scale = np.where(self.std == 0.0, 1.0, self.std)
        return (x - self.mean[:, None]) / scale[:, None]


@dataclass(frozen=True)
class RawTable:
    """Row-per-sample feature table with string labels, as read from disk."""

    features: np.ndarray
    labels: tuple[str, ...]


@dataclass(frozen=True)
class LabeledDataset:
    """Normalized column-per-sample dataset with one-hot targets."""

    x: np.ndarray
    t: np.ndarray
    class_names: tuple[str, ...]
    norm_stats: NormStats

    def __post_init__(self):
        x = as_matrix(self.x, "x")
        t = as_matrix(self.t, "t")
        if x.shape[1] != t.shape[1]:
            raise DimensionError(
                f"x has {x.shape[1]} samples but t has {t.shape[1]}"
            )
        if not np.isin(t, (0.0, 1.0)).all() or not (t.sum(axis=0) == 1.0).all():
            raise DimensionError("t must be one-hot with exactly one 1 per column")
        if len(self.class_names) != t.shape[0]:
            raise DimensionError(
                f"{len(self.class_names)} class names for {t.shape[0]} target rows"
            )
        if self.norm_stats.mean.size != x.shape[0]:
            raise DimensionError(
                f"stats cover {self.norm_stats.mean.size} features "
                f"but x has {x.shape[0]}"
            )

    @property
    def n_features(self) -> int:
        return self.x.shape[0]

    @property
    def n_samples(self) -> int:
        return self.x.shape[1]

    @property
    def n_classes(self) -> int:
        return self.t.shape[0]


def _parse_cell(cell: str, path, row_no: int, col_no: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise DataFormatError(
            f"{path}: row {row_no}, column {col_no}: "
            f"cannot parse {cell!r} as a number"
        ) from None
    if not math.isfinite(v):
        raise DataFormatError(
            f"{path}: row {row_no}, column {col_no}: non-finite value {cell!r}"
        )
    return v


def _read_csv_rows(path, has_header: bool):
    with open(path, newline="", encoding="utf-8") as f:
        rows = [(i + 1, row) for i, row in enumerate(csv.reader(f)) if row]
    if not rows:
        raise DataFormatError(f"{path}: file is empty")
    header = None
    if has_header:
        header = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
        if not rows:
            raise DataFormatError(f"{path}: no data rows after the header")
    return header, rows


def load_csv(path, label_column, has_header: bool = False) -> RawTable:
    """Read a delimited table; one row per sample, one column the label.

    label_column is a 0-based index (negative counts from the end) or,
    when has_header is set, a column name. Parse errors report the
    1-based row and column of the offending cell.
    """
    header, rows = _read_csv_rows(path, has_header)
    n_cols = len(rows[0][1])
    if isinstance(label_column, str):
        if header is None:
            raise DataFormatError(
                f"{path}: label column {label_column!r} given by name "
                "but the file has no header"
            )
        try:
            label_idx = header.index(label_column)
        except ValueError:
            raise DataFormatError(
                f"{path}: no column named {label_column!r}; "
                f"header has {', '.join(header)}"
            ) from None
    else:
        label_idx = label_column if label_column >= 0 else n_cols + label_column
        if not 0 <= label_idx < n_cols:
            raise DataFormatError(
                f"{path}: label column {label_column} out of range "
                f"for {n_cols} columns"
            )
    if n_cols < 2:
        raise DataFormatError(f"{path}: need at least one feature column")
    features = np.empty((len(rows), n_cols - 1))
    labels = []
    for i, (row_no, row) in enumerate(rows):
        if len(row) != n_cols:
            raise DataFormatError(
                f"{path}: row {row_no} has {len(row)} cells, expected {n_cols}"
            )
        labels.append(row[label_idx].strip())
        k = 0
        for j, cell in enumerate(row):
            if j == label_idx:
                continue
            features[i, k] = _parse_cell(cell, path, row_no, j + 1)
            k += 1
    return RawTable(features=features, labels=tuple(labels))


def load_features_csv(path, has_header: bool = False) -> np.ndarray:
    """Feature-only delimited file (no label column) as a d x N matrix."""
    _, rows = _read_csv_rows(path, has_header)
    n_cols = len(rows[0][1])
    features = np.empty((len(rows), n_cols))
    for i, (row_no, row) in enumerate(rows):
        if len(row) != n_cols:
            raise DataFormatError(
                f"{path}: row {row_no} has {len(row)} cells, expected {n_cols}"
            )
        for j, cell in enumerate(row):
            features[i, j] = _parse_cell(cell, path, row_no, j + 1)
    return features.T


def to_dataset(raw: RawTable, norm=None, class_names=None) -> LabeledDataset:
    """Turn a raw table into a normalized column-per-sample dataset.

    Without class_names, classes get indices in first-appearance order.
    Without norm, z-score statistics are computed from this table; pass
    the training stats instead at test or predict time.
    """
    feats = as_matrix(raw.features, "features")
    if len(raw.labels) != feats.shape[0]:
        raise DimensionError(
            f"{feats.shape[0]} feature rows but {len(raw.labels)} labels"
        )
    if class_names is None:
        names = list(dict.fromkeys(raw.labels))
    else:
        names = list(class_names)
    index = {name: i for i, name in enumerate(names)}
    for i, lab in enumerate(raw.labels):
        if lab not in index:
            raise DataFormatError(
                f"unknown class {lab!r} at sample {i + 1}; "
                f"known classes: {', '.join(names)}"
            )
    cols = np.array([index[lab] for lab in raw.labels])
    t = np.zeros((len(names), len(raw.labels)))
    t[cols, np.arange(len(raw.labels))] = 1.0
    x = feats.T.copy()
    stats = norm if norm is not None else NormStats.from_features(x)
    return LabeledDataset(
        x=stats.apply(x), t=t, class_names=tuple(names), norm_stats=stats
    )


def _open_binary(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(f, n: int, path, offset: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise DataFormatError(
            f"{path}: truncated at byte {offset + len(buf)}; "
            f"expected {n - len(buf)} more byte(s)"
        )
    return buf


def load_idx_images(path) -> np.ndarray:
    """Big-endian images file as a d x N matrix scaled into [0, 1]."""
    with _open_binary(path) as f:
        (magic,) = struct.unpack(">I", _read_exact(f, 4, path, 0))
        if magic != IDX_IMAGES_MAGIC:
            raise DataFormatError(
                f"{path}: bad images magic 0x{magic:08x} at byte 0, "
                f"expected 0x{IDX_IMAGES_MAGIC:08x}"
            )
        n, rows, cols = struct.unpack(">III", _read_exact(f, 12, path, 4))
        if n == 0 or rows == 0 or cols == 0:
            raise DataFormatError(
                f"{path}: empty image set ({n} images of {rows}x{cols})"
            )
        want = n * rows * cols
        pixels = np.frombuffer(_read_exact(f, want, path, 16), dtype=np.uint8)
        if f.read(1):
            raise DataFormatError(f"{path}: trailing data at byte {16 + want}")
    return pixels.reshape(n, rows * cols).T.astype(np.float64) / 255.0


def load_idx_labels(path) -> np.ndarray:
    """Big-endian labels file as an integer vector."""
    with _open_binary(path) as f:
        (magic,) = struct.unpack(">I", _read_exact(f, 4, path, 0))
        if magic != IDX_LABELS_MAGIC:
            raise DataFormatError(
                f"{path}: bad labels magic 0x{magic:08x} at byte 0, "
                f"expected 0x{IDX_LABELS_MAGIC:08x}"
            )
        (n,) = struct.unpack(">I", _read_exact(f, 4, path, 4))
        if n == 0:
            raise DataFormatError(f"{path}: empty label set")
        labels = np.frombuffer(_read_exact(f, n, path, 8), dtype=np.uint8)
        if f.read(1):
            raise DataFormatError(f"{path}: trailing data at byte {8 + n}")
    return labels.astype(np.int64)


def load_idx(images_path, labels_path) -> LabeledDataset:
    """MNIST-style paired images + labels files.

    Pixels are divided by 255, and the stored normalization is the
    identity, so replaying the stats on freshly loaded images is a
    no-op. Class names are at least "0".."9", extended when larger
    label values appear.
    """
    x = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if labels.size != x.shape[1]:
        raise DataFormatError(
            f"{images_path} has {x.shape[1]} images but "
            f"{labels_path} has {labels.size} labels"
        )
    n_classes = max(10, int(labels.max()) + 1)
    t = np.zeros((n_classes, labels.size))
    t[labels, np.arange(labels.size)] = 1.0
    return LabeledDataset(
        x=x,
        t=t,
        class_names=tuple(str(i) for i in range(n_classes)),
        norm_stats=NormStats.identity(x.shape[0]),
    )


def split_indices(t, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified split of one-hot columns into (train, val) index arrays.

    Per class, ceil(fraction * class size) seeded-shuffled columns go to
    val; classes with fewer than 2 samples stay in train with a warning.
    Both arrays come back sorted ascending.
    """
    t = as_matrix(t, "t")
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    labels = np.argmax(t, axis=0)
    rng = np.random.default_rng(seed)
    train_parts, val_parts = [], []
    for c in range(t.shape[0]):
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            continue
        if idx.size < 2:
            warnings.warn(
                f"class {c} has only {idx.size} sample(s); keeping it in train",
                DataWarning,
                stacklevel=2,
            )
            train_parts.append(idx)
            continue
        # 1e-9 guards against float fuzz like 0.2 * 50 -> 10.000000000000002
        k = math.ceil(fraction * idx.size - 1e-9)
        perm = rng.permutation(idx.size)
        val_parts.append(idx[perm[:k]])
        train_parts.append(idx[perm[k:]])
    empty = np.array([], dtype=np.int64)
    train_idx = np.sort(np.concatenate(train_parts)) if train_parts else empty
    val_idx = np.sort(np.concatenate(val_parts)) if val_parts else empty
    return train_idx, val_idx


def split(
    ds: LabeledDataset, fraction: float, seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Seeded stratified split into (train, val) sharing the parent stats."""
    train_idx, val_idx = split_indices(ds.t, fraction, seed)
    if train_idx.size == 0 or val_idx.size == 0:
        raise DataFormatError(
            "split produced an empty half; need at least 2 samples per class"
        )

    def take(idx):
        # ascontiguousarray: column fancy-indexing yields F-ordered
        # arrays, which would change BLAS low bits downstream.
        return LabeledDataset(
            x=np.ascontiguousarray(ds.x[:, idx]),
            t=np.ascontiguousarray(ds.t[:, idx]),
            class_names=ds.class_names,
            norm_stats=ds.norm_stats,
        )

    return take(train_idx), take(val_idx)
