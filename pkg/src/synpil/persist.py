"""Versioned single-file binary container for trained ensembles.

Layout, all integers little-endian:

    offset 0   magic "STPL" (4 bytes)
    offset 4   format version, u32
    offset 8   metadata length, u32, then that many bytes of canonical
               JSON (sorted keys, no spaces): aggregation, class names,
               normalization statistics, per-member structure, optional
               config echo
    ...        matrix count, u32, then per matrix: name length u32,
               name UTF-8, rows u64, cols u64, rows*cols f64 values
               row-major
    last 4     CRC-32 of every preceding byte

Normalization statistics ride in the metadata as JSON floats; Python's
shortest-round-trip float repr makes that lossless for finite doubles.

Loading verifies magic, version, and checksum before structural parsing,
and save(load(path)) reproduces the file byte for byte.
"""

import json
import struct
import zlib

import numpy as np

from .backward import BackwardModel
from .data import NormStats
from .errors import DataFormatError, DimensionError
from .forward import ForwardModel
from .fusion import FeaturePath, FusionClassifier, FusionSelection
from .linalg import Activation
from .synergy import Aggregation, ElementaryModel, SynergeticModel

MAGIC = b"STPL"
VERSION = 1


class ModelFileError(DataFormatError):
    """A model file is structurally invalid."""


class BadMagicError(ModelFileError):
    """The file does not start with the container magic."""


class VersionError(ModelFileError):
    """The container version is not supported by this build."""


class ChecksumError(ModelFileError):
    """The trailing CRC-32 does not match the file contents."""


class TruncatedError(ModelFileError):
    """The file ends in the middle of a declared field."""


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _model_matrices(sm: SynergeticModel) -> list[tuple[str, np.ndarray]]:
    mats = []
    for i, m in enumerate(sm.members):
        for k, w in enumerate(m.forward.encoder_weights):
            mats.append((f"m{i}/fw/enc{k}", w))
        mats.append((f"m{i}/fw/out", m.forward.output_weight))
        for k, w in enumerate(m.backward.weights):
            mats.append((f"m{i}/bw/w{k}", w))
        mats.append((f"m{i}/fu/exp", m.classifier.expansion_weight))
        mats.append((f"m{i}/fu/out", m.classifier.output_weight))
    return mats


def save(sm: SynergeticModel, path, config_echo=None) -> None:
    """Write the ensemble to a single self-checking binary file."""
    meta = {
        "aggregation": sm.aggregation.value,
        "class_names": list(sm.class_names),
        "config_echo": config_echo,
        "norm_stats": {
            "mean": [float(v) for v in sm.norm_stats.mean],
            "std": [float(v) for v in sm.norm_stats.std],
        },
        "members": [
            {
                "activation": m.forward.activation.value,
                "depth": m.forward.depth,
                "fusion_picks": [[p.value, j] for p, j in m.fusion_sel.picks],
                "probe_accuracies": list(m.forward.probe_accuracies),
                "subsystem_seed": m.subsystem_seed,
            }
            for m in sm.members
        ],
    }
    meta_bytes = _canonical_json(meta)
    mats = _model_matrices(sm)
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<I", VERSION)
    buf += struct.pack("<I", len(meta_bytes))
    buf += meta_bytes
    buf += struct.pack("<I", len(mats))
    for name, arr in mats:
        name_b = name.encode("utf-8")
        buf += struct.pack("<I", len(name_b))
        buf += name_b
        buf += struct.pack("<QQ", arr.shape[0], arr.shape[1])
        buf += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    buf += struct.pack("<I", zlib.crc32(buf))
    with open(path, "wb") as f:
        f.write(buf)


class _Cursor:
    def __init__(self, data: bytes, path):
        self.data = data
        self.off = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.data):
            raise TruncatedError(
                f"{self.path}: truncated {what} at byte {self.off}: "
                f"needs {n} byte(s), {len(self.data) - self.off} left"
            )
        out = self.data[self.off : self.off + n]
        self.off += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]


def _parse(data: bytes, path):
    if len(data) < 4 or data[:4] != MAGIC:
        found = data[:4].hex() if data else "empty file"
        raise BadMagicError(
            f"{path}: bad magic at byte 0 ({found}); "
            f"expected {MAGIC.hex()} ({MAGIC.decode()})"
        )
    if len(data) < 8:
        raise TruncatedError(f"{path}: truncated version field at byte 4")
    (version,) = struct.unpack("<I", data[4:8])
    if version != VERSION:
        raise VersionError(
            f"{path}: unsupported version {version} at byte 4; "
            f"this build reads version {VERSION}"
        )
    if len(data) < 12:
        raise TruncatedError(
            f"{path}: too short for a checksum ({len(data)} bytes)"
        )
    (stored,) = struct.unpack("<I", data[-4:])
    actual = zlib.crc32(data[:-4])
    if stored != actual:
        raise ChecksumError(
            f"{path}: checksum mismatch at byte {len(data) - 4}: "
            f"stored 0x{stored:08x}, computed 0x{actual:08x}"
        )
    cur = _Cursor(data[:-4], path)
    cur.off = 8
    meta_len = cur.u32("metadata length")
    meta_bytes = cur.take(meta_len, "metadata")
    try:
        meta = json.loads(meta_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"{path}: metadata is not valid JSON: {exc}") from exc
    n_mats = cur.u32("matrix count")
    mats = {}
    for i in range(n_mats):
        name_len = cur.u32(f"matrix {i} name length")
        name = cur.take(name_len, f"matrix {i} name").decode("utf-8", "replace")
        rows = cur.u64(f"matrix {name!r} row count")
        cols = cur.u64(f"matrix {name!r} column count")
        raw = cur.take(8 * rows * cols, f"matrix {name!r} values")
        if name in mats:
            raise ModelFileError(f"{path}: duplicate matrix {name!r}")
        mats[name] = np.frombuffer(raw, dtype="<f8").reshape(rows, cols).copy()
    if cur.off != len(cur.data):
        raise ModelFileError(
            f"{path}: {len(cur.data) - cur.off} byte(s) of trailing data "
            f"at byte {cur.off}"
        )
    return meta, mats


def read_metadata(path) -> dict:
    """Verify the file and return its metadata dictionary."""
    with open(path, "rb") as f:
        data = f.read()
    meta, _ = _parse(data, path)
    return meta


def load(path) -> SynergeticModel:
    """Read back an ensemble written by save."""
    with open(path, "rb") as f:
        data = f.read()
    meta, mats = _parse(data, path)

    def need(name: str) -> np.ndarray:
        if name not in mats:
            raise ModelFileError(f"{path}: missing matrix {name!r}")
        return mats.pop(name)

    try:
        aggregation = Aggregation(meta["aggregation"])
        class_names = tuple(meta["class_names"])
        member_meta = meta["members"]
        stats = NormStats(
            np.array(meta["norm_stats"]["mean"], dtype=np.float64),
            np.array(meta["norm_stats"]["std"], dtype=np.float64),
        )
        members = []
        for i, mm in enumerate(member_meta):
            act = Activation(mm["activation"])
            depth = int(mm["depth"])
            fm = ForwardModel(
                encoder_weights=tuple(
                    need(f"m{i}/fw/enc{k}") for k in range(depth)
                ),
                activation=act,
                output_weight=need(f"m{i}/fw/out"),
                probe_accuracies=tuple(
                    float(a) for a in mm["probe_accuracies"]
                ),
            )
            bm = BackwardModel(
                weights=tuple(need(f"m{i}/bw/w{k}") for k in range(depth + 1)),
                activation=act,
            )
            sel = FusionSelection(
                picks=tuple(
                    (FeaturePath(p), int(j)) for p, j in mm["fusion_picks"]
                )
            )
            fc = FusionClassifier(
                expansion_weight=need(f"m{i}/fu/exp"),
                activation=act,
                output_weight=need(f"m{i}/fu/out"),
            )
            members.append(
                ElementaryModel(
                    forward=fm,
                    backward=bm,
                    fusion_sel=sel,
                    classifier=fc,
                    subsystem_seed=int(mm["subsystem_seed"]),
                )
            )
        if mats:
            raise ModelFileError(
                f"{path}: unexpected matrices: {', '.join(sorted(mats))}"
            )
        return SynergeticModel(
            members=tuple(members),
            aggregation=aggregation,
            norm_stats=stats,
            class_names=class_names,
        )
    except (KeyError, TypeError, ValueError, DimensionError) as exc:
        raise ModelFileError(f"{path}: bad metadata: {exc!r}") from exc
