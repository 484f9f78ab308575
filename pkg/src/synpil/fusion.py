"""Feature fusion and the fused classifier.

Selected hidden-layer features from the forward and backward paths are
stacked row-wise into one fused feature matrix. The classifier on top is
a single fixed random expansion (seeded Gaussian, row-orthonormalized)
followed by the activation and a closed-form ridge readout.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ResourceLimitError
from .linalg import Activation, activate, as_matrix, random_orthonormal_rows, ridge_solve

# Sentinel layer index meaning "the model's top layer".
LAST = -1

DEFAULT_MEMORY_LIMIT_BYTES = 2 * 2**30


class FeaturePath(enum.Enum):
    """Which feature stack a pick draws from."""

    FORWARD = "forward"
    BACKWARD = "backward"

    @classmethod
    def from_name(cls, name: str) -> "FeaturePath":
        try:
            return cls(name.lower())
        except ValueError:
            valid = ", ".join(p.value for p in cls)
            raise ValueError(f"unknown feature path {name!r}; expected one of {valid}")


@dataclass(frozen=True)
class FusionSelection:
    """Ordered feature picks, each a (path, layer index) pair.

    A layer index of LAST resolves to the model's top layer at fuse
    time, so one selection works across members of different depths.
    """

    picks: tuple[tuple[FeaturePath, int], ...]

    def __post_init__(self):
        if not self.picks:
            raise ValueError("picks must be nonempty")
        seen = set()
        for path, idx in self.picks:
            if not isinstance(path, FeaturePath):
                raise TypeError(f"pick path must be a FeaturePath, got {path!r}")
            if idx < LAST:
                raise ValueError(
                    f"layer index must be >= 0 (or LAST = -1), got {idx}"
                )
            if (path, idx) in seen:
                raise ValueError(f"duplicate pick ({path.value}, {idx})")
            seen.add((path, idx))

    @classmethod
    def default(cls) -> "FusionSelection":
        return cls(
            picks=((FeaturePath.FORWARD, LAST), (FeaturePath.BACKWARD, LAST))
        )


@dataclass(frozen=True)
class FusionClassifier:
    """Fixed random expansion with a ridge readout on top."""

    expansion_weight: np.ndarray
    activation: Activation
    output_weight: np.ndarray

    def __post_init__(self):
        if self.output_weight.shape[1] != self.expansion_weight.shape[0]:
            raise DimensionError(
                f"output weight expects {self.output_weight.shape[1]} hidden "
                f"units but the expansion produces {self.expansion_weight.shape[0]}"
            )

    @property
    def n_neurons(self) -> int:
        return self.expansion_weight.shape[0]

    @property
    def input_dim(self) -> int:
        return self.expansion_weight.shape[1]

    @property
    def n_classes(self) -> int:
        return self.output_weight.shape[0]


def fuse(
    forward_feats: list[np.ndarray],
    backward_feats: list[np.ndarray],
    sel: FusionSelection,
) -> np.ndarray:
    """Stack the picked feature matrices row-wise in pick order."""
    stacks = {
        FeaturePath.FORWARD: forward_feats,
        FeaturePath.BACKWARD: backward_feats,
    }
    blocks = []
    n_cols = None
    resolved = set()
    for path, idx in sel.picks:
        feats = stacks[path]
        k = len(feats) - 1 if idx == LAST else idx
        if not 0 <= k < len(feats):
            raise DimensionError(
                f"pick ({path.value}, {idx}) is out of range for depth {len(feats)}"
            )
        if (path, k) in resolved:
            raise ValueError(
                f"picks ({path.value}, {idx}) and ({path.value}, {k}) "
                "resolve to the same layer"
            )
        resolved.add((path, k))
        block = as_matrix(feats[k], f"{path.value} feature {k}")
        if n_cols is None:
            n_cols = block.shape[1]
        elif block.shape[1] != n_cols:
            raise DimensionError(
                f"pick ({path.value}, {idx}) has {block.shape[1]} columns, "
                f"expected {n_cols}"
            )
        blocks.append(block)
    return np.vstack(blocks)


def _working_set_bytes(n_neurons: int, fused_dim: int, n_samples: int) -> int:
    # expansion (n_c x d) + hidden (n_c x N) + gram (n_c x n_c), float64.
    return 8 * (n_neurons * fused_dim + n_neurons * n_samples + n_neurons**2)


def train_fusion(
    z,
    t,
    n_neurons: int,
    lam: float,
    activation: Activation,
    seed: int,
    memory_limit_bytes: int = DEFAULT_MEMORY_LIMIT_BYTES,
) -> FusionClassifier:
    """Fit the fused classifier on fused features z with one-hot targets t.

    The expansion weight is a seeded Gaussian with orthonormalized rows
    (block-wise when n_neurons exceeds the fused dimension); the readout
    is the closed-form ridge solution on the expanded features.
    """
    z = as_matrix(z, "z")
    t = as_matrix(t, "t")
    if z.shape[1] != t.shape[1]:
        raise DimensionError(
            f"z has {z.shape[1]} samples but t has {t.shape[1]}"
        )
    if n_neurons < 1:
        raise ValueError(f"n_neurons must be >= 1, got {n_neurons}")
    need = _working_set_bytes(n_neurons, z.shape[0], z.shape[1])
    if need > memory_limit_bytes:
        raise ResourceLimitError(
            f"fused classifier with {n_neurons} neurons needs about "
            f"{need / 2**20:.0f} MiB, over the "
            f"{memory_limit_bytes / 2**20:.0f} MiB limit"
        )
    rng = np.random.default_rng(seed)
    expansion = random_orthonormal_rows(n_neurons, z.shape[0], rng)
    hidden = activate(activation, expansion @ z)
    output = ridge_solve(hidden, t, lam)
    return FusionClassifier(
        expansion_weight=expansion, activation=activation, output_weight=output
    )


def fusion_predict(fc: FusionClassifier, z) -> np.ndarray:
    """Class scores for fused features z, one column per sample."""
    z = as_matrix(z, "z")
    if z.shape[0] != fc.input_dim:
        raise DimensionError(
            f"z has {z.shape[0]} rows but the classifier expects {fc.input_dim}"
        )
    return fc.output_weight @ activate(fc.activation, fc.expansion_weight @ z)
