"""Greedy layer-wise training of a stacked autoencoder classifier.

Each layer is an autoencoder solved in closed form: the encoder is
initialized (PCA rows or a seeded random orthonormal map), features pass
through the activation, the decoder is fit by ridge or L1-regularized
least squares against the layer input, and the encoder is tied to the
decoder transpose. Depth is chosen while stacking: after each layer a
probe linear readout is fit on the training features and scored on a
validation set, growth stops once the score stalls, and the model is cut
at the best-scoring depth.
"""

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, UnderdeterminedWarning
from .linalg import (
    Activation,
    FistaConfig,
    activate,
    as_matrix,
    fista_lasso,
    random_orthonormal_rows,
    ridge_solve,
    svd,
)

_EPS = float(np.finfo(np.float64).eps)


class Regularizer(enum.Enum):
    """Penalty used when fitting a layer's decoder."""

    RIDGE_L2 = "ridge_l2"
    LASSO_L1 = "lasso_l1"

    @classmethod
    def from_name(cls, name: str) -> "Regularizer":
        try:
            return cls(name.lower())
        except ValueError:
            valid = ", ".join(r.value for r in cls)
            raise ValueError(f"unknown regularizer {name!r}; expected one of {valid}")


class WeightInit(enum.Enum):
    """Encoder initialization scheme for a layer."""

    PCA = "pca"
    RANDOM_ORTHOGONAL = "random_orthogonal"

    @classmethod
    def from_name(cls, name: str) -> "WeightInit":
        try:
            return cls(name.lower())
        except ValueError:
            valid = ", ".join(w.value for w in cls)
            raise ValueError(f"unknown init {name!r}; expected one of {valid}")


@dataclass(frozen=True)
class LayerSpec:
    """Width, decoder penalty, and encoder init for one layer."""

    width: int
    regularizer: Regularizer = Regularizer.RIDGE_L2
    lam: float = 1e-3
    init: WeightInit = WeightInit.PCA

    def __post_init__(self):
        if self.width < 1:
            raise ValueError(f"width must be >= 1, got {self.width}")
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")


@dataclass(frozen=True)
class EarlyStopConfig:
    """Stall detection for depth growth.

    val_fraction is used only when the caller has no explicit validation
    set and needs to carve one out of the training data.
    """

    min_delta: float = 0.001
    patience: int = 1
    val_fraction: float = 0.15

    def __post_init__(self):
        if self.min_delta < 0:
            raise ValueError(f"min_delta must be nonnegative, got {self.min_delta}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(
                f"val_fraction must be in (0, 1), got {self.val_fraction}"
            )


@dataclass(frozen=True)
class ForwardModel:
    """Trained encoder stack with its linear readout.

    probe_accuracies records the validation accuracy measured at every
    depth explored during training, which may exceed the kept depth.
    """

    encoder_weights: tuple[np.ndarray, ...]
    activation: Activation
    output_weight: np.ndarray
    probe_accuracies: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.encoder_weights:
            raise DimensionError("model must have at least one layer")
        for k in range(1, len(self.encoder_weights)):
            prev = self.encoder_weights[k - 1]
            cur = self.encoder_weights[k]
            if cur.shape[1] != prev.shape[0]:
                raise DimensionError(
                    f"layer {k + 1} expects {cur.shape[1]} inputs but layer "
                    f"{k} produces {prev.shape[0]}"
                )
        last_width = self.encoder_weights[-1].shape[0]
        if self.output_weight.shape[1] != last_width:
            raise DimensionError(
                f"output weight expects {self.output_weight.shape[1]} features "
                f"but the last layer produces {last_width}"
            )

    @property
    def depth(self) -> int:
        return len(self.encoder_weights)

    @property
    def layer_widths(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.encoder_weights)

    @property
    def input_dim(self) -> int:
        return self.encoder_weights[0].shape[1]

    @property
    def n_classes(self) -> int:
        return self.output_weight.shape[0]


def train_pilae_layer(
    h_prev, spec: LayerSpec, activation: Activation, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Train one tied-weight autoencoder layer.

    Returns (encoder_weight, h_out) with encoder_weight of shape
    width x rows(h_prev) and h_out = activation(encoder_weight @ h_prev).
    The encoder is first initialized per spec.init, features are pushed
    through the activation, the decoder is fit in closed form against
    h_prev, and the encoder is replaced by the decoder transpose.

    Under PCA init, initial rows are the top left singular vectors of
    h_prev; if the width exceeds its numerical rank the remaining rows
    come from the seeded random orthonormal scheme.
    """
    h_prev = as_matrix(h_prev, "h_prev")
    d, n = h_prev.shape
    p = spec.width
    if p > n:
        warnings.warn(
            f"layer width {p} exceeds sample count {n}; "
            "decoder fit is underdetermined",
            UnderdeterminedWarning,
            stacklevel=2,
        )
    rng = np.random.default_rng(seed)
    if spec.init is WeightInit.PCA:
        u, s, _ = svd(h_prev)
        cutoff = max(h_prev.shape) * _EPS * (float(s[0]) if s.size else 0.0)
        rank = int(np.sum(s > cutoff))
        take = min(p, rank)
        pieces = []
        if take:
            pieces.append(u[:, :take].T)
        if take < p:
            pieces.append(random_orthonormal_rows(p - take, d, rng))
        w0 = np.vstack(pieces)
    else:
        w0 = random_orthonormal_rows(p, d, rng)
    h0 = activate(activation, w0 @ h_prev)
    if spec.regularizer is Regularizer.RIDGE_L2:
        w_d = ridge_solve(h0, h_prev, spec.lam)
    else:
        w_d = fista_lasso(h0, h_prev, FistaConfig(alpha=spec.lam))
    w_e = w_d.T.copy()
    return w_e, activate(activation, w_e @ h_prev)


def classification_accuracy(scores, t) -> float:
    """Fraction of columns whose argmax matches the one-hot target."""
    scores = as_matrix(scores, "scores")
    t = as_matrix(t, "t")
    if scores.shape != t.shape:
        raise DimensionError(
            f"score shape {scores.shape} does not match target shape {t.shape}"
        )
    return float(np.mean(np.argmax(scores, axis=0) == np.argmax(t, axis=0)))


def train_forward(
    x,
    t,
    x_val,
    t_val,
    specs: list[LayerSpec],
    activation: Activation,
    es: EarlyStopConfig,
    out_lambda: float,
    seed: int,
) -> ForwardModel:
    """Stack layers greedily, probing each depth with a linear readout.

    After each layer a ridge readout is fit on the training features and
    scored on the validation set. Growth stops once accuracy has failed
    to beat the running best by es.min_delta for es.patience consecutive
    layers, or when specs run out. The returned model is cut at the
    best-scoring depth (ties go to the shallowest) and keeps that depth's
    probe readout as its output weight.
    """
    x = as_matrix(x, "x")
    t = as_matrix(t, "t")
    x_val = as_matrix(x_val, "x_val")
    t_val = as_matrix(t_val, "t_val")
    if not specs:
        raise ValueError("specs must be nonempty")
    if x.shape[1] != t.shape[1]:
        raise DimensionError(
            f"x has {x.shape[1]} samples but t has {t.shape[1]}"
        )
    if x_val.shape[1] != t_val.shape[1]:
        raise DimensionError(
            f"x_val has {x_val.shape[1]} samples but t_val has {t_val.shape[1]}"
        )
    if x_val.shape[0] != x.shape[0]:
        raise DimensionError(
            f"x_val has {x_val.shape[0]} rows but x has {x.shape[0]}"
        )
    if t_val.shape[0] != t.shape[0]:
        raise DimensionError(
            f"class-count mismatch: t has {t.shape[0]} classes "
            f"but t_val has {t_val.shape[0]}"
        )

    weights: list[np.ndarray] = []
    probes: list[np.ndarray] = []
    accs: list[float] = []
    h, h_val = x, x_val
    best = -np.inf
    streak = 0
    for k, spec in enumerate(specs):
        w_e, h = train_pilae_layer(h, spec, activation, seed + k)
        h_val = activate(activation, w_e @ h_val)
        w_o = ridge_solve(h, t, out_lambda)
        acc = classification_accuracy(w_o @ h_val, t_val)
        weights.append(w_e)
        probes.append(w_o)
        accs.append(acc)
        if acc > best + es.min_delta:
            streak = 0
        else:
            streak += 1
        best = max(best, acc)
        if streak >= es.patience:
            break
    depth = int(np.argmax(accs)) + 1
    return ForwardModel(
        encoder_weights=tuple(weights[:depth]),
        activation=activation,
        output_weight=probes[depth - 1],
        probe_accuracies=tuple(accs),
    )


def forward_features(m: ForwardModel, x) -> list[np.ndarray]:
    """Hidden activations [H^1 .. H^depth] for input columns x."""
    x = as_matrix(x, "x")
    if x.shape[0] != m.input_dim:
        raise DimensionError(
            f"input has {x.shape[0]} rows but model expects {m.input_dim}"
        )
    feats = []
    h = x
    for w in m.encoder_weights:
        h = activate(m.activation, w @ h)
        feats.append(h)
    return feats


def forward_predict(m: ForwardModel, x) -> np.ndarray:
    """Raw class scores (no softmax), one column per sample."""
    return m.output_weight @ forward_features(m, x)[-1]
