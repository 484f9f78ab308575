"""Ensembles of elementary classifiers trained on sampled subsets.

One elementary model is a forward encoder stack, a backward label-refit
network, and a fused classifier over features picked from both paths.
The ensemble trains K such members, each on its own seeded sample of the
training columns, and predicts by averaging member scores. Member
trainings are pure functions of their seed-derived inputs, so running
them sequentially or on worker processes yields bit-identical models.
"""

import enum
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .backward import BackwardModel, backward_features, train_backward
from .data import NormStats, split_indices
from .errors import DimensionError, MemberTrainingError
from .forward import (
    EarlyStopConfig,
    ForwardModel,
    LayerSpec,
    classification_accuracy,
    forward_features,
    train_forward,
)
from .fusion import (
    DEFAULT_MEMORY_LIMIT_BYTES,
    FusionClassifier,
    FusionSelection,
    fuse,
    fusion_predict,
    train_fusion,
)
from .linalg import Activation, as_matrix


class Aggregation(enum.Enum):
    """How member scores combine into the ensemble score."""

    MEAN_SCORE = "mean_score"


@dataclass(frozen=True)
class ElementaryConfig:
    """Everything needed to train one member."""

    layer_specs: tuple[LayerSpec, ...]
    activation: Activation = Activation.TANH
    early_stop: EarlyStopConfig = EarlyStopConfig()
    out_lambda: float = 1e-3
    backward_lambda: float = 1e-3
    fusion: FusionSelection = FusionSelection.default()
    n_neurons: int = 5000
    fusion_lambda: float = 1e-3
    memory_limit_bytes: int = DEFAULT_MEMORY_LIMIT_BYTES

    def __post_init__(self):
        if not self.layer_specs:
            raise ValueError("layer_specs must be nonempty")
        for name in ("out_lambda", "backward_lambda", "fusion_lambda"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.n_neurons < 1:
            raise ValueError(f"n_neurons must be >= 1, got {self.n_neurons}")
        if self.memory_limit_bytes < 1:
            raise ValueError("memory_limit_bytes must be positive")


@dataclass(frozen=True)
class SynergyConfig:
    """Ensemble shape: member count, subset ratio, and the seed root."""

    elementary: ElementaryConfig
    n_subsystems: int = 3
    sampling_ratio: float = 0.8
    base_seed: int = 0

    def __post_init__(self):
        if self.n_subsystems < 1:
            raise ValueError(
                f"n_subsystems must be >= 1, got {self.n_subsystems}"
            )
        if not 0.0 < self.sampling_ratio <= 1.0:
            raise ValueError(
                f"sampling_ratio must be in (0, 1], got {self.sampling_ratio}"
            )


@dataclass(frozen=True)
class ElementaryModel:
    """One trained member: both feature paths plus the fused classifier."""

    forward: ForwardModel
    backward: BackwardModel
    fusion_sel: FusionSelection
    classifier: FusionClassifier
    subsystem_seed: int

    def __post_init__(self):
        if self.backward.input_dim != self.forward.input_dim:
            raise DimensionError(
                f"backward expects {self.backward.input_dim} inputs "
                f"but forward expects {self.forward.input_dim}"
            )
        if self.backward.layer_widths != self.forward.layer_widths:
            raise DimensionError(
                f"backward widths {self.backward.layer_widths} do not match "
                f"forward widths {self.forward.layer_widths}"
            )
        if self.classifier.n_classes != self.forward.n_classes:
            raise DimensionError(
                f"classifier has {self.classifier.n_classes} classes "
                f"but the forward readout has {self.forward.n_classes}"
            )

    @property
    def input_dim(self) -> int:
        return self.forward.input_dim

    @property
    def n_classes(self) -> int:
        return self.forward.n_classes


@dataclass(frozen=True)
class SynergeticModel:
    """The full ensemble plus the preprocessing needed to apply it."""

    members: tuple[ElementaryModel, ...]
    aggregation: Aggregation
    norm_stats: NormStats
    class_names: tuple[str, ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("members must be nonempty")
        d = self.members[0].input_dim
        c = self.members[0].n_classes
        for i, m in enumerate(self.members):
            if m.input_dim != d or m.n_classes != c:
                raise DimensionError(
                    f"member {i} has d={m.input_dim}, c={m.n_classes}; "
                    f"expected d={d}, c={c}"
                )
        if len(self.class_names) != c:
            raise DimensionError(
                f"{len(self.class_names)} class names for {c} classes"
            )
        if self.norm_stats.mean.size != d:
            raise DimensionError(
                f"stats cover {self.norm_stats.mean.size} features, expected {d}"
            )

    @property
    def n_members(self) -> int:
        return len(self.members)

    @property
    def input_dim(self) -> int:
        return self.members[0].input_dim

    @property
    def n_classes(self) -> int:
        return self.members[0].n_classes


@dataclass(frozen=True)
class MemberStats:
    """Per-member training record for reports."""

    n_train_samples: int
    seconds_forward: float
    seconds_backward: float
    seconds_fusion: float
    val_accuracy: float


@dataclass(frozen=True)
class SystemStats:
    """Whole-run training record for reports."""

    members: tuple[MemberStats, ...]
    final_val_accuracy: float
    total_seconds: float


def sample_subset(n_samples: int, ratio: float, seed: int) -> np.ndarray:
    """ceil(ratio * n) distinct indices: seeded shuffle, prefix, sort."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    # 1e-9 guards against float fuzz like 0.8 * 5 -> 4.000000000000001
    k = math.ceil(ratio * n_samples - 1e-9)
    rng = np.random.default_rng(seed)
    return np.sort(rng.permutation(n_samples)[:k])


def _train_member(x, t, x_val, t_val, cfg: ElementaryConfig, seed: int):
    # Column subsets arrive F-ordered (numpy fancy indexing) while full
    # sets are usually C-ordered, and BLAS low bits depend on operand
    # layout. Canonicalizing here keeps members bit-identical whether
    # they trained on a subset or the full set, in-process or on a
    # worker.
    x = np.ascontiguousarray(x)
    t = np.ascontiguousarray(t)
    x_val = np.ascontiguousarray(x_val)
    t_val = np.ascontiguousarray(t_val)
    t0 = time.perf_counter()
    fm = train_forward(
        x,
        t,
        x_val,
        t_val,
        list(cfg.layer_specs),
        cfg.activation,
        cfg.early_stop,
        cfg.out_lambda,
        seed,
    )
    t1 = time.perf_counter()
    bm = train_backward(x, t, fm, cfg.backward_lambda)
    t2 = time.perf_counter()
    z = fuse(forward_features(fm, x), backward_features(bm, x), cfg.fusion)
    fc = train_fusion(
        z,
        t,
        cfg.n_neurons,
        cfg.fusion_lambda,
        cfg.activation,
        seed,
        cfg.memory_limit_bytes,
    )
    t3 = time.perf_counter()
    em = ElementaryModel(
        forward=fm,
        backward=bm,
        fusion_sel=cfg.fusion,
        classifier=fc,
        subsystem_seed=seed,
    )
    val_acc = classification_accuracy(elementary_predict(em, x_val), t_val)
    stats = MemberStats(
        n_train_samples=x.shape[1],
        seconds_forward=t1 - t0,
        seconds_backward=t2 - t1,
        seconds_fusion=t3 - t2,
        val_accuracy=val_acc,
    )
    return em, stats


def _member_job(args):
    return _train_member(*args)


def train_elementary(
    x, t, x_val, t_val, cfg: ElementaryConfig, seed: int
) -> ElementaryModel:
    """Train one member: forward stack, backward refit, fused classifier."""
    em, _ = _train_member(
        as_matrix(x, "x"),
        as_matrix(t, "t"),
        as_matrix(x_val, "x_val"),
        as_matrix(t_val, "t_val"),
        cfg,
        seed,
    )
    return em


def elementary_predict(em: ElementaryModel, x) -> np.ndarray:
    """Class scores from one member on already-normalized input."""
    ff = forward_features(em.forward, x)
    bf = backward_features(em.backward, x)
    return fusion_predict(em.classifier, fuse(ff, bf, em.fusion_sel))


def _ensemble_scores(members, xn) -> np.ndarray:
    # Fixed summation order keeps results bit-identical run to run.
    scores = elementary_predict(members[0], xn)
    for m in members[1:]:
        scores = scores + elementary_predict(m, xn)
    return scores / len(members)


def train_system_with_stats(
    x,
    t,
    x_val,
    t_val,
    cfg: SynergyConfig,
    *,
    norm_stats: NormStats | None = None,
    class_names=None,
    workers: int = 1,
) -> tuple[SynergeticModel, SystemStats]:
    """Train all members, optionally on worker processes.

    Member i trains on sample_subset(N, ratio, base_seed + i) with seed
    base_seed + i; the validation set is shared by every member. Pass
    x_val = t_val = None to carve a stratified validation slice out of
    the training data (early_stop.val_fraction, seeded with base_seed).
    Members are assembled in index order regardless of worker count, and
    any member failure aborts the run with that member's index attached.
    """
    x = as_matrix(x, "x")
    t = as_matrix(t, "t")
    if x.shape[1] != t.shape[1]:
        raise DimensionError(
            f"x has {x.shape[1]} samples but t has {t.shape[1]}"
        )
    if (x_val is None) != (t_val is None):
        raise ValueError("x_val and t_val must be supplied together")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if x_val is None:
        tr_idx, va_idx = split_indices(
            t, cfg.elementary.early_stop.val_fraction, cfg.base_seed
        )
        if tr_idx.size == 0 or va_idx.size == 0:
            raise DimensionError(
                "automatic validation split came up empty; pass x_val/t_val"
            )
        x_val, t_val = x[:, va_idx], t[:, va_idx]
        x, t = x[:, tr_idx], t[:, tr_idx]
    else:
        x_val = as_matrix(x_val, "x_val")
        t_val = as_matrix(t_val, "t_val")

    t_start = time.perf_counter()
    n = x.shape[1]
    jobs = []
    for i in range(cfg.n_subsystems):
        seed = cfg.base_seed + i
        idx = sample_subset(n, cfg.sampling_ratio, seed)
        jobs.append((x[:, idx], t[:, idx], x_val, t_val, cfg.elementary, seed))

    results = [None] * len(jobs)
    if workers == 1 or len(jobs) == 1:
        for i, job in enumerate(jobs):
            try:
                results[i] = _member_job(job)
            except Exception as exc:
                raise MemberTrainingError(i, str(exc)) from exc
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            futures = [pool.submit(_member_job, job) for job in jobs]
            for i, fut in enumerate(futures):
                try:
                    results[i] = fut.result()
                except Exception as exc:
                    raise MemberTrainingError(i, str(exc)) from exc

    if norm_stats is None:
        norm_stats = NormStats.identity(x.shape[0])
    if class_names is None:
        class_names = tuple(str(i) for i in range(t.shape[0]))
    sm = SynergeticModel(
        members=tuple(r[0] for r in results),
        aggregation=Aggregation.MEAN_SCORE,
        norm_stats=norm_stats,
        class_names=tuple(class_names),
    )
    final_acc = classification_accuracy(_ensemble_scores(sm.members, x_val), t_val)
    stats = SystemStats(
        members=tuple(r[1] for r in results),
        final_val_accuracy=final_acc,
        total_seconds=time.perf_counter() - t_start,
    )
    return sm, stats


def train_system(
    x,
    t,
    x_val,
    t_val,
    cfg: SynergyConfig,
    *,
    norm_stats: NormStats | None = None,
    class_names=None,
    workers: int = 1,
) -> SynergeticModel:
    """train_system_with_stats without the stats."""
    sm, _ = train_system_with_stats(
        x,
        t,
        x_val,
        t_val,
        cfg,
        norm_stats=norm_stats,
        class_names=class_names,
        workers=workers,
    )
    return sm


def predict(sm: SynergeticModel, x) -> tuple[list[str], np.ndarray]:
    """Labels and mean member scores for raw input columns.

    The stored normalization is applied internally; ties in the mean
    score go to the smallest class index.
    """
    x = as_matrix(x, "x")
    if x.shape[0] != sm.input_dim:
        raise DimensionError(
            f"input has {x.shape[0]} features but the model expects {sm.input_dim}"
        )
    xn = sm.norm_stats.apply(x)
    scores = _ensemble_scores(sm.members, xn)
    idx = np.argmax(scores, axis=0)
    return [sm.class_names[i] for i in idx], scores
