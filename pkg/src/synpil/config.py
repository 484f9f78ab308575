"""Run configuration: a strict YAML schema for the training CLI.

Every key is checked. Unknown keys are rejected and every error message
carries the full key path (``model.layers[2].width``), so a typo in a
config fixture is caught before any data is read. Parsed configs carry
the original mapping so it can be echoed into the saved model file.

Schema (all sections except ``data`` and ``model`` are optional):

    data:
      format: csv | idx
      train: <path>                  # features (csv) or images (idx)
      train_labels: <path>           # idx only
      label_column: <int or name>    # csv only, default -1
      has_header: <bool>             # csv only, default false
    model:
      activation: tanh | sigmoid | identity
      layers: [500, 200]             # ints, or mappings with
                                     # width/regularizer/lambda/init
      out_lambda: <float>
      backward_lambda: <float>
    early_stop:
      min_delta: <float>
      patience: <int>
      val_fraction: <float>
    fusion:
      picks: [[forward, last], [backward, 0]]
      n_neurons: <int>
      lambda: <float>
      memory_limit_gib: <float>
    synergy:
      n_subsystems: <int>
      sampling_ratio: <float>
      base_seed: <int>
    output:
      report: <path>
      figures: <bool>                # default true; needs report
"""

import copy
import dataclasses
from dataclasses import dataclass

import yaml

from .errors import ConfigError
from .forward import EarlyStopConfig, LayerSpec, Regularizer, WeightInit
from .fusion import LAST, FeaturePath, FusionSelection
from .linalg import Activation
from .synergy import ElementaryConfig, SynergyConfig

_MISSING = object()


@dataclass(frozen=True)
class DataConfig:
    """Where the training data lives and how to read it."""

    format: str
    train: str
    train_labels: str | None = None
    label_column: int | str = -1
    has_header: bool = False


@dataclass(frozen=True)
class OutputConfig:
    report: str | None = None
    figures: bool = True


@dataclass(frozen=True)
class RunConfig:
    """A fully validated run: data source, training plan, outputs.

    `raw` is the parsed YAML mapping, kept verbatim so the trained model
    file can echo the exact configuration it was built from.
    """

    data: DataConfig
    synergy: SynergyConfig
    output: OutputConfig
    raw: dict


def _type_name(v) -> str:
    return type(v).__name__


def _expect_mapping(v, path: str) -> dict:
    if not isinstance(v, dict):
        raise ConfigError(f"{path} must be a mapping, got {_type_name(v)}")
    return v


def _expect_str(v, path: str) -> str:
    if not isinstance(v, str) or not v:
        raise ConfigError(f"{path} must be a nonempty string, got {v!r}")
    return v


def _expect_bool(v, path: str) -> bool:
    if not isinstance(v, bool):
        raise ConfigError(f"{path} must be true or false, got {v!r}")
    return v


def _expect_int(v, path: str, minimum: int | None = None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path} must be an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path} must be at least {minimum}, got {v}")
    return v


def _expect_float(v, path: str, minimum: float | None = None) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path} must be a number, got {v!r}")
    v = float(v)
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path} must be at least {minimum}, got {v}")
    return v


class _Section:
    """A mapping whose keys are consumed one by one; leftovers are errors."""

    def __init__(self, mapping, path: str):
        self._m = dict(_expect_mapping(mapping, path))
        self.path = path

    def take(self, key: str, default=_MISSING):
        if key in self._m:
            return self._m.pop(key)
        if default is _MISSING:
            raise ConfigError(f"{self.path}.{key} is required")
        return default

    def finish(self):
        if self._m:
            paths = ", ".join(f"{self.path}.{k}" for k in sorted(self._m))
            raise ConfigError(f"unknown key(s): {paths}")


def _parse_data(mapping) -> DataConfig:
    sec = _Section(mapping, "data")
    fmt = _expect_str(sec.take("format"), "data.format")
    if fmt not in ("csv", "idx"):
        raise ConfigError(f"data.format must be 'csv' or 'idx', got {fmt!r}")
    train = _expect_str(sec.take("train"), "data.train")
    if fmt == "idx":
        labels = _expect_str(sec.take("train_labels"), "data.train_labels")
        sec.finish()
        return DataConfig(format=fmt, train=train, train_labels=labels)
    label_column = sec.take("label_column", -1)
    if not isinstance(label_column, (int, str)) or isinstance(label_column, bool):
        raise ConfigError(
            f"data.label_column must be an integer or a column name, "
            f"got {label_column!r}"
        )
    has_header = _expect_bool(sec.take("has_header", False), "data.has_header")
    if isinstance(label_column, str) and not has_header:
        raise ConfigError(
            "data.label_column names a column but data.has_header is false"
        )
    sec.finish()
    return DataConfig(
        format=fmt, train=train, label_column=label_column, has_header=has_header
    )


def _parse_layer(entry, path: str) -> LayerSpec:
    if isinstance(entry, bool):
        raise ConfigError(f"{path} must be a width or a mapping, got {entry!r}")
    if isinstance(entry, int):
        return LayerSpec(width=_expect_int(entry, path, minimum=1))
    sec = _Section(entry, path)
    width = _expect_int(sec.take("width"), f"{path}.width", minimum=1)
    reg_name = _expect_str(sec.take("regularizer", "ridge_l2"), f"{path}.regularizer")
    try:
        reg = Regularizer.from_name(reg_name)
    except ValueError as exc:
        raise ConfigError(f"{path}.regularizer: {exc}") from exc
    lam = _expect_float(sec.take("lambda", 1e-3), f"{path}.lambda", minimum=0.0)
    init_name = _expect_str(sec.take("init", "pca"), f"{path}.init")
    try:
        init = WeightInit.from_name(init_name)
    except ValueError as exc:
        raise ConfigError(f"{path}.init: {exc}") from exc
    sec.finish()
    return LayerSpec(width=width, regularizer=reg, lam=lam, init=init)


def _parse_model(mapping):
    sec = _Section(mapping, "model")
    act_name = _expect_str(sec.take("activation", "tanh"), "model.activation")
    try:
        activation = Activation.from_name(act_name)
    except ValueError as exc:
        raise ConfigError(f"model.activation: {exc}") from exc
    layers_raw = sec.take("layers")
    if not isinstance(layers_raw, list) or not layers_raw:
        raise ConfigError(
            f"model.layers must be a nonempty list, got {layers_raw!r}"
        )
    layers = tuple(
        _parse_layer(entry, f"model.layers[{i}]")
        for i, entry in enumerate(layers_raw)
    )
    out_lambda = _expect_float(
        sec.take("out_lambda", 1e-3), "model.out_lambda", minimum=0.0
    )
    backward_lambda = _expect_float(
        sec.take("backward_lambda", 1e-3), "model.backward_lambda", minimum=0.0
    )
    sec.finish()
    return activation, layers, out_lambda, backward_lambda


def _parse_early_stop(mapping) -> EarlyStopConfig:
    sec = _Section(mapping, "early_stop")
    min_delta = _expect_float(
        sec.take("min_delta", 0.001), "early_stop.min_delta", minimum=0.0
    )
    patience = _expect_int(sec.take("patience", 1), "early_stop.patience", minimum=1)
    val_fraction = _expect_float(
        sec.take("val_fraction", 0.15), "early_stop.val_fraction"
    )
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError(
            f"early_stop.val_fraction must be in (0, 1), got {val_fraction}"
        )
    sec.finish()
    return EarlyStopConfig(
        min_delta=min_delta, patience=patience, val_fraction=val_fraction
    )


def _parse_pick(entry, path: str) -> tuple[FeaturePath, int]:
    if not isinstance(entry, list) or len(entry) != 2:
        raise ConfigError(
            f"{path} must be a [path, layer] pair, got {entry!r}"
        )
    side_name, layer = entry
    try:
        side = FeaturePath.from_name(_expect_str(side_name, f"{path}[0]"))
    except ValueError as exc:
        raise ConfigError(f"{path}[0]: {exc}") from exc
    if layer == "last":
        return side, LAST
    return side, _expect_int(layer, f"{path}[1]", minimum=0)


def _parse_fusion(mapping):
    sec = _Section(mapping, "fusion")
    picks_raw = sec.take("picks", None)
    if picks_raw is None:
        selection = FusionSelection.default()
    else:
        if not isinstance(picks_raw, list) or not picks_raw:
            raise ConfigError(
                f"fusion.picks must be a nonempty list, got {picks_raw!r}"
            )
        picks = tuple(
            _parse_pick(entry, f"fusion.picks[{i}]")
            for i, entry in enumerate(picks_raw)
        )
        try:
            selection = FusionSelection(picks=picks)
        except ValueError as exc:
            raise ConfigError(f"fusion.picks: {exc}") from exc
    n_neurons = _expect_int(sec.take("n_neurons", 5000), "fusion.n_neurons", minimum=1)
    lam = _expect_float(sec.take("lambda", 1e-3), "fusion.lambda", minimum=0.0)
    gib = _expect_float(
        sec.take("memory_limit_gib", 2.0), "fusion.memory_limit_gib"
    )
    if gib <= 0:
        raise ConfigError(
            f"fusion.memory_limit_gib must be positive, got {gib}"
        )
    sec.finish()
    return selection, n_neurons, lam, int(gib * 2**30)


def _parse_synergy(mapping):
    sec = _Section(mapping, "synergy")
    n_subsystems = _expect_int(
        sec.take("n_subsystems", 3), "synergy.n_subsystems", minimum=1
    )
    ratio = _expect_float(sec.take("sampling_ratio", 0.8), "synergy.sampling_ratio")
    if not 0.0 < ratio <= 1.0:
        raise ConfigError(
            f"synergy.sampling_ratio must be in (0, 1], got {ratio}"
        )
    base_seed = _expect_int(sec.take("base_seed", 0), "synergy.base_seed", minimum=0)
    sec.finish()
    return n_subsystems, ratio, base_seed


def _parse_output(mapping) -> OutputConfig:
    sec = _Section(mapping, "output")
    report = sec.take("report", None)
    if report is not None:
        report = _expect_str(report, "output.report")
    figures = _expect_bool(sec.take("figures", True), "output.figures")
    sec.finish()
    return OutputConfig(report=report, figures=figures)


def parse_config(mapping) -> RunConfig:
    """Validate a parsed YAML mapping and build the run configuration."""
    raw = copy.deepcopy(_expect_mapping(mapping, "config"))
    top = _Section(mapping, "config")
    data = _parse_data(top.take("data"))
    activation, layers, out_lambda, backward_lambda = _parse_model(top.take("model"))
    early_stop = _parse_early_stop(top.take("early_stop", {}))
    selection, n_neurons, fusion_lambda, mem_bytes = _parse_fusion(
        top.take("fusion", {})
    )
    n_subsystems, ratio, base_seed = _parse_synergy(top.take("synergy", {}))
    output = _parse_output(top.take("output", {}))
    top.finish()
    synergy = SynergyConfig(
        elementary=ElementaryConfig(
            layer_specs=layers,
            activation=activation,
            early_stop=early_stop,
            out_lambda=out_lambda,
            backward_lambda=backward_lambda,
            fusion=selection,
            n_neurons=n_neurons,
            fusion_lambda=fusion_lambda,
            memory_limit_bytes=mem_bytes,
        ),
        n_subsystems=n_subsystems,
        sampling_ratio=ratio,
        base_seed=base_seed,
    )
    return RunConfig(data=data, synergy=synergy, output=output, raw=raw)


def load_config(path) -> RunConfig:
    """Read and validate a YAML config file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            mapping = yaml.safe_load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
    if mapping is None:
        raise ConfigError(f"{path} is empty")
    return parse_config(mapping)


def with_base_seed(cfg: RunConfig, base_seed: int) -> RunConfig:
    """Rebuild the config with a different seed, keeping the echo in sync."""
    if base_seed < 0:
        raise ConfigError(f"base_seed must be nonnegative, got {base_seed}")
    raw = copy.deepcopy(cfg.raw)
    raw.setdefault("synergy", {})["base_seed"] = base_seed
    return RunConfig(
        data=cfg.data,
        synergy=dataclasses.replace(cfg.synergy, base_seed=base_seed),
        output=cfg.output,
        raw=raw,
    )
