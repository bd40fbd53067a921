"""Experiment configuration and named presets."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Type, TypeVar, Union

from .errors import ConfigError
from .flow import FlowConfig
from .losses import LossKind
from .models import PredictorKind
from .reporting import dumps_json, write_text

T = TypeVar("T")

GENERATED = "generated"


def _coerce(cls: Type[T], data: Mapping[str, Any]) -> T:
    """Build a flat config dataclass, rejecting unknown keys and fixing JSON types."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} settings: {sorted(unknown)}")
    values: Dict[str, Any] = {}
    for name, value in data.items():
        annotation = str(fields[name].type)
        if value is None:
            values[name] = value
        elif annotation == "float":
            values[name] = float(value)
        elif annotation == "int":
            values[name] = int(value)
        elif annotation.startswith("Tuple"):
            values[name] = tuple(value)
        else:
            values[name] = value
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"invalid {cls.__name__}: {exc}") from exc


@dataclass(frozen=True)
class ModelConfig:
    """Which predictor to build; ``hidden`` lists the inner layer sizes."""

    kind: str = PredictorKind.SQUARED_RELU.value
    width: int = 256
    hidden: Tuple[int, ...] = ()
    pool_window: int = 1
    init_scale: float = 1.0
    random_signs: bool = False

    def __post_init__(self) -> None:
        try:
            kind = PredictorKind(self.kind)
        except ValueError as exc:
            raise ConfigError(f"unknown predictor kind {self.kind!r}") from exc
        object.__setattr__(self, "kind", kind.value)
        if kind in (PredictorKind.DEEP_LINEAR, PredictorKind.RELU_MLP):
            if kind is PredictorKind.RELU_MLP and not self.hidden:
                raise ConfigError("relu-mlp needs at least one hidden layer")
        elif self.width <= 0:
            raise ConfigError(f"{self.kind} needs a positive width")
        if not self.init_scale > 0:
            raise ConfigError("init_scale must be positive")


@dataclass(frozen=True)
class DataConfig:
    """``source`` is ``generated`` or a path to a dataset JSON document."""

    source: str = GENERATED
    generator: str = "planar-relu-labels"
    n_raw: int = 200
    margin_floor: float = 0.2
    append_bias: bool = True
    seed: int = 42


@dataclass(frozen=True)
class VerificationConfig:
    kind: Optional[str] = None
    tol: float = 1e-2
    tol_rank: float = 1e-2
    tol_angle: float = 1e-2
    cover_grid: int = 4096
    untrained_control: bool = False

    def __post_init__(self) -> None:
        if self.kind not in (None, "deep-linear", "two-homo"):
            raise ConfigError(f"unknown verification {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """One reproducible experiment: model, loss, flow, data and outputs."""

    name: str
    description: str = ""
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: str = LossKind.EXP.value
    flow: FlowConfig = field(default_factory=FlowConfig)
    data: DataConfig = field(default_factory=DataConfig)
    verification: VerificationConfig = field(default_factory=VerificationConfig)
    output_dir: str = "runs/default"
    groups: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "loss", LossKind(self.loss).value)
        except ValueError as exc:
            raise ConfigError(f"unknown loss {self.loss!r}") from exc
        object.__setattr__(self, "groups", tuple(self.groups))

    @property
    def seed(self) -> int:
        """Seed of the initialization (and random signs)."""
        return self.flow.seed

    @property
    def loss_kind(self) -> LossKind:
        return LossKind(self.loss)

    def with_seed(self, seed: int, output_dir: Optional[str] = None) -> "ExperimentConfig":
        return dataclasses.replace(
            self,
            flow=dataclasses.replace(self.flow, seed=int(seed)),
            output_dir=output_dir if output_dir is not None else self.output_dir,
        )

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown experiment settings: {sorted(unknown)}")
        if "name" not in data:
            raise ConfigError("experiment config needs a name")
        return cls(
            name=str(data["name"]),
            description=str(data.get("description", "")),
            model=_coerce(ModelConfig, data.get("model") or {}),
            loss=str(data.get("loss", LossKind.EXP.value)),
            flow=_coerce(FlowConfig, data.get("flow") or {}),
            data=_coerce(DataConfig, data.get("data") or {}),
            verification=_coerce(VerificationConfig, data.get("verification") or {}),
            output_dir=str(data.get("output_dir", "runs/default")),
            groups=tuple(data.get("groups") or ()),
        )


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_mapping(document)


def save_config(path: Union[str, Path], config: ExperimentConfig) -> Path:
    return write_text(path, dumps_json(config.to_dict()))


# Named experiments.  Groups select combinations for sweeps and listings.
FINE_FLOW = FlowConfig(base_step=0.01, clamp=0.02)
PRESET_EXPERIMENTS: List[ExperimentConfig] = [
    ExperimentConfig(
        name="planar-squared-relu",
        description="Wide squared-ReLU network on planar data, exponential loss",
        model=ModelConfig(width=256, init_scale=0.1),
        flow=FINE_FLOW,
        data=DataConfig(seed=42, n_raw=200, margin_floor=0.2),
        verification=VerificationConfig(kind="two-homo"),
        output_dir="runs/planar-squared-relu",
        groups=("core", "two-homo"),
    ),
    ExperimentConfig(
        name="planar-squared-relu-logistic",
        description="Same network and data with the logistic loss",
        model=ModelConfig(width=256, init_scale=0.1),
        flow=FINE_FLOW,
        loss=LossKind.LOGISTIC.value,
        data=DataConfig(seed=42, n_raw=200, margin_floor=0.2),
        output_dir="runs/planar-squared-relu-logistic",
        groups=("core",),
    ),
    ExperimentConfig(
        name="planar-covering",
        description="Squared-ReLU on raw planar points (d=2) for the global guarantee",
        model=ModelConfig(width=256, init_scale=0.1),
        flow=FINE_FLOW,
        data=DataConfig(generator="planar-circle-labels", seed=42, n_raw=200, margin_floor=0.2, append_bias=False),
        verification=VerificationConfig(kind="two-homo"),
        output_dir="runs/planar-covering",
        groups=("two-homo",),
    ),
    ExperimentConfig(
        name="planar-ntk",
        description="Frozen-activation baseline built from the squared-ReLU initialization",
        model=ModelConfig(kind=PredictorKind.NTK_FROZEN.value, width=256, init_scale=0.1),
        flow=FINE_FLOW,
        data=DataConfig(seed=42, n_raw=200, margin_floor=0.2),
        output_dir="runs/planar-ntk",
        groups=("baseline",),
    ),
    ExperimentConfig(
        name="deep-linear-depth3",
        description="Three-matrix linear network on linearly separable planar data",
        model=ModelConfig(kind=PredictorKind.DEEP_LINEAR.value, hidden=(3, 3), init_scale=0.01),
        flow=FlowConfig(base_step=0.002, clamp=0.002),
        data=DataConfig(generator="planar-linear-labels", seed=7, n_raw=60, margin_floor=0.2, append_bias=False),
        verification=VerificationConfig(kind="deep-linear"),
        output_dir="runs/deep-linear-depth3",
        groups=("core", "deep-linear"),
    ),
    ExperimentConfig(
        name="relu-mlp-pooled",
        description="Bias-free ReLU network with max pooling on planar data",
        model=ModelConfig(kind=PredictorKind.RELU_MLP.value, hidden=(32, 8), pool_window=2),
        data=DataConfig(seed=42, n_raw=200, margin_floor=0.2),
        flow=FlowConfig(target_accuracy=30.0),
        output_dir="runs/relu-mlp-pooled",
        groups=("extended",),
    ),
]


def get_experiment_configs(groups: Optional[Sequence[str]] = None) -> List[ExperimentConfig]:
    """Presets belonging to any of ``groups`` (all presets when none are given)."""
    if not groups:
        return list(PRESET_EXPERIMENTS)
    wanted = set(groups)
    return [config for config in PRESET_EXPERIMENTS if wanted.intersection(config.groups)]


def get_preset(name: str) -> ExperimentConfig:
    for config in PRESET_EXPERIMENTS:
        if config.name == name:
            return config
    raise ConfigError(f"unknown preset {name!r}; choose from {preset_names()}")


def preset_names(configs: Optional[Iterable[ExperimentConfig]] = None) -> List[str]:
    return [config.name for config in (configs if configs is not None else PRESET_EXPERIMENTS)]
