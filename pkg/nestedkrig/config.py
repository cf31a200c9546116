"""
Run configuration: one JSON document, flags merged on top, strict records.

Every record forbids unknown keys, and the whole configuration is validated
before any computation starts. Validation failures surface as ConfigError.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)
from typing_extensions import Annotated

from nestedkrig.errors import ConfigError
from nestedkrig.kernels import KernelFamily, KernelSpec, make_kernel
from nestedkrig.submodels import PartitionStrategy
from nestedkrig.variance_aggregators import AggregationMethod

LOGGER = logging.getLogger(__name__)

PositiveFloat = Annotated[float, Field(gt=0)]
PositiveInt = Annotated[int, Field(ge=1)]
Fraction = Annotated[float, Field(ge=0, le=1)]


class StrictRecord(BaseModel):
    """Frozen pydantic base that rejects unknown keys."""

    model_config = ConfigDict(extra="forbid", frozen=True)


class KernelRecord(StrictRecord):
    """Kernel section of a run configuration; validated by building the KernelSpec."""

    family: str = "matern32"
    variance: PositiveFloat = 1.0
    lengthscale: Union[PositiveFloat, List[PositiveFloat]] = 0.2
    dim: PositiveInt = 1

    @field_validator("family")
    @classmethod
    def _known_family(cls, value: str) -> str:
        return KernelFamily.parse(value).value

    @model_validator(mode="after")
    def _consistent(self) -> "KernelRecord":
        self.to_spec()
        return self

    def to_spec(self) -> KernelSpec:
        """Build the validated KernelSpec."""
        return make_kernel(self.family, self.variance, self.lengthscale, self.dim)


class SyntheticData(StrictRecord):
    """Generator for data: ``n`` design points of type ``design`` and ``function`` values."""

    function: str = "sin2pi_plus_x"
    n: PositiveInt = 20
    design: Literal["equispaced", "halton", "uniform"] = "equispaced"
    seed: int = 0
    lower: float = 0.0
    upper: float = 1.0

    @model_validator(mode="after")
    def _ordered_bounds(self) -> "SyntheticData":
        if not self.lower < self.upper:
            raise ValueError("synthetic data needs lower < upper")
        return self


class DataConfig(StrictRecord):
    """A CSV path or a synthetic generator; a path takes precedence."""

    path: Optional[str] = None
    synthetic: Optional[SyntheticData] = None

    @model_validator(mode="after")
    def _has_source(self) -> "DataConfig":
        if self.path is None and self.synthetic is None:
            raise ValueError("data needs a 'path' or a 'synthetic' generator")
        return self


class PartitionConfig(StrictRecord):
    """Partition section: a strategy with p groups, or a JSON file of groups."""

    p: Optional[PositiveInt] = None
    strategy: str = "contiguous"
    seed: int = 0
    path: Optional[str] = None  # JSON partition file, overrides p/strategy

    @field_validator("strategy")
    @classmethod
    def _known_strategy(cls, value: str) -> str:
        return PartitionStrategy.parse(value).value


class GridConfig(StrictRecord):
    """Regular grid on [min, max]^d with ``count`` points per axis."""

    min: float = 0.0
    max: float = 1.0
    count: PositiveInt = 101

    @model_validator(mode="after")
    def _ordered(self) -> "GridConfig":
        if not self.min <= self.max:
            raise ValueError("grid needs min <= max")
        return self


class SampleConfig(StrictRecord):
    """Number of paths, seed and factorization of sample_paths."""

    count: PositiveInt = 10
    seed: int = 0
    conditional: bool = False
    method: Literal["chol", "eigh"] = "chol"


class ExperimentConfig(StrictRecord):
    """Parameters of the consistency and non-consistency studies."""

    x0: List[float] = [0.2]
    xbar: List[float] = [0.8]
    r: PositiveFloat = 0.1
    n_values: Optional[List[PositiveInt]] = None
    delta_exponent: PositiveFloat = 0.25
    gap_factor: Annotated[float, Field(ge=0)] = 2.0
    retention: Fraction = 0.5
    ratio: PositiveFloat = 10.0
    grid_count: Annotated[int, Field(ge=2)] = 101


class RunConfig(StrictRecord):
    """
    Everything one subcommand needs.

    Built from a JSON file (optional) and command-line flags, flags winning,
    see ``build_config``. Unknown keys anywhere are a ConfigError.
    """

    kernel: KernelRecord = KernelRecord()
    data: Optional[DataConfig] = None
    partition: PartitionConfig = PartitionConfig()
    method: Optional[str] = None  # each subcommand has its own default
    grid: GridConfig = GridConfig()
    sample: SampleConfig = SampleConfig()
    experiment: ExperimentConfig = ExperimentConfig()
    output: Optional[str] = None

    @field_validator("method")
    @classmethod
    def _known_method(cls, value: Optional[str]) -> Optional[str]:
        return None if value is None else AggregationMethod.parse(value).value

    @property
    def spec(self) -> KernelSpec:
        return self.kernel.to_spec()

    def aggregation(self, default: AggregationMethod) -> AggregationMethod:
        """Configured aggregation rule, or the subcommand's ``default``."""
        return default if self.method is None else AggregationMethod.parse(self.method)


# ===== LOADING =====


def merge_records(base: Mapping[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """Deep-merge ``overrides`` into ``base``; overrides win, None means unset."""
    merged: Dict[str, Any] = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = merge_records(merged[key], value)
        elif isinstance(value, Mapping):
            merged[key] = merge_records({}, value)
        else:
            merged[key] = value
    return merged


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a JSON run configuration into a plain dict.

    Raises:
        ConfigError: when the file is unreadable, not JSON or not an object
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config {path}: invalid JSON at line {exc.lineno}: {exc.msg}"
        ) from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"config {path}: top level must be a JSON object")
    return payload


def build_config(
    path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None
) -> RunConfig:
    """Load the optional config file, apply flag overrides and validate."""
    base = read_config_file(path) if path is not None else {}
    merged = merge_records(base, overrides or {})
    try:
        config = RunConfig.model_validate(merged)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}"
            for err in exc.errors()
        )
        raise ConfigError(f"invalid configuration: {problems}") from exc
    LOGGER.debug("configuration: %s", config.model_dump())
    return config
