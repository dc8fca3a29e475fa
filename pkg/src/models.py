"""Pydantic models for run configuration, plus YAML loading and serialization."""

import hashlib
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Type, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .config import FORMAT_VERSION, RK4_STABILITY_C, TRANSIENT_FRACTION
from .dynamics import EvolverConfig, Flow, Scheme
from .errors import ConfigError
from .flow import default_energies
from .scenarios import CATALOG, DEFAULTS

logger = logging.getLogger(__name__)


class EvolverSettings(BaseModel):
    """Evolution overrides; unset fields fall back to the scenario's own choice."""
    model_config = ConfigDict(extra='forbid')

    dt: Optional[float] = Field(None, gt=0, description="Time step")
    scheme: Optional[Scheme] = Field(None, description="split_step_fourier, crank_nicolson or explicit_rk4")
    steps: Optional[int] = Field(None, ge=0, description="Number of time steps")
    record_stride: int = Field(1, ge=1, description="Steps between recorded snapshots")
    flow: Optional[Flow] = Field(None, description="tdse, noQ or linear")
    stability_c: float = Field(RK4_STABILITY_C, gt=0, description="RK4 stability coefficient")

    def apply(self, base: EvolverConfig) -> EvolverConfig:
        update = {'record_stride': self.record_stride, 'stability_c': self.stability_c}
        if self.dt is not None:
            update['dt'] = self.dt
        if self.scheme is not None:
            update['scheme'] = self.scheme
        return EvolverConfig(**{**base.model_dump(), **update})


class OutputSettings(BaseModel):
    """Where and how often artifacts are written."""
    model_config = ConfigDict(extra='forbid')

    directory: Optional[str] = Field(None, description="Output directory; defaults to BOHMFLOW_OUT")
    snapshot_stride: int = Field(100, ge=1, description="Recorded snapshots between field dumps")
    write_snapshots: bool = True


class TrajectorySettings(BaseModel):
    """Trajectory batch: explicit starts or seeded sampling from |psi0|^2."""
    model_config = ConfigDict(extra='forbid')

    count: int = Field(5, ge=0)
    seed: int = 0
    starts: Optional[List[List[float]]] = None
    substeps: int = Field(1, ge=1)


class LyapunovSettings(BaseModel):
    """Toy generator sweep parameters."""
    model_config = ConfigDict(extra='forbid')

    N: int = Field(4, ge=3, description="Truncated Hilbert-space dimension")
    g_values: List[float] = Field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0])
    energies: Optional[List[float]] = None
    a0_re: Optional[List[float]] = None
    a0_im: Optional[List[float]] = None
    dt: float = Field(0.02, gt=0)
    steps: int = Field(10000, ge=1)
    renorm_stride: int = Field(5, ge=1)
    transient_fraction: float = Field(TRANSIENT_FRACTION, ge=0, lt=1)

    @model_validator(mode='after')
    def validate_lengths(self):
        for name in ('energies', 'a0_re', 'a0_im'):
            values = getattr(self, name)
            if values is not None and len(values) != self.N:
                raise ValueError(f'{name} must have N = {self.N} entries')
        return self

    def resolved_energies(self) -> List[float]:
        return list(self.energies) if self.energies is not None else default_energies(self.N)

    def initial_coefficients(self) -> List[complex]:
        if self.a0_re is None and self.a0_im is None and self.N == 4:
            toy = DEFAULTS['toy_chaos_sweep']
            return [complex(r, i) for r, i in zip(toy['a0_re'], toy['a0_im'])]
        re = self.a0_re or [1.0 / (j + 1) for j in range(self.N)]
        im = self.a0_im or [0.1 * j for j in range(self.N)]
        return [complex(r, i) for r, i in zip(re, im)]


class RunConfig(BaseModel):
    """Complete, validated description of a run."""
    model_config = ConfigDict(extra='forbid')

    version: str = Field(FORMAT_VERSION, description="Format version tag")
    scenario: str = Field("ho_ground", description="Catalog scenario name (inline {name, params} is folded in)")
    params: Dict[str, Any] = Field(default_factory=dict, description="Scenario parameter overrides")
    seed: int = Field(0, description="Seed for randomized ordering and sampling")
    workers: int = Field(1, ge=1, description="Concurrent jobs")
    evolver: EvolverSettings = Field(default_factory=EvolverSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)
    trajectories: TrajectorySettings = Field(default_factory=TrajectorySettings)
    lyapunov: LyapunovSettings = Field(default_factory=LyapunovSettings)

    @field_validator('version')
    @classmethod
    def validate_version(cls, v):
        if v != FORMAT_VERSION:
            raise ValueError(f'unsupported version {v!r}; expected {FORMAT_VERSION!r}')
        return v

    @field_validator('scenario')
    @classmethod
    def validate_scenario(cls, v):
        if v not in CATALOG:
            raise ValueError(f"unknown scenario {v!r}; catalog: {', '.join(CATALOG)}")
        return v

    @model_validator(mode='after')
    def validate_params(self):
        unknown = sorted(set(self.params) - set(DEFAULTS[self.scenario]))
        if unknown:
            raise ValueError(f"unknown parameter(s) for {self.scenario}: {', '.join(unknown)}")
        return self


def _expand_dotted(data: Dict[str, Any]) -> Dict[str, Any]:
    """Turn {'evolver.dt': 0.1} into {'evolver': {'dt': 0.1}}, recursively."""
    out: Dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, dict):
            value = _expand_dotted(value)
        _set_path(out, str(key).split('.'), value, key)
    return out


def _set_path(target: Dict[str, Any], parts: Sequence[str], value: Any, key: str) -> None:
    node = target
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f'{key} conflicts with a scalar value', key=key)
        node = child
    leaf = parts[-1]
    if isinstance(value, dict) and isinstance(node.get(leaf), dict):
        for k, v in value.items():
            _set_path(node[leaf], [k], v, f'{key}.{k}')
    else:
        node[leaf] = value


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Apply 'key=value' overrides; values are parsed as YAML scalars or flow sequences."""
    for item in overrides:
        key, sep, raw = item.partition('=')
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f'override {item!r} is not of the form key=value', key=key or None)
        try:
            value = yaml.safe_load(raw) if raw.strip() else None
        except yaml.YAMLError as e:
            raise ConfigError(f'cannot parse override value {raw!r}: {e}', key=key)
        _set_path(data, key.split('.'), value, key)
    return data


def _model_type(annotation) -> Optional[Type[BaseModel]]:
    if isinstance(annotation, type) and issubclass(annotation, BaseModel):
        return annotation
    return None


def _prune(data: Dict[str, Any], model: Type[BaseModel], prefix: str = "") -> Dict[str, Any]:
    """Drop keys the model does not know, logging each dropped path."""
    kept = {}
    for key, value in data.items():
        path = f'{prefix}{key}'
        if key not in model.model_fields:
            logger.warning(f"Ignoring unknown config key {path!r}")
            continue
        nested = _model_type(model.model_fields[key].annotation)
        kept[key] = _prune(value, nested, f'{path}.') if nested and isinstance(value, dict) else value
    return kept


def _validation_error(e: ValidationError) -> ConfigError:
    first = e.errors()[0]
    key = '.'.join(str(part) for part in first['loc']) or None
    return ConfigError(f"{first['msg']}", key=key)


def _inline_scenario(data: Dict[str, Any]) -> Dict[str, Any]:
    """Fold `scenario: {name: ..., params: {...}}` into the name/params form; top-level params win."""
    spec = data.get('scenario')
    if not isinstance(spec, dict):
        return data
    unknown = sorted(set(spec) - {'name', 'params'})
    if unknown:
        raise ConfigError(f"unknown inline scenario key {unknown[0]!r}", key=f'scenario.{unknown[0]}')
    if 'name' not in spec:
        raise ConfigError('inline scenario needs a name', key='scenario.name')
    inline = spec.get('params') or {}
    if not isinstance(inline, dict):
        raise ConfigError('inline scenario params must be a mapping', key='scenario.params')
    params = data.get('params') or {}
    if not isinstance(params, dict):
        raise ConfigError('params must be a mapping', key='params')
    return {**data, 'scenario': spec['name'], 'params': {**inline, **params}}


def parse_config(data: Optional[Dict[str, Any]], overrides: Sequence[str] = (), strict: bool = True) -> RunConfig:
    """Validate raw config data layered under CLI overrides."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError('config root must be a mapping')
    data = _inline_scenario(apply_overrides(_expand_dotted(data), overrides))
    if not strict:
        data = _prune(data, RunConfig)
        scenario = data.get('scenario', 'ho_ground')
        params = data.get('params')
        if scenario in DEFAULTS and isinstance(params, dict):
            for key in sorted(set(params) - set(DEFAULTS[scenario])):
                logger.warning(f"Ignoring unknown config key 'params.{key}'")
                params.pop(key)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise _validation_error(e) from e


def load_config(path: Optional[Union[str, Path]], overrides: Sequence[str] = (), strict: bool = True) -> RunConfig:
    """
    Read a YAML config file (None means an empty file) and validate it.

    Raises:
        ConfigError: missing file, YAML syntax error (with line/column) or invalid value (with key path)
    """
    data = None
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f'config not found: {path}')
        try:
            data = yaml.safe_load(path.read_text(encoding='utf-8'))
        except yaml.YAMLError as e:
            mark = getattr(e, 'problem_mark', None)
            line = mark.line + 1 if mark is not None else None
            column = mark.column + 1 if mark is not None else None
            where = f' at line {line}, column {column}' if mark is not None else ''
            raise ConfigError(f'cannot parse {path}{where}: {getattr(e, "problem", e)}', line=line, column=column)
    config = parse_config(data, overrides, strict)
    logger.debug(f"Loaded config for scenario {config.scenario}")
    return config


def dump_config(config: RunConfig) -> str:
    """Canonical YAML text; load_config of it yields an equal RunConfig."""
    return yaml.safe_dump(config.model_dump(mode='json'), sort_keys=True, default_flow_style=False)


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(dump_config(config).encode('utf-8')).hexdigest()[:16]
