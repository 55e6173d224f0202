"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored.  Every key must name a field
of :class:`RunConfig`; values are parsed according to the field's type.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

from .condnum import ParamRanges
from .resest import RefineConfig
from .simest import SimilarityConfig
from .tracker import TrackerConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int | None = None
    workers: int = 1
    # parameter ranges (symmetric half-widths; gamma_max is a ratio, k1_max an offset from 1)
    t_max: float = 32.0
    gamma_max: float = 1.38
    theta_max: float = 0.7
    k1_max: float = 0.1
    k2_max: float = 0.015
    nu_max: float = 0.0015
    # condition-number study
    samples: int = 100_000
    probe_size: float = 127.0
    # similarity stage
    stride: int = 8
    refinements: int = 1
    max_scale: float = 1.5
    # residual stage
    refine_max_iters: int = 30
    refine_tol: float = 1e-6
    refine_damping: float = 1e-3
    refine_max_translation: float = 8.0
    refine_max_scale_slack: float = 0.05
    refine_max_rotation_slack: float = 0.05
    refine_smoothing: tuple[float, ...] = (3.0, 1.0)
    refine_min_correlation: float = 0.3
    # tracker
    template_size: int = 127
    search_size: int = 255
    lost_threshold: float = 0.3
    freeze_on_lost: bool = True
    # evaluation
    hsr_grid: int = 10

    def __post_init__(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if self.workers < 1 or self.samples < 1 or self.hsr_grid < 2:
            raise ConfigError("workers, samples must be >= 1 and hsr_grid >= 2")
        try:
            self.tracker_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def ranges(self) -> ParamRanges:
        t, n = self.t_max, self.nu_max
        return ParamRanges(
            t1=(-t, t), t2=(-t, t),
            gamma=(1.0 / self.gamma_max, self.gamma_max),
            theta=(-self.theta_max, self.theta_max),
            k1=(1.0 - self.k1_max, 1.0 + self.k1_max),
            k2=(-self.k2_max, self.k2_max), nu1=(-n, n), nu2=(-n, n),
        )

    def similarity_config(self) -> SimilarityConfig:
        return SimilarityConfig(stride=self.stride, refinements=self.refinements, max_scale=self.max_scale)

    def refine_config(self) -> RefineConfig:
        return RefineConfig(
            max_iters=self.refine_max_iters, tol=self.refine_tol, damping=self.refine_damping,
            max_translation=self.refine_max_translation, max_scale_slack=self.refine_max_scale_slack,
            max_rotation_slack=self.refine_max_rotation_slack, smoothing=self.refine_smoothing,
            min_correlation=self.refine_min_correlation, ranges=self.ranges(),
        )

    def tracker_config(self, **overrides) -> TrackerConfig:
        return TrackerConfig(
            template_size=self.template_size, search_size=self.search_size,
            lost_threshold=self.lost_threshold, freeze_on_lost=self.freeze_on_lost,
            ranges=self.ranges(), similarity=self.similarity_config(),
            refine=self.refine_config(), **overrides,
        )

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def dumps(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _parse_value(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind.startswith("tuple"):
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if kind.startswith("int"):
            return None if raw.lower() == "none" else int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path) as f:
        return parse_config(f.read())
