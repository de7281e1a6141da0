"""Experiment configuration: TOML or JSON files, validation, and a round-trippable echo."""

from __future__ import annotations

import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Mapping, Optional

from .baselines import STRATEGIES, CoverageExpansionParams
from .ran_model import InstanceParams
from .recovery import SolveLimits
from .recovery.solver import BOUNDS
from .serialize import CaseError, params_from_dict, params_to_dict
from .simulation import TimingParams
from .topology import TopologyParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "OracleConfig",
    "ExperimentConfig",
    "DEFAULT_SOLVER_LIMITS",
    "instance_seed",
    "load_config",
    "config_from_dict",
    "config_to_dict",
]

# Node-capped so that results do not depend on machine speed.
DEFAULT_SOLVER_LIMITS = SolveLimits(time_s=300.0, node_cap=2000)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OracleConfig:
    instances: int = 100
    base_seed: int = 0
    max_disrupted: int = 4
    max_clouds_up: int = 5
    max_k: int = 3
    severity: Optional[float] = None
    # "trivial" weakens the search bound; a test hook that must not change objectives.
    bound: str = "knapsack"


@dataclass(frozen=True)
class ExperimentConfig:
    ring_sizes: tuple[int, ...] = tuple(range(5, 55, 5))
    topology_file: Optional[str] = None
    severities: tuple[float, ...] = (0.05, 0.10, 0.25, 0.50)
    seeds_per_severity: int = 30
    base_seed: int = 0
    strategies: tuple[str, ...] = STRATEGIES
    output_dir: Optional[str] = None
    jobs: int = 1
    write_traces: bool = True
    write_plans: bool = False
    topology: TopologyParams = field(default_factory=TopologyParams)
    instance: InstanceParams = field(default_factory=InstanceParams)
    timing: TimingParams = field(default_factory=TimingParams)
    solver: SolveLimits = DEFAULT_SOLVER_LIMITS
    coverage: CoverageExpansionParams = field(default_factory=CoverageExpansionParams)
    oracle: OracleConfig = field(default_factory=OracleConfig)

    def validate(self) -> None:
        if self.topology_file is None and not self.ring_sizes:
            raise ConfigError("experiment.ring_sizes must name at least one ring size")
        if any(not isinstance(n, int) or n < 2 for n in self.ring_sizes):
            raise ConfigError("experiment.ring_sizes must be integers >= 2")
        if self.topology_file is not None and not os.path.isfile(self.topology_file):
            raise ConfigError(f"experiment.topology_file {self.topology_file!r} does not exist")
        if not self.severities or any(not 0.0 <= s <= 1.0 for s in self.severities):
            raise ConfigError("experiment.severities must be a non-empty list within [0, 1]")
        if len(set(self.severities)) != len(self.severities):
            raise ConfigError("experiment.severities must not repeat")
        if not isinstance(self.seeds_per_severity, int) or not 1 <= self.seeds_per_severity <= 1000:
            raise ConfigError("experiment.seeds_per_severity must lie in [1, 1000]")
        unknown = [s for s in self.strategies if s not in STRATEGIES]
        if not self.strategies or unknown:
            raise ConfigError(f"experiment.strategies must be a non-empty subset of {list(STRATEGIES)}")
        if not isinstance(self.jobs, int) or self.jobs < 1:
            raise ConfigError("experiment.jobs must be a positive integer")
        if self.solver.node_cap is not None and self.solver.node_cap < 0:
            raise ConfigError("solver.node_cap must be non-negative")
        if self.solver.time_s is not None and self.solver.time_s <= 0:
            raise ConfigError("solver.time_s must be positive")
        o = self.oracle
        if o.instances < 1 or o.max_k < 1 or o.max_clouds_up < 1 or o.max_disrupted < 0:
            raise ConfigError("oracle settings must be positive")
        if o.severity is not None and not 0.0 <= o.severity <= 1.0:
            raise ConfigError("oracle.severity must lie in [0, 1]")
        if o.bound not in BOUNDS:
            raise ConfigError(f"oracle.bound must be one of {list(BOUNDS)}")


def instance_seed(base_seed: int, severity_index: int, replicate: int) -> int:
    """Adding severities or replicates never changes the seeds of existing instances."""
    return base_seed + severity_index * 1000 + replicate


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """Echo in the file layout. It keeps None values, so write it as JSON."""
    return {
        "experiment": {
            "ring_sizes": list(cfg.ring_sizes),
            "topology_file": cfg.topology_file,
            "severities": list(cfg.severities),
            "seeds_per_severity": cfg.seeds_per_severity,
            "base_seed": cfg.base_seed,
            "strategies": list(cfg.strategies),
            "output_dir": cfg.output_dir,
            "jobs": cfg.jobs,
            "write_traces": cfg.write_traces,
            "write_plans": cfg.write_plans,
        },
        "topology": asdict(cfg.topology),
        "instance": params_to_dict(cfg.instance),
        "timing": asdict(cfg.timing),
        "solver": asdict(cfg.solver),
        "baselines": {"coverage_expansion": asdict(cfg.coverage)},
        "oracle": asdict(cfg.oracle),
    }


def _table(doc: Mapping[str, Any], name: str) -> Mapping[str, Any]:
    value = doc.get(name, {})
    if not isinstance(value, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    return value


def _build(cls, values: Mapping[str, Any], section: str, defaults: Mapping[str, Any] | None = None):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"[{section}] has unknown keys {unknown}; expected among {sorted(known)}")
    try:
        return cls(**{**(defaults or {}), **values})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


def config_from_dict(doc: Mapping[str, Any], base_dir: str | None = None) -> ExperimentConfig:
    """Config from a decoded document; relative ``topology_file`` paths resolve against ``base_dir``."""
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a table/object")
    top = {"experiment", "topology", "instance", "timing", "solver", "baselines", "oracle"}
    unknown = sorted(set(doc) - top)
    if unknown:
        raise ConfigError(f"unknown top-level sections {unknown}; expected among {sorted(top)}")

    exp = dict(_table(doc, "experiment"))
    for key in ("ring_sizes", "severities", "strategies"):
        if key in exp:
            if not isinstance(exp[key], list):
                raise ConfigError(f"experiment.{key} must be a list")
            exp[key] = tuple(exp[key])
    if "severities" in exp:
        try:
            exp["severities"] = tuple(float(s) for s in exp["severities"])
        except (TypeError, ValueError) as exc:
            raise ConfigError("experiment.severities must be numbers") from exc
    if exp.get("topology_file") is not None and base_dir is not None:
        exp["topology_file"] = os.path.normpath(os.path.join(base_dir, exp["topology_file"]))
    known = {f.name for f in fields(ExperimentConfig)} - {"topology", "instance", "timing", "solver", "coverage", "oracle"}
    extra = sorted(set(exp) - known)
    if extra:
        raise ConfigError(f"[experiment] has unknown keys {extra}; expected among {sorted(known)}")

    try:
        instance = params_from_dict(_table(doc, "instance"))
    except (CaseError, TypeError, ValueError) as exc:
        raise ConfigError(f"[instance]: {exc}") from exc
    baselines = _table(doc, "baselines")
    extra = sorted(set(baselines) - {"coverage_expansion"})
    if extra:
        raise ConfigError(f"[baselines] has unknown keys {extra}")
    cfg = replace(
        ExperimentConfig(),
        **exp,
        topology=_build(TopologyParams, _table(doc, "topology"), "topology"),
        instance=instance,
        timing=_build(TimingParams, _table(doc, "timing"), "timing"),
        solver=_build(SolveLimits, _table(doc, "solver"), "solver", asdict(DEFAULT_SOLVER_LIMITS)),
        coverage=_build(CoverageExpansionParams, _table(baselines, "coverage_expansion"), "baselines.coverage_expansion"),
        oracle=_build(OracleConfig, _table(doc, "oracle"), "oracle"),
    )
    cfg.validate()
    return cfg


def load_config(path: str) -> ExperimentConfig:
    """Read a ``.toml`` or ``.json`` config, chosen by file extension."""
    ext = os.path.splitext(path)[1].lower()
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from exc
    try:
        if ext == ".toml":
            doc = tomllib.loads(raw.decode("utf-8"))
        elif ext == ".json":
            doc = json.loads(raw)
        else:
            raise ConfigError(f"config {path!r} must end in .toml or .json")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path!r}: {exc}") from exc
    return config_from_dict(doc, os.path.dirname(os.path.abspath(path)))
