"""Experiment grid execution and result artifacts."""

from __future__ import annotations

import csv
import io
import json
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from functools import lru_cache
from typing import Any, Iterable, Iterator, Optional

import numpy as np

from . import __version__
from .config import ExperimentConfig, config_to_dict, instance_seed
from .failure import sample_failure
from .ran_model import build_instance, initial_placement
from .recovery import plan_to_dict
from .serialize import case_to_dict
from .simulation import InstanceError, MetricsRow, UtilityTrace, aggregate, play_instance
from .topology import Topology, TopologyParams, build_ring_topology, load_topology

__all__ = [
    "METRICS_COLUMNS",
    "GridTask",
    "TaskResult",
    "grid_tasks",
    "run_task",
    "iter_grid",
    "run_grid",
    "OutputWriter",
    "format_value",
    "metrics_csv",
    "trace_csv",
    "write_outputs",
]

# Wall-clock solve time is left out so reruns are byte-identical.
METRICS_COLUMNS = tuple(f.name for f in fields(MetricsRow) if f.name != "solve_wall_time_s")


@dataclass(frozen=True)
class GridTask:
    n_rus: int
    severity_index: int
    severity: float
    replicate: int
    seed: int


@dataclass
class TaskResult:
    task: GridTask
    rows: list[MetricsRow] = field(default_factory=list)
    traces: dict[str, UtilityTrace] = field(default_factory=dict)
    plan: Optional[dict] = None
    case: Optional[dict] = None
    errors: list[str] = field(default_factory=list)
    wall_s: float = 0.0


@lru_cache(maxsize=None)
def _ring(n: int, params: TopologyParams) -> Topology:
    return build_ring_topology(n, params)


@lru_cache(maxsize=4)
def _file_topology(path: str) -> Topology:
    with open(path, encoding="utf-8") as fh:
        return load_topology(fh.read())


def _topology(cfg: ExperimentConfig, n_rus: int) -> Topology:
    if cfg.topology_file is not None:
        return _file_topology(cfg.topology_file)
    return _ring(n_rus, cfg.topology)


def grid_tasks(cfg: ExperimentConfig) -> list[GridTask]:
    if cfg.topology_file is not None:
        sizes = [len(_file_topology(cfg.topology_file).ru_sites)]
    else:
        sizes = list(cfg.ring_sizes)
    tasks = []
    for n in sizes:
        for si, sev in enumerate(cfg.severities):
            for rep in range(cfg.seeds_per_severity):
                tasks.append(GridTask(n, si, sev, rep, instance_seed(cfg.base_seed, si, rep)))
    return tasks


def run_task(cfg: ExperimentConfig, task: GridTask) -> TaskResult:
    """All configured strategies on one (size, severity, seed) instance; errors are collected, not raised."""
    start = time.perf_counter()
    result = TaskResult(task)
    try:
        instance = build_instance(_topology(cfg, task.n_rus), cfg.instance, seed=task.seed)
        state_t0 = initial_placement(instance)
        scenario = sample_failure(instance, task.severity, task.seed)
    except Exception as exc:
        result.errors.append(f"n_rus={task.n_rus} severity={task.severity} seed={task.seed}: setup failed: {exc!r}")
        return result
    if cfg.write_plans:
        result.case = case_to_dict(instance, scenario)
    for strategy in cfg.strategies:
        try:
            run = play_instance(
                instance, scenario, strategy, cfg.timing, cfg.solver, cfg.coverage, state_t0=state_t0
            )
        except InstanceError as exc:
            result.errors.append(str(exc))
            continue
        result.rows.append(run.row)
        if cfg.write_traces:
            result.traces[strategy] = run.trace
        if run.outcome.plan is not None and cfg.write_plans:
            result.plan = plan_to_dict(run.outcome.plan)
    result.wall_s = time.perf_counter() - start
    return result


def _run_packed(args) -> TaskResult:
    return run_task(*args)


def iter_grid(cfg: ExperimentConfig, jobs: int = 1) -> Iterator[TaskResult]:
    """Results in grid order, whatever the worker count."""
    tasks = grid_tasks(cfg)
    if jobs <= 1:
        for task in tasks:
            yield run_task(cfg, task)
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        yield from pool.map(_run_packed, [(cfg, t) for t in tasks], chunksize=1)


def run_grid(cfg: ExperimentConfig, jobs: int = 1) -> list[TaskResult]:
    return list(iter_grid(cfg, jobs))


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def metrics_csv(rows: Iterable[MetricsRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    for row in rows:
        writer.writerow([format_value(getattr(row, c)) for c in METRICS_COLUMNS])
    return buf.getvalue()


def trace_csv(trace: UtilityTrace) -> str:
    lines = ["time_s,utility_bps"]
    lines.extend(f"{t:.9g},{u}" for t, u in trace.samples)
    return "\n".join(lines) + "\n"


def _summary_floats(obj):
    if isinstance(obj, float):
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: _summary_floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_summary_floats(v) for v in obj]
    return obj


class OutputWriter:
    """Writes per-task artifacts as results arrive, then metrics.csv and summary.json."""

    def __init__(self, cfg: ExperimentConfig, out_dir: str):
        self.cfg = cfg
        self.out_dir = out_dir
        self.rows: list[MetricsRow] = []
        self.failures: list[str] = []
        self.instances = 0
        os.makedirs(out_dir, exist_ok=True)

    def _write(self, subdir: str, name: str, text: str) -> None:
        folder = os.path.join(self.out_dir, subdir)
        os.makedirs(folder, exist_ok=True)
        with open(os.path.join(folder, name), "w", encoding="utf-8", newline="") as fh:
            fh.write(text)

    def add(self, res: TaskResult) -> None:
        self.instances += 1
        self.rows.extend(res.rows)
        self.failures.extend(res.errors)
        t = res.task
        sev = format_value(float(t.severity))
        for strategy, trace in res.traces.items():
            self._write(os.path.join("traces", f"n{t.n_rus}"), f"trace_{sev}_{t.seed}_{strategy}.csv", trace_csv(trace))
        if res.case is not None:
            sub = os.path.join("plans", f"n{t.n_rus}")
            self._write(sub, f"case_{sev}_{t.seed}.json", json.dumps(res.case))
            if res.plan is not None:
                self._write(sub, f"plan_{sev}_{t.seed}.json", json.dumps(res.plan, indent=1) + "\n")

    def finish(self, wall_s: float) -> dict:
        with open(os.path.join(self.out_dir, "metrics.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(metrics_csv(self.rows))
        groups = []
        for (sev, n, strategy), stats in aggregate(self.rows).items():
            groups.append({"severity": sev, "n_rus": n, "strategy": strategy, **stats})
        summary = {
            "provenance": {
                "tool": "ran-resilience",
                "version": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "config": config_to_dict(self.cfg),
            },
            "notes": ["coverage_expansion is a calibrated baseline, not a physical model"],
            "instances": self.instances,
            "rows": len(self.rows),
            "failures": self.failures,
            "groups": _summary_floats(groups),
            "wall_time_s": round(wall_s, 3),
        }
        with open(os.path.join(self.out_dir, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
        return summary


def write_outputs(cfg: ExperimentConfig, results: list[TaskResult], out_dir: str, wall_s: float) -> dict:
    """Write every artifact for already collected results; returns the summary document."""
    writer = OutputWriter(cfg, out_dir)
    for res in results:
        writer.add(res)
    return writer.finish(wall_s)
