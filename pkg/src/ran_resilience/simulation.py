"""Event timeline, per-TTI utility traces and per-instance metrics."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .baselines import (
    STRATEGIES,
    CoverageExpansionParams,
    RecoveryOutcome,
    coverage_expansion,
    no_recovery,
)
from .failure import DisruptionReport, FailureScenario, in_failure_state, propagate_cascade
from .ran_model import NetworkState, SystemInstance, compute_utility, initial_placement
from .recovery import SolveLimits, SolveStats, apply_plan, build_model, solve, verify_plan

__all__ = [
    "TimingParams",
    "Timeline",
    "UtilityTrace",
    "MetricsRow",
    "InstanceError",
    "optimizer_recovery",
    "run_strategy",
    "InstanceRun",
    "run_instance",
    "play_instance",
    "check_trace_shape",
    "aggregate",
    "cpu_utilization",
    "relative_gain",
]


@dataclass(frozen=True)
class TimingParams:
    tti_s: float = 1e-3
    failure_time_s: float = 0.1
    detection_wait_s: float = 0.04
    reinstantiation_window_s: float = 1.0
    tail_s: float = 0.1
    # Stand-in for the measured solve time, for reproducible traces.
    solve_time_s: Optional[float] = None

    def __post_init__(self):
        if not self.tti_s > 0:
            raise ValueError("tti_s must be positive")
        for name in ("failure_time_s", "detection_wait_s", "reinstantiation_window_s", "tail_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.solve_time_s is not None and self.solve_time_s < 0:
            raise ValueError("solve_time_s must be non-negative")


@dataclass(frozen=True)
class Timeline:
    t0_s: float
    td_s: float
    tu_s: float
    ts_s: float
    tr_s: float

    def __post_init__(self):
        if not self.t0_s <= self.td_s <= self.tu_s <= self.ts_s <= self.tr_s:
            raise ValueError("timeline must satisfy t0 <= td <= tu <= ts <= tr")


@dataclass(frozen=True)
class UtilityTrace:
    tti_s: float
    samples: tuple[tuple[float, int], ...]

    def __post_init__(self):
        times = [t for t, _ in self.samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("trace samples must be strictly increasing in time")


@dataclass(frozen=True)
class MetricsRow:
    n_rus: int
    severity: float
    seed: int
    strategy: str
    mu_t0: int
    mu_td: int
    mu_tr: int
    resilience: float
    recovery_gain_vs_no_recovery: Optional[float]
    recovery_gain_vs_baseline: Optional[float]
    cpu_before: float
    cpu_after: float
    disrupted_rus: int
    recovered_rus: int
    solver_nodes: int = 0
    solver_best_bound: int = 0
    solver_proven_optimal: bool = True
    solve_wall_time_s: float = field(default=0.0, compare=False)


class InstanceError(RuntimeError):
    """A strategy failed; carries the instance identifiers."""

    def __init__(self, n_rus: int, severity: float, seed: int, strategy: str, cause: BaseException):
        self.n_rus, self.severity, self.seed, self.strategy = n_rus, severity, seed, strategy
        super().__init__(f"n_rus={n_rus} severity={severity} seed={seed} strategy={strategy}: {cause!r}")


def relative_gain(value: float, reference: float) -> Optional[float]:
    """``(value - reference) / reference``, or None when the reference is zero."""
    if reference <= 0:
        return None
    return (value - reference) / reference


def cpu_utilization(state: NetworkState, instance: SystemInstance) -> tuple[float, float]:
    """Compute units in use on operational clouds, and their share of operational capacity."""
    used = 0.0
    total = 0.0
    for cloud in instance.clouds:
        if cloud.id in state.cloud_up:
            used += cloud.capacity_cu - state.residual_compute[cloud.id]
            total += cloud.capacity_cu
    return used, (used / total if total > 0 else 0.0)


def optimizer_recovery(
    state_in_failure: NetworkState,
    report: DisruptionReport,
    instance: SystemInstance,
    limits: SolveLimits | None = None,
) -> tuple[RecoveryOutcome, SolveStats]:
    model = build_model(report, instance, state_in_failure, materialize=False)
    plan = solve(model, limits)
    state = apply_plan(state_in_failure, plan, instance, report)
    restored = {ru: instance.ru_demand_bps(ru) for ru in plan.recovered}
    outcome = RecoveryOutcome("optimizer", state, compute_utility(state, instance), restored, plan)
    return outcome, plan.stats


def run_strategy(
    strategy: str,
    state_in_failure: NetworkState,
    report: DisruptionReport,
    instance: SystemInstance,
    limits: SolveLimits | None = None,
    coverage: CoverageExpansionParams | None = None,
) -> tuple[RecoveryOutcome, SolveStats, float]:
    """Outcome, solver stats and wall time of one strategy."""
    start = time.perf_counter()
    stats = SolveStats()
    if strategy == "optimizer":
        outcome, stats = optimizer_recovery(state_in_failure, report, instance, limits)
    elif strategy == "coverage_expansion":
        outcome = coverage_expansion(state_in_failure, report, coverage or CoverageExpansionParams(), instance)
    elif strategy == "no_recovery":
        outcome = no_recovery(state_in_failure, instance)
    else:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    return outcome, stats, time.perf_counter() - start


def _trace(
    timing: TimingParams, timeline: Timeline, mu_t0: int, mu_td: int, completions: list[tuple[float, int]]
) -> UtilityTrace:
    end = timeline.tr_s + timing.tail_s
    steps = int(math.ceil(end / timing.tti_s - 1e-9))
    done = np.array(sorted(t for t, _ in completions)) if completions else np.zeros(0)
    gains = np.cumsum([g for _, g in sorted(completions)]) if completions else np.zeros(0)
    samples = []
    for k in range(steps + 1):
        t = round(k * timing.tti_s, 12)
        if t < timeline.td_s:
            u = mu_t0
        else:
            count = int(np.searchsorted(done, t, side="right"))
            u = mu_td + (int(gains[count - 1]) if count else 0)
        samples.append((t, u))
    return UtilityTrace(timing.tti_s, tuple(samples))


@dataclass(frozen=True)
class InstanceRun:
    trace: UtilityTrace
    row: MetricsRow
    timeline: Timeline
    outcome: RecoveryOutcome


def run_instance(
    instance: SystemInstance,
    scenario: FailureScenario,
    strategy: str,
    timing: TimingParams | None = None,
    limits: SolveLimits | None = None,
    coverage: CoverageExpansionParams | None = None,
    state_t0: NetworkState | None = None,
) -> tuple[UtilityTrace, MetricsRow, Timeline]:
    """Play one failure scenario under one strategy.

    The trace holds utility at every TTI from t0 until the reinstantiation
    window has closed. Each restored RU comes back at a seeded uniform time
    inside the window, which gives the staircase ramp.
    """
    run = play_instance(instance, scenario, strategy, timing, limits, coverage, state_t0)
    return run.trace, run.row, run.timeline


def play_instance(
    instance: SystemInstance,
    scenario: FailureScenario,
    strategy: str,
    timing: TimingParams | None = None,
    limits: SolveLimits | None = None,
    coverage: CoverageExpansionParams | None = None,
    state_t0: NetworkState | None = None,
) -> InstanceRun:
    """Like :func:`run_instance`, also returning the strategy's outcome."""
    timing = timing or TimingParams()
    n_rus = len(instance.ru_ids)
    try:
        state_t0 = state_t0 or initial_placement(instance)
        report = propagate_cascade(state_t0, scenario, instance)
        state_tf = in_failure_state(state_t0, report, instance)
        outcome, stats, wall = run_strategy(strategy, state_tf, report, instance, limits, coverage)
        if outcome.plan is not None and not verify_plan(outcome.plan, report, instance, state_tf).passed:
            raise RuntimeError("emitted plan failed verification")
        baseline = outcome if strategy == "coverage_expansion" else coverage_expansion(
            state_tf, report, coverage or CoverageExpansionParams(), instance
        )
    except Exception as exc:
        raise InstanceError(n_rus, scenario.severity, scenario.seed, strategy, exc) from exc

    mu_t0 = compute_utility(state_t0, instance)
    mu_td = compute_utility(state_tf, instance)
    mu_tr = outcome.utility_bps

    td = timing.failure_time_s
    tu = td + timing.detection_wait_s
    ts = tu + (timing.solve_time_s if timing.solve_time_s is not None else wall)
    tr = ts + timing.reinstantiation_window_s
    timeline = Timeline(0.0, td, tu, ts, tr)
    rng = np.random.default_rng([scenario.seed, STRATEGIES.index(strategy)])
    completions = []
    for ru in sorted(outcome.restored):
        completions.append((ts + float(rng.uniform(0.0, timing.reinstantiation_window_s)), outcome.restored[ru]))
    trace = _trace(timing, timeline, mu_t0, mu_td, completions)

    row = MetricsRow(
        n_rus=n_rus,
        severity=scenario.severity,
        seed=scenario.seed,
        strategy=strategy,
        mu_t0=mu_t0,
        mu_td=mu_td,
        mu_tr=mu_tr,
        resilience=mu_tr / mu_t0 if mu_t0 > 0 else 1.0,
        recovery_gain_vs_no_recovery=relative_gain(mu_tr, mu_td),
        recovery_gain_vs_baseline=relative_gain(mu_tr, baseline.utility_bps),
        cpu_before=cpu_utilization(state_tf, instance)[0],
        cpu_after=cpu_utilization(outcome.state, instance)[0],
        disrupted_rus=len(report.ru_disrupted),
        recovered_rus=len(outcome.restored),
        solver_nodes=stats.nodes_explored,
        solver_best_bound=stats.best_bound,
        solver_proven_optimal=stats.proven_optimal,
        solve_wall_time_s=wall,
    )
    return InstanceRun(trace, row, timeline, outcome)


def check_trace_shape(trace: UtilityTrace, timeline: Timeline, mu_t0: int, mu_td: int, mu_tr: int) -> list[str]:
    """Deviations from drop, plateau, non-decreasing ramp, plateau (empty when the shape holds)."""
    problems = []
    if not trace.samples:
        return ["trace is empty"]
    for t, u in trace.samples:
        if t < timeline.td_s and u != mu_t0:
            problems.append(f"t={t}: {u} before the failure, expected {mu_t0}")
        elif timeline.td_s <= t < timeline.ts_s and u != mu_td:
            problems.append(f"t={t}: {u} before recovery starts, expected {mu_td}")
        elif t >= timeline.tr_s and u != mu_tr:
            problems.append(f"t={t}: {u} after recovery, expected {mu_tr}")
    ramp = [u for t, u in trace.samples if timeline.ts_s <= t <= timeline.tr_s]
    if any(b < a for a, b in zip(ramp, ramp[1:])):
        problems.append("utility decreases during the recovery ramp")
    if ramp and not (mu_td <= ramp[0] and ramp[-1] <= mu_tr):
        problems.append("recovery ramp leaves [mu_td, mu_tr]")
    if timeline.tu_s - timeline.td_s < 0:
        problems.append("trigger precedes the failure")
    if trace.samples[-1][1] != mu_tr:
        problems.append("last sample differs from the recovered utility")
    return problems


_SUMMARY_FIELDS = ("resilience", "recovery_gain_vs_no_recovery", "recovery_gain_vs_baseline")


def aggregate(rows: Iterable[MetricsRow]) -> dict[tuple[float, int, str], dict[str, dict[str, float | int]]]:
    """Mean, population std, min and max per (severity, n_rus, strategy) group.

    Undefined gains are left out of their statistic; ``count`` says how many
    rows contributed.
    """
    groups: dict[tuple[float, int, str], list[MetricsRow]] = {}
    for row in rows:
        groups.setdefault((row.severity, row.n_rus, row.strategy), []).append(row)
    table = {}
    for key in sorted(groups):
        stats = {}
        for name in _SUMMARY_FIELDS:
            values = sorted(v for v in (getattr(r, name) for r in groups[key]) if v is not None)
            if values:
                arr = np.array(values)
                stats[name] = {
                    "count": len(values),
                    "mean": float(arr.mean()),
                    "std": float(arr.std()),
                    "min": float(arr.min()),
                    "max": float(arr.max()),
                }
            else:
                stats[name] = {"count": 0}
        table[key] = stats
    return table
