"""Command-line front door.

Exit codes: 0 success, 1 a check or an instance failed, 2 unusable input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from typing import Optional, Sequence

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .ran_model import InfeasibleInstance
from .recovery import (
    OracleRefused,
    SolveLimits,
    brute_force_oracle,
    build_model,
    plan_from_dict,
    plan_to_dict,
    solve,
    verify_plan,
)
from .recovery.oracle import ORACLE_LIMITS, random_case
from .serialize import CaseError, case_to_dict, load_case
from .topology import TopologyError, TopologyParams, build_ring_topology, load_topology, save_topology

__all__ = ["main", "build_parser", "OUT_ENV"]

OUT_ENV = "RAN_RESILIENCE_OUT"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, base_seed=args.seed, oracle=replace(cfg.oracle, base_seed=args.seed))
    if getattr(args, "time_limit", None) is not None:
        cfg = replace(cfg, solver=replace(cfg.solver, time_s=args.time_limit))
    if getattr(args, "ring", None) is not None:
        cfg = replace(cfg, ring_sizes=(args.ring,), topology_file=None)
    if getattr(args, "topology", None) is not None:
        cfg = replace(cfg, topology_file=os.path.abspath(args.topology))
    if getattr(args, "jobs", None) is not None:
        cfg = replace(cfg, jobs=args.jobs)
    out = getattr(args, "out", None) or cfg.output_dir or os.environ.get(OUT_ENV) or "results"
    cfg = replace(cfg, output_dir=out)
    cfg.validate()
    return cfg


def cmd_run(args) -> int:
    from .experiment import OutputWriter, iter_grid

    try:
        cfg = _config(args)
    except ConfigError as exc:
        _err(f"invalid config: {exc}")
        return EXIT_USAGE
    start = time.perf_counter()
    writer = OutputWriter(cfg, cfg.output_dir)
    for i, res in enumerate(iter_grid(cfg, cfg.jobs), 1):
        writer.add(res)
        if args.verbose:
            t = res.task
            _err(f"[{i}] n={t.n_rus} severity={t.severity} seed={t.seed} {res.wall_s:.2f}s")
    summary = writer.finish(time.perf_counter() - start)
    print(f"{summary['rows']} rows from {summary['instances']} instances written to {cfg.output_dir}")
    if summary["failures"]:
        _err(f"{len(summary['failures'])} failures:")
        for line in summary["failures"]:
            _err(f"  {line}")
        return EXIT_FAIL
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        case = load_case(_read(args.instance))
        plan = plan_from_dict(json.loads(_read(args.plan)), case.instance.topology)
    except (OSError, ValueError, KeyError, TypeError, InfeasibleInstance) as exc:
        _err(f"cannot load inputs: {exc}")
        return EXIT_USAGE
    report = verify_plan(plan, case.report, case.instance, case.state_in_failure)
    print(report)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_solve(args) -> int:
    try:
        case = load_case(_read(args.instance))
    except (OSError, ValueError, InfeasibleInstance) as exc:
        _err(f"cannot load instance: {exc}")
        return EXIT_USAGE
    limits = SolveLimits(time_s=args.time_limit, node_cap=args.node_cap)
    plan = solve(build_model(case.report, case.instance, case.state_in_failure, materialize=False), limits)
    check = verify_plan(plan, case.report, case.instance, case.state_in_failure)
    text = json.dumps(plan_to_dict(plan), indent=1)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    status = EXIT_OK if check.passed else EXIT_FAIL
    if not check.passed:
        _err(str(check))
    if args.oracle_check:
        try:
            ref = brute_force_oracle(case.report, case.instance, case.state_in_failure)
        except OracleRefused as exc:
            _err(f"oracle check skipped: {exc}")
        else:
            if ref.objective_value != plan.objective_value:
                _err(f"oracle objective {ref.objective_value} != solver objective {plan.objective_value}")
                status = EXIT_FAIL
            else:
                _err(f"oracle check passed: objective {plan.objective_value}")
    return status


def cmd_oracle(args) -> int:
    try:
        cfg = _config(args)
    except ConfigError as exc:
        _err(f"invalid config: {exc}")
        return EXIT_USAGE
    o = cfg.oracle
    if o.max_disrupted > ORACLE_LIMITS["disrupted_rus"] or o.max_clouds_up > ORACLE_LIMITS["clouds_up"] \
            or o.max_k > ORACLE_LIMITS["paths_k"]:
        _err(f"oracle guard rails {o} exceed the limits {ORACLE_LIMITS}")
        return EXIT_USAGE
    bound = args.bound or o.bound
    limits = SolveLimits(time_s=cfg.solver.time_s, node_cap=None)
    start = time.perf_counter()
    mismatches = 0
    for i in range(o.instances):
        seed = o.base_seed + i
        case = random_case(seed, o.max_disrupted, o.max_clouds_up, o.max_k, o.severity)
        try:
            ref = brute_force_oracle(case.report, case.instance, case.state_in_failure)
        except OracleRefused as exc:
            _err(f"seed {seed}: {exc}")
            return EXIT_USAGE
        plan = solve(build_model(case.report, case.instance, case.state_in_failure, materialize=False), limits, bound)
        check = verify_plan(plan, case.report, case.instance, case.state_in_failure)
        if plan.objective_value != ref.objective_value or not check.passed or not plan.stats.proven_optimal:
            mismatches += 1
            print(f"MISMATCH seed={seed}: solver {plan.objective_value} oracle {ref.objective_value} "
                  f"proven={plan.stats.proven_optimal} verified={check.passed}")
            print(json.dumps(case_to_dict(case.instance, case.scenario)))
    elapsed = time.perf_counter() - start
    print(f"{o.instances - mismatches}/{o.instances} instances match (bound={bound}) in {elapsed:.1f}s")
    return EXIT_OK if mismatches == 0 else EXIT_FAIL


def cmd_topology_gen(args) -> int:
    try:
        params = TopologyParams(paths_k=args.k, core_site=args.core_site)
        text = save_topology(build_ring_topology(args.n, params))
    except TopologyError as exc:
        _err(str(exc))
        return EXIT_USAGE
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_topology_check(args) -> int:
    try:
        topo = load_topology(_read(args.file))
    except OSError as exc:
        _err(f"cannot read {args.file}: {exc.strerror}")
        return EXIT_USAGE
    except TopologyError as exc:
        _err(f"invalid topology: {exc}")
        return EXIT_FAIL
    missing = [(s, d) for s, d in topo.required_pairs() if s != d and not topo.paths(s, d)]
    print(f"{len(topo.ru_sites)} RU sites, {len(topo.clouds)} clouds, {len(topo.links)} links, paths_k={topo.paths_k}")
    for s, d in missing[:20]:
        print(f"no path {s} -> {d}")
    return EXIT_OK if not missing else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ran-resilience", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment grid")
    run.add_argument("--config", help="TOML or JSON experiment config")
    run.add_argument("--out", help=f"output directory (falls back to ${OUT_ENV}, then ./results)")
    run.add_argument("--jobs", type=int, help="worker processes")
    run.add_argument("--time-limit", type=float, help="solver time limit per instance, seconds")
    run.add_argument("--seed", type=int, help="base seed")
    run.add_argument("--ring", type=int, help="run a single ring size instead of the configured ones")
    run.add_argument("--topology", help="topology JSON file; overrides --ring and ring_sizes")
    run.add_argument("-v", "--verbose", action="store_true", help="report each finished instance")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="check a plan against a failure case")
    ver.add_argument("plan", help="plan JSON")
    ver.add_argument("instance", help="failure case JSON")
    ver.set_defaults(func=cmd_verify)

    sol = sub.add_parser("solve", help="solve one failure case")
    sol.add_argument("instance", help="failure case JSON")
    sol.add_argument("--time-limit", type=float, default=300.0)
    sol.add_argument("--node-cap", type=int)
    sol.add_argument("--oracle-check", action="store_true", help="compare with the exhaustive oracle when it applies")
    sol.add_argument("--out", help="plan JSON destination (default stdout)")
    sol.set_defaults(func=cmd_solve)

    orc = sub.add_parser("oracle", help="compare the solver with the exhaustive oracle on random small cases")
    orc.add_argument("--config", help="TOML or JSON config; its [oracle] table applies")
    orc.add_argument("--seed", type=int, help="base seed")
    orc.add_argument("--time-limit", type=float)
    orc.add_argument("--bound", choices=("knapsack", "trivial"), help="search bound (trivial is a test hook)")
    orc.set_defaults(func=cmd_oracle)

    topo = sub.add_parser("topology", help="generate or check topology files")
    tsub = topo.add_subparsers(dest="topology_command", required=True)
    gen = tsub.add_parser("gen", help="write a ring topology as JSON")
    gen.add_argument("--n", type=int, required=True, help="number of RU sites")
    gen.add_argument("--k", type=int, default=3, help="paths per endpoint pair")
    gen.add_argument("--core-site", type=int, default=0)
    gen.add_argument("--out", help="destination file (default stdout)")
    gen.set_defaults(func=cmd_topology_gen)
    chk = tsub.add_parser("check", help="validate a topology JSON file")
    chk.add_argument("file")
    chk.set_defaults(func=cmd_topology_check)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
