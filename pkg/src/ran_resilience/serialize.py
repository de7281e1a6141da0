"""JSON documents for instances and failure cases.

A case document pins everything needed to rebuild the in-failure state:
topology, instance parameters, cloud capacities, every user's rate, and the
failed clouds. Demand, the t0 placement and the cascade are re-derived,
which is deterministic.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from typing import Any, Mapping

from .failure import DisruptionReport, FailureScenario, in_failure_state, propagate_cascade
from .ran_model import (
    CloudSite,
    InstanceParams,
    NetworkState,
    RadioConfig,
    RadioUnit,
    SystemInstance,
    UserDemand,
    default_demand_profile,
    initial_placement,
)
from .topology import load_topology, topology_to_dict

__all__ = [
    "CaseError",
    "FailureCase",
    "params_to_dict",
    "params_from_dict",
    "instance_to_dict",
    "instance_from_dict",
    "case_to_dict",
    "case_from_dict",
    "load_case",
]


class CaseError(ValueError):
    pass


@dataclass(frozen=True)
class FailureCase:
    instance: SystemInstance
    scenario: FailureScenario
    state_t0: NetworkState
    report: DisruptionReport
    state_in_failure: NetworkState


def params_to_dict(params: InstanceParams) -> dict[str, Any]:
    doc = asdict(params)
    doc["rate_band_bps"] = list(params.rate_band_bps)
    return doc


def params_from_dict(doc: Mapping[str, Any]) -> InstanceParams:
    known = {f.name for f in fields(InstanceParams)}
    unknown = set(doc) - known
    if unknown:
        raise CaseError(f"unknown instance parameters: {sorted(unknown)}")
    values = dict(doc)
    if "radio" in values:
        radio = values["radio"]
        radio_known = {f.name for f in fields(RadioConfig)}
        if not isinstance(radio, Mapping) or set(radio) - radio_known:
            raise CaseError(f"radio must be a table with keys among {sorted(radio_known)}")
        values["radio"] = RadioConfig(**radio)
    if "rate_band_bps" in values:
        values["rate_band_bps"] = tuple(values["rate_band_bps"])
    return InstanceParams(**values)


def instance_to_dict(instance: SystemInstance) -> dict[str, Any]:
    return {
        "topology": topology_to_dict(instance.topology),
        "params": params_to_dict(instance.params),
        "clouds": [{"id": c.id, "capacity_cu": c.capacity_cu} for c in instance.clouds],
        "radios": [
            {"id": r.id, "users": [[u.id, u.rate_bps] for u in r.users]} for r in instance.radios
        ],
    }


def instance_from_dict(doc: Mapping[str, Any]) -> SystemInstance:
    try:
        topology = load_topology(doc["topology"])
        params = params_from_dict(doc.get("params", {}))
        clouds = tuple(CloudSite(int(c["id"]), float(c["capacity_cu"])) for c in doc["clouds"])
        radios = tuple(
            RadioUnit(int(r["id"]), tuple(UserDemand(int(u), int(rate)) for u, rate in r["users"]))
            for r in doc["radios"]
        )
        instance = SystemInstance(topology, radios, {}, clouds, params.radio, params)
    except (KeyError, TypeError, ValueError) as exc:
        raise CaseError(f"malformed instance document: {exc}") from exc
    if sorted(c.id for c in clouds) != sorted(topology.clouds):
        raise CaseError("cloud list does not match the topology's cloud nodes")
    return SystemInstance(topology, radios, default_demand_profile(instance), clouds, params.radio, params)


def case_to_dict(instance: SystemInstance, scenario: FailureScenario) -> dict[str, Any]:
    return {
        "instance": instance_to_dict(instance),
        "failure": {
            "severity": scenario.severity,
            "seed": scenario.seed,
            "failed_clouds": sorted(scenario.failed_clouds),
        },
    }


def case_from_dict(doc: Mapping[str, Any]) -> FailureCase:
    if not isinstance(doc, Mapping) or "instance" not in doc or "failure" not in doc:
        raise CaseError("case document needs 'instance' and 'failure' objects")
    instance = instance_from_dict(doc["instance"])
    try:
        failure = doc["failure"]
        scenario = FailureScenario(
            float(failure.get("severity", 0.0)),
            frozenset(int(c) for c in failure["failed_clouds"]),
            int(failure.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CaseError(f"malformed failure object: {exc}") from exc
    if not scenario.failed_clouds <= set(instance.topology.clouds):
        raise CaseError("failed_clouds names nodes that are not clouds")
    state_t0 = initial_placement(instance)
    report = propagate_cascade(state_t0, scenario, instance)
    return FailureCase(instance, scenario, state_t0, report, in_failure_state(state_t0, report, instance))


def load_case(text: str) -> FailureCase:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"invalid JSON: {exc}") from exc
    return case_from_dict(doc)
