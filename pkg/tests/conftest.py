import os

import pytest
from hypothesis import HealthCheck, settings

from ran_resilience.failure import in_failure_state, propagate_cascade, sample_failure
from ran_resilience.ran_model import InstanceParams, build_instance, initial_placement
from ran_resilience.topology import TopologyParams, build_ring_topology

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", deadline=None, max_examples=400)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


class Case:
    """A ring instance carried through t0 placement and one failure."""

    def __init__(self, n, severity=0.0, seed=0, params=None, topo_params=None, failed=None):
        from ran_resilience.failure import FailureScenario

        self.topology = build_ring_topology(n, topo_params or TopologyParams())
        self.instance = build_instance(self.topology, params or InstanceParams(), seed=seed)
        self.state_t0 = initial_placement(self.instance)
        if failed is None:
            self.scenario = sample_failure(self.instance, severity, seed)
        else:
            self.scenario = FailureScenario(len(failed) / n, frozenset(failed), seed)
        self.report = propagate_cascade(self.state_t0, self.scenario, self.instance)
        self.state = in_failure_state(self.state_t0, self.report, self.instance)


@pytest.fixture
def make_case():
    return Case
