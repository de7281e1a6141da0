"""Recovery optimization: model building, exact search, verification and plan application."""

from .model import Option, RecoveryModel, Row, RuCandidates, build_model, ru_candidates
from .oracle import ORACLE_LIMITS, OracleRefused, brute_force_oracle
from .plan import (
    FAMILIES,
    ConstraintReport,
    Decision,
    PlanRejected,
    RecoveryPlan,
    SolveStats,
    apply_plan,
    plan_from_dict,
    plan_to_dict,
    verify_plan,
)
from .solver import SolveLimits, solve

__all__ = [
    "FAMILIES",
    "ORACLE_LIMITS",
    "ConstraintReport",
    "Decision",
    "Option",
    "OracleRefused",
    "PlanRejected",
    "RecoveryModel",
    "RecoveryPlan",
    "Row",
    "RuCandidates",
    "SolveLimits",
    "SolveStats",
    "apply_plan",
    "brute_force_oracle",
    "build_model",
    "plan_from_dict",
    "plan_to_dict",
    "ru_candidates",
    "solve",
    "verify_plan",
]
