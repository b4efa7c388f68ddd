"""Exact optimal-transport distances between empirical path measures."""

from .assignment import assignment_cost, solve_assignment
from .matching import max_matching
from .metrics import (
    InequalityReport,
    InequalityViolation,
    SizeMismatch,
    check_inequalities,
    cost_matrix,
    distance_record,
    pairwise_sup,
    prokhorov,
    prokhorov_candidates,
    prokhorov_cost,
    wasserstein1,
    wasserstein1_cost,
)
from .oracles import brute_prokhorov, brute_wasserstein1

__all__ = [
    "InequalityReport",
    "InequalityViolation",
    "SizeMismatch",
    "assignment_cost",
    "brute_prokhorov",
    "brute_wasserstein1",
    "check_inequalities",
    "cost_matrix",
    "distance_record",
    "max_matching",
    "pairwise_sup",
    "prokhorov",
    "prokhorov_candidates",
    "prokhorov_cost",
    "solve_assignment",
    "wasserstein1",
    "wasserstein1_cost",
]
