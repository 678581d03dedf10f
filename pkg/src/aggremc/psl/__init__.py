from .grounding import GroundRuleSet, Potential, assignment_from_labels, ground, template_distances
from .inference import (
    Assignment,
    ConvergenceWarning,
    InfeasibleAssignmentError,
    constraint_violation,
    distance_to_satisfaction,
    energy,
    is_feasible,
    map_inference,
    project_feasible,
)
from .learning import learn_weights
from .model import DEFAULT_WEIGHTS, RuleTemplate, build_model, parse_rule, read_model, write_model

__all__ = [
    "Assignment",
    "ConvergenceWarning",
    "DEFAULT_WEIGHTS",
    "GroundRuleSet",
    "InfeasibleAssignmentError",
    "Potential",
    "RuleTemplate",
    "assignment_from_labels",
    "build_model",
    "constraint_violation",
    "distance_to_satisfaction",
    "energy",
    "ground",
    "is_feasible",
    "learn_weights",
    "map_inference",
    "parse_rule",
    "project_feasible",
    "read_model",
    "template_distances",
    "write_model",
]
