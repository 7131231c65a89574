"""Workbench for online assortment with reusable, shock-driven inventory.

Library layout: penalty functions, choice models and the assortment
oracle, instance generators, the interval-assignment machinery, online
policies, the deterministic simulation engine, and the analysis stack
(ratio bound, LP benchmark, dual certification).
"""

from .analysis import (DualCertificate, GammaBound, LpProblem, LpSolution,
                       NumericalFailureError, analytic_opt, build_lp,
                       certify_run, dual_expectation_check, gamma_bound,
                       solve_lp)
from .choice import (ChoiceModel, FeasibleCollection, InstanceTooLargeError,
                     assortment_oracle, choice_probability, sample_choice)
from .engine import RunStats, SimTrace, monte_carlo, run
from .iap import (IapAssignment, IapInstance, chains_from_labels,
                  check_global_dominance, check_local_dominance,
                  check_partition_monotonicity, coverage, parse_intervals)
from .iap import solve as iap_solve
from .instance import (Instance, Product, RandomMnlParams, StylizedParams,
                       apply_negative_shocks, gen_random_mnl, gen_stylized,
                       with_stochastic_durations)
from .penalty import NotInvertibleError, PenaltyFunction, check_concave
from .policy import PolicyKind

__all__ = [
    "ChoiceModel", "DualCertificate", "FeasibleCollection", "GammaBound",
    "IapAssignment", "IapInstance", "Instance", "InstanceTooLargeError",
    "LpProblem", "LpSolution", "NotInvertibleError", "NumericalFailureError",
    "PenaltyFunction", "PolicyKind", "Product", "RandomMnlParams", "RunStats",
    "SimTrace", "StylizedParams", "analytic_opt", "apply_negative_shocks",
    "assortment_oracle", "build_lp", "certify_run", "chains_from_labels",
    "check_concave", "check_global_dominance", "check_local_dominance",
    "check_partition_monotonicity", "choice_probability", "coverage",
    "dual_expectation_check", "gamma_bound", "gen_random_mnl", "gen_stylized",
    "iap_solve", "monte_carlo", "parse_intervals", "run", "sample_choice",
    "solve_lp", "with_stochastic_durations",
]

__version__ = "0.1.0"
