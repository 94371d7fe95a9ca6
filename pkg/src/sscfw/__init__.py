"""Projection-free first-order optimization with chained short steps and
runtime certification of the descent and rate guarantees."""

from .core import (Objective, OuterStepRecord, RunTrace, TerminationCase,
                   finite_difference_grad_check, quadratic_objective,
                   spectral_radius)
from .directions import (ActiveSet, AwayFrankWolfe, DirectionChoice,
                         FaceFrankWolfe, FrankWolfe, PairwiseFrankWolfe,
                         ProductRule, ShortRetraction, afw_direction,
                         apply_bookkeeping, fdfw_direction, fw_direction,
                         initial_active_set, make_method, pfw_direction,
                         product_direction, shrink_coefficient_bound,
                         sor_direction)
from .domains import (Box, Domain, InfeasiblePointError, L1Ball, LpBall,
                      ProductDomain, RetractionUndefinedError, Simplex,
                      SublevelSet, slope_oracle)
from .rates import (Desingularizer, RateConstants, certify_objective_rate,
                    certify_tail_length, descent_rate_constants,
                    holder_envelope, pyramidal_width_bruteforce,
                    theoretical_tau, worst_case_gap, worst_case_gap_iterates)
from .ssc import (ChainTrace, DescentReport, NonTerminationError, StepRegion,
                  auxiliary_index, beta_step, min_observed_slope, outer_solve,
                  ssc, verify_descent)

__version__ = "0.1.0"
