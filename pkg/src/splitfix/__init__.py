"""
splitfix: fixed-point iteration and monotone operator splitting
toolkit with regularity-tagged operator calculus, trace-producing
drivers, application solvers, and network Lipschitz certification.
"""

from .linalg import (LinMap, BlockVector, as_vector, as_matrix,
                     operator_norm, adjoint_check, sym_eig, svd)
from .operators import (RegularityTag, OperatorRef, SetDescriptor,
                        FunctionDescriptor, MonotoneOp, project, prox,
                        prox_conjugate, func_value, soft_threshold, relax,
                        compose, combine, forward_step, lipschitz_to_averaged,
                        cocoercive_sum, three_composite, reflect, residual,
                        Constant, Explicit, SqrtBand,
                        validate_relaxation_schedule, TagDegradation)
from .drivers import (StopRule, IterTrace, Rng, BlockSchedule, RoundRobin,
                      RandomSubset, CONVERGED, MAX_ITERATIONS,
                      PRECONDITION_VIOLATED, banach_picard, km_iterate,
                      composite_km, cyclic_iterate, block_update_iterate,
                      stochastic_km, random_block_km,
                      hybrid_steepest_descent)
from .splitting import (InclusionProblem, CompositeProblem, SystemProblem,
                        PrimalDualTrace, douglas_rachford, tseng_fbf,
                        forward_backward, davis_yin, three_op_primal_dual,
                        product_space_lift, composite_dy, mlfb_primal_dual,
                        preconditioned_fb_pd, projective_split, admm,
                        stochastic_fb, block_coordinate_dr,
                        block_coordinate_fb, block_update_fb, kkt_residual)
from .applications import (FeasibilitySpec, GameSpec, NetSpecLayeredDenoiser,
                           MismatchSpec, ObservationSpec, pocs,
                           split_feasibility, inconsistent_feasibility,
                           lasso_logistic, lasso_objective, graphical_lasso,
                           robust_pca, matrix_completion, cycles, nash_fbf,
                           nash_dy, best_response_residual, nash_n45_game,
                           nash_bilinear_game, pnp_fb, pnp_dr, pnp_admm,
                           mismatched_fb, nonlinear_observation_solve,
                           problem_from_json)
from .netanalysis import (FeedforwardNet, Certificate, theta,
                          lipschitz_certificate, averagedness_check,
                          smallest_alpha, recurrent_iterate, ACTIVATIONS)

__version__ = '0.1.0'
