"""Stochastic heat equation lab on finite graphs with absorbing boundary.

Construct discrete model spaces, verify the weak-disorder criterion, build
invariant random fields by backward pullback, and check their harmonic /
Martin-boundary structure with certified tolerances.
"""

__version__ = "0.1.0"

from .geometry import (Automorphism, GraphSpace, build_path, build_regular_tree,
                       load_edge_list, tree_automorphism)
from .heat import (Generator, GreenMatrix, HeatKernelCache, apply_semigroup,
                   build_generator, green_function, heat_kernel, make_cache)
from .potential import (BoundaryMeasure, HarmonicFunction, MartinKernelMatrix,
                        harmonic_measure, martin_kernel, martin_representation,
                        pushforward_harmonic, solve_dirichlet)
from .noise import (CovarianceKernel, NoiseIncrements, SeedRecord,
                    build_covariance, ito_walsh_quadrature, sample_increments,
                    transform_noise)
from .disorder import (DisorderReport, lambda_exact_white, lambda_quadrature,
                       neumann_second_moment_bound, weak_disorder_margin)
from .solver import (FieldPath, Nonlinearity, SimConfig,
                     covariance_recursion_linear, make_sim_config,
                     second_moment_mc, solve_path, step)
from .invariant import (attraction_run, cauchy_diagnostic, equivariance_check,
                        estimate_invariant_field, fluctuation_run,
                        gh_covariance_quadrature, pullback_run)
from .stats import ExperimentReport, MomentAccumulator, Verdict, sup_over_observation
