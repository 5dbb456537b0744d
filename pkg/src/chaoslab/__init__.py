"""Quantitative propagation-of-chaos toolbox on the periodic torus.

Pieces: spectral torus grids, divergence-form interaction kernels,
entropy/Fisher/chi-square/Dirichlet divergences between joint laws and
tensorized references, a McKean-Vlasov flow solver, the N-particle
Liouville equation with its BBGKY ladder, stochastic particle systems,
a certified Grönwall hierarchy for k^beta/N^2 envelopes, and the
functional inequalities that drive the estimates.
"""

from .grid import (DensityField, MatrixField, TorusGrid, VectorField,
                   convolve, gradient, laplacian, make_grid, marginalize,
                   tensorize)
from .kernels import (KernelSpec, biot_savart, bounded_kernel,
                      check_decomposition, divergence_of_matrix,
                      gradient_kernel, load_kernel, mollify, mv_constant,
                      save_kernel, v_matrix)
from .divergences import (DivergenceLadder, TowerReport, chi_square,
                          dirichlet_energy, divergence_ladder,
                          fisher_information, relative_entropy,
                          towering_check)
from .meanfield import (FlowTrajectory, decay_fit, log_regularity,
                        save_trajectory, solve_mckean_vlasov)
from .liouville import (JointTrajectory, bbgky_residual,
                        evolution_identity_check, solve_liouville)
from .particles import (ParticleState, ParticleTrajectory, SimConfig,
                        empirical_marginal, replica_rng, simulate,
                        weak_error)
from .hierarchy import (Certificate, HierarchyParams, HierarchyTrajectory,
                        NoCertificate, TimeFunc, apriori_bound,
                        comparison_check, ent_bound,
                        generating_function_check, integrate_hierarchy,
                        l2_bound)
from .inequalities import (ConcentrationReport, HypothesisError,
                           InequalityViolation, c_jw, exp_moment_check,
                           inner_lemma_check, inner_lemma_ibp, moment_table,
                           random_admissible_phi, transport_gap)
from .cli import ExperimentConfig, run, scaling_study

__version__ = "0.1.0"

__all__ = [
    "DensityField", "MatrixField", "TorusGrid", "VectorField", "convolve",
    "gradient", "laplacian", "make_grid", "marginalize", "tensorize",
    "KernelSpec", "biot_savart", "bounded_kernel", "check_decomposition",
    "divergence_of_matrix", "gradient_kernel", "load_kernel", "mollify",
    "mv_constant", "save_kernel", "v_matrix",
    "DivergenceLadder", "TowerReport", "chi_square", "dirichlet_energy",
    "divergence_ladder", "fisher_information", "relative_entropy",
    "towering_check",
    "FlowTrajectory", "decay_fit", "log_regularity", "save_trajectory",
    "solve_mckean_vlasov",
    "JointTrajectory", "bbgky_residual", "evolution_identity_check",
    "solve_liouville",
    "ParticleState", "ParticleTrajectory", "SimConfig",
    "empirical_marginal", "replica_rng", "simulate", "weak_error",
    "Certificate", "HierarchyParams", "HierarchyTrajectory", "NoCertificate",
    "TimeFunc", "apriori_bound", "comparison_check", "ent_bound",
    "generating_function_check", "integrate_hierarchy", "l2_bound",
    "ConcentrationReport", "HypothesisError", "InequalityViolation", "c_jw",
    "exp_moment_check", "inner_lemma_check", "inner_lemma_ibp",
    "moment_table", "random_admissible_phi", "transport_gap",
    "ExperimentConfig", "run", "scaling_study",
    "__version__",
]
