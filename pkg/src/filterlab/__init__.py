"""filterlab: a classical and quantum filtering laboratory.

Bayesian estimation on grids, seeded SDE simulation, grid-based classical
filters, an exact symbolic quantum Ito calculus over (S, L, H) models, and
the quantum trajectory filter for single-channel homodyne detection, each
validated against independent oracles.
"""

from .bayes import (ComplexGridFunction, GridDensity, Likelihood,
                    coin_likelihood, density_stats, gaussian_density,
                    gaussian_likelihood, gaussian_update, posterior_grid,
                    uniform_density, von_neumann_posterior)
from .belavkin import (ConditionedDensity, ConditionedKet,
                       EmissionAbsorptionModel, QuantumRecord, bz_step,
                       classical_wiener_unitary, ensemble_average, filter_step,
                       generate_record, master_equation_solve,
                       norm_martingale_check, poisson_kick_evolution,
                       qdmz_expectation)
from .classical import (FilterState, ObservationModel, TrajectoryRecord,
                        dmz_run, dmz_step, kalman_bucy_reference, ks_log_weight,
                        kushner_run, normalize, pi_of,
                        simulate_truth_and_observation)
from .errors import (ConfigError, FilterCollapseError, FilterLabError,
                     PreconditionError, StructureError, ZeroProbabilityError)
from .operators import (SIGMA_MINUS, SIGMA_PLUS, SIGMA_X, SIGMA_Y, SIGMA_Z,
                        Ket, Operator, SpectralDecomposition, commutator,
                        hermitian, identity, is_compatible, lindblad_adjoint_apply,
                        lindblad_apply, measurement_probabilities, project_postulate,
                        projection, spectral_decompose, unitary)
from .qsc import (IncrementBasis, ItoExpr, SLHTriple, db, dbdag, dlam, dt_inc,
                  exp_vector_inner, heisenberg_increment, hp_increment,
                  ito_mul, ito_product, output_increment, quadrature_commutator,
                  scattering_from_E, slh, unitarity_defect)
from .sde import (DiffusionSpec, Path, chapman_kolmogorov_check, euler_maruyama,
                  fokker_planck_evolve, generator_apply, ito_integral,
                  random_walk, stable_fp_dt, wiener_path)
from .seeds import RngStream, seed_derive

__version__ = "0.1.0"
