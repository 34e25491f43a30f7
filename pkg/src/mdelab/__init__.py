"""Numerical laboratory for measure differential equations of the form

    d/dt mu_t = V[mu_t] (+) c(., mu_t) mu_t (+) s[mu_t]

on finite nonnegative atomic measures: exact flat and 1D Wasserstein
metrics, the explicit lattice time-stepping scheme, built-in measure vector
fields, and a verification harness for the structural bounds.
"""

from .errors import (AtomOutsideMesh, ConfigError, DimensionMismatch,
                     EmptyMeasure, InitialDataIdentical, MassMismatch,
                     MdelabError, NonMeshTime, NotProbability)
from .measures import (DiscreteMeasure, Mesh, VelocityMeasure, combine,
                       grid_project_x, grid_project_xv)
from .metrics import (BarycenterSplit, DualCertificate, TransportPlan,
                      barycenter_split, flat_distance, flat_distance_dual,
                      flat_value, plan_to_csv, quantile, wasserstein1_1d)
from .mvf import (GrowthFunction, MeasureVectorField, SourceOperator,
                  affine_growth, barycenter_mvf, broken_marginal_mvf,
                  check_marginal, check_v1, check_v2, check_v3,
                  constant_growth, fixed_source, lipschitz_field_mvf,
                  mass_coupled_growth, scaled_source)
from .scheme import (ConvergenceReport, Scenario, Trajectory,
                     convergence_study, init, solve, step)
from .verify import (ContinuityReport, ResidualReport, TestFunction,
                     continuity_experiment, plateau_bump, radial_bump,
                     semigroup_check, weak_residual)

__version__ = "0.1.0"
