"""Spherical p-spin glass laboratory and the AnnealSGD gradient perturbation."""
from .hamiltonian import (CapacityError, Disorder, ExternalField, derive_seed, energy, fixed_field, gradient,
                          hessian, sample_disorder, sample_field, zero_disorder)
from .regimes import (Branch, Regime, classify_regime, critical_field, expected_critical_points,
                      expected_critical_points_edge, expected_minima_edge, nu_for_kappa, nu_for_tau,
                      order_parameter, regime_table)
from .sphere import (DescentConfig, critical_index, critical_indices, descend, descend_batch, project_tangent,
                     random_configuration, retract)
from .census import CensusConfig, cluster_minima, cosine_distance_stats, perturbation_shift_experiment, run_census
from .anneal import (AnnealConfig, PerturbationState, estimate_shape, kappa_scale_factor, sample_perturbation,
                     scale_factor, tau_schedule)
from .data import Dataset, load_idx, synth_blobs
from .trainer import MLP, DivergenceError, MLPSpec, TrainMetrics, alignment, min_abs_gradient, train

__version__ = "0.1.0"
