"""Monte Carlo engine and lattice oracle for the relativistic spin-1/2
semigroup exp(-t(H+V)), H = sqrt(2h + m^2) - m with magnetic kinetic term
and Z_2 spin coupling, driven by subordinated Brownian motion with Poisson
spin flips."""

__version__ = "0.1.0"

from .fields import (FieldConfig, SpinCoupling, VectorField, ScalarField,
                     free_fields, zero_vector, zero_scalar, constant_b,
                     linear_gauge, gaussian_bump_b, gradient_gauge,
                     harmonic_v, well_v, soft_coulomb_v, truncate_field,
                     comparison_field)
from .levy import (SubordinatorPath, BrownianPath, JumpSet, SpinTrack,
                   sample_subordinator_increment, subordinator_density,
                   sample_subordinator_path, sample_brownian_on_grid,
                   sample_jumps, spin_value, spin_value_left, bessel_k2,
                   relativistic_kernel, relativistic_kernel_radial)
from .action import (PathBundle, ActionParts, chi_eps, action_potential,
                     action_vector, action_spin, action_parts, fk_weight)
from .batch import BundleBatch, EngineError, sample_batch, batch_weights, \
    extract_bundle
from .engine import (Discretization, ExperimentSpec, Estimate, TestFunction,
                     GaussianMeasure, gaussian_g, box_g, spin_sector_g,
                     apply_semigroup, matrix_element, characteristic_exact,
                     characteristic_mc, exp_moment, ground_state_energy,
                     diamagnetic_check, derive_seed)
from .lattice import (Lattice, OperatorMatrix, BoundState, OracleError,
                      build_h, add_potential, sqrt_shift, semigroup_matrix,
                      ground_state, hamiltonian, export_spectrum, export_state)
from .decay import (DecayFit, RateBounds, MartingaleScan, rate_bounds,
                    radial_profile, fit_decay, martingale_scan, stopped_bound,
                    export_profile, export_scan)
