"""Random dynamics of the folding map ``x -> |x - theta|`` on the half-line."""

__version__ = "0.1.0"

from .drift import chord_bound, drift_profile, drift_u, invariant_estimate, level_point, transition_prob, verify_drift_condition
from .measures import (
    AtomicMeasure,
    EmpiricalMeasure,
    GridMeasure,
    MomentProfile,
    cdf,
    dirac,
    exponential_grid,
    load_measure,
    moments,
    partial_mean,
    quantile,
    sample,
    uniform_grid,
)
from .metric import ABCViolation, ABCWitness, abc_check, decrease_experiment, fit_poly_rate, rate_bound, wasserstein_p, wp_of_coupling
from .orbits import epsilon_cover, lattice_test, random_orbit, reach_probability, reach_set, rotation_orbit
from .selfmap import (
    LatticePMF,
    blaschke_scan,
    boundary_modulus_check,
    continuous_selfhat,
    genfun_eval,
    geometric_family,
    hat_discrete,
    laplace_boundary_check,
    mobius_compare,
    self_iterate,
)
from .transfer import Coupling2D, coupling_push, iterate_push, push_avg, push_theta, subtraction_term

__all__ = [name for name in dir() if not name.startswith("_")]
