"""Small-noise McKean-Vlasov dynamics: simulation, rate functions and rescaled limit laws."""
from .exceptions import (ConfigError, DomainError, NonFiniteStateError, ParameterError, RefinementError,
                         UnsupportedConfigurationError)
from .events import parse_event
from .ldp_harness import LdpExperiment, estimate_event_probability
from .measure_ops import EmpiricalMeasure, modified_wasserstein, wasserstein2
from .model import CoefficientSet, get_model
from .mvsde_solver import simulate_particles, solve_picard
from .path_space import CameronMartinPath, Path, TimeGrid, holder_norm, sup_norm
from .skeleton_rate import rate_of_event, rate_of_path, solve_psi, solve_skeleton
from .strassen_lil import distance_to_K, linear_contraction, strassen_experiment

__version__ = "0.1.0"
