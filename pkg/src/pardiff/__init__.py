"""Frequency-space analysis of partially diffusive hyperbolic systems."""

from .errors import *  # noqa: F401,F403
from .kalman import (SkVerdict, SphereSkReport, block_sk_reduction_check, hypocoercivity_positivity,
                     kalman_matrix, kalman_rank_holds, sk_eigenvector_check, sk_over_sphere)
from .littlewood_paley import (HybridNorm, SpectralField, besov_norm_hybrid, block_norms, build_cutoffs,
                               dyadic_block, low_high_split, read_field, write_field)
from .lyapunov import (LyapunovParams, lyapunov_derivative_along_flow, lyapunov_value, rate_envelope_fit,
                       select_epsilons, spectral_decay_rate)
from .models import (MODEL_REGISTRY, build_model, check_assumption_G, ideal_gas, make_barotropic_ns,
                     make_heat, make_mhd, make_toy1d)
from .spectral_sim import (evolve_linear, evolve_nonlinear_ns, fit_decay_exponent, functional_time_series,
                           initial_data, low_frequency_decay, parabolic_mode_field, parabolic_residual)
from .symbols import (FrequencySymbol, SymbolicSystem, check_assumption_D, check_assumption_E,
                      evaluate_symbols, sphere_samples)

__version__ = "0.1.0"
