"""Localized Schrödinger bridge samplers.

Generative sampling from a finite set of training samples: a Sinkhorn-scaled
Gaussian kernel turns the samples into a reversible Markov chain whose
conditional means drive Langevin-type samplers. Localization replaces one
high-dimensional bridge by many small ones over coordinate dependency sets.
"""

from .bridge import (SchrodingerBridge, bridge_score, conditional_cov,
                     conditional_mean, inner_product_kernel_matrix,
                     kernel_matrix, log_bridge_density, probability_vector,
                     sinkhorn_fit, transition_vector)
from .exceptions import (BlowUpError, ConvergenceError, DataError, FarFieldError,
                         IntegrityError, LocBridgeError, NumericalError,
                         ParameterError)
from .kde import (KernelDenoiser, LocalizedKernelDenoiser, kde_denoiser,
                  kde_score, kde_weights, localized_kde_update, log_kde)
from .localization import (ContainmentBox, DependencySet,
                           LocalizedSchrodingerBridge, closure_pair_sets,
                           fit_localized, full_window_sets,
                           local_conditional_cov, local_conditional_mean,
                           local_noise_component, local_probability_vector,
                           localized_mean_vector, periodic_stencil_sets,
                           psd_sqrt, sets_from_lists, sets_to_lists,
                           temporal_markov_sets)
from .samplers import (SCHEMES, ChainState, Clamp, SamplerConfig, advance,
                       closure_simulate, generate)

__version__ = "0.1.0"

__all__ = [
    "SchrodingerBridge", "LocalizedSchrodingerBridge", "KernelDenoiser",
    "LocalizedKernelDenoiser", "DependencySet", "ContainmentBox",
    "SamplerConfig", "ChainState", "Clamp", "SCHEMES",
    "kernel_matrix", "inner_product_kernel_matrix", "sinkhorn_fit",
    "transition_vector", "probability_vector", "conditional_mean",
    "conditional_cov", "bridge_score", "log_bridge_density",
    "kde_weights", "kde_denoiser", "kde_score", "log_kde", "localized_kde_update",
    "periodic_stencil_sets", "temporal_markov_sets", "closure_pair_sets",
    "full_window_sets", "sets_to_lists", "sets_from_lists", "psd_sqrt",
    "fit_localized", "local_probability_vector", "local_conditional_mean",
    "localized_mean_vector", "local_conditional_cov", "local_noise_component",
    "advance", "generate", "closure_simulate",
    "LocBridgeError", "ParameterError", "DataError", "ConvergenceError",
    "FarFieldError", "NumericalError", "BlowUpError", "IntegrityError",
]
