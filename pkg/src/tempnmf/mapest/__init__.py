"""MAP estimation for NMF with temporal priors on H."""
from .fit import ConfigurationError, FitConfig, FitResult, NumericalFailure, fit
from .objective import SupportError, objective
from .priors import (BGARPrior, GaPPrior, HierRatePrior, HyperparameterError, RatePrior,
                     ShapePrior, make_prior, prior_from_dict, validate_bgar_hyperparams)

__all__ = [
    "BGARPrior", "ConfigurationError", "FitConfig", "FitResult", "GaPPrior", "HierRatePrior",
    "HyperparameterError", "NumericalFailure", "RatePrior", "ShapePrior", "SupportError",
    "fit", "make_prior", "objective", "prior_from_dict", "validate_bgar_hyperparams",
]
