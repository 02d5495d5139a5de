"""Eigenvector moment flow on particle configurations."""
from .configs import STATE_CAP, Configuration, ConfigurationSpace, config_distance, space_size
from .generator import (
    DetailedBalanceReport,
    MomentField,
    MomentGenerator,
    RateField,
    dense_generator,
    detailed_balance_residual,
    dirichlet_form,
    generator_apply,
    get_space,
    jump_multiplicity,
    phi,
    pi_dirichlet_identity,
    pi_inner,
    random_rate_field,
    rates_from_lambda,
    reversible_weight,
    split_short_long,
)
from .integrate import EvolveTrace, evolve
from .localize import (
    PropagationProfile,
    averaging_range,
    flat_av,
    localized_evolve,
    propagation_profile,
    short_range_error,
)

__all__ = [
    "STATE_CAP",
    "Configuration",
    "ConfigurationSpace",
    "DetailedBalanceReport",
    "EvolveTrace",
    "MomentField",
    "MomentGenerator",
    "PropagationProfile",
    "RateField",
    "averaging_range",
    "config_distance",
    "dense_generator",
    "detailed_balance_residual",
    "dirichlet_form",
    "evolve",
    "flat_av",
    "generator_apply",
    "get_space",
    "jump_multiplicity",
    "localized_evolve",
    "phi",
    "pi_dirichlet_identity",
    "pi_inner",
    "propagation_profile",
    "random_rate_field",
    "rates_from_lambda",
    "reversible_weight",
    "short_range_error",
    "space_size",
    "split_short_long",
]
