"""Differentially private SGD with covariance-adapted gradient clipping."""

from ._core import (
    PrivatizedGradient,
    StreamingCovariance,
    TransformPair,
    epsilon_of,
    gen_synthetic_classification,
    gen_synthetic_regression,
    geoclip_objective,
    geoclip_step,
    optimal_transform,
    rdp_subsampled_gaussian,
    sigma_for_target,
    transformed_covariance_diag,
    vanilla_step,
    whitening_objective,
)

__all__ = [
    "PrivatizedGradient",
    "StreamingCovariance",
    "TransformPair",
    "epsilon_of",
    "gen_synthetic_classification",
    "gen_synthetic_regression",
    "geoclip_objective",
    "geoclip_step",
    "optimal_transform",
    "rdp_subsampled_gaussian",
    "sigma_for_target",
    "transformed_covariance_diag",
    "vanilla_step",
    "whitening_objective",
]
