"""DO-Conv layers and the shallow DOCNN-DRC classifier for hyperspectral images."""

from ._core import (
    LoadError,
    Model,
    NetworkConfig,
    analytic_parameter_count,
    confusion,
    conv_std,
    doconv_compose,
    doconv_fold,
    kappa,
    overall_accuracy,
    pca_fit,
    selfcheck,
    synthetic_scene,
    variant_config,
)

__all__ = [
    "LoadError",
    "Model",
    "NetworkConfig",
    "analytic_parameter_count",
    "confusion",
    "conv_std",
    "doconv_compose",
    "doconv_fold",
    "kappa",
    "overall_accuracy",
    "pca_fit",
    "selfcheck",
    "synthetic_scene",
    "variant_config",
]
