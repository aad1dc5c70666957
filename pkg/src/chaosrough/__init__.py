"""Rough-path lifts of Wiener chaos processes.

Sparse symmetric tensors and chaos variables, kernel paths and their
regularity checks, level-2 lifts and p-variation, enhanced lifts with
Malliavin derivatives, a Davie-type RDE solver with Jacobian and Malliavin
derivative flows, and greedy-partition, tail and rate-function diagnostics.
"""

__version__ = "0.1.0"

from .symtensor import SymTensor, contract, inner, power, symmetrize_outer
from .chaos import (
    ChaosVariable,
    GaussianSample,
    MalliavinDerivative,
    eval_chaos,
    hermite,
    inner_dk,
    malliavin,
    moment_ratio,
    product_expand,
)
from .kernels import (
    KernelPath,
    brownian_kernel,
    brownian_product_kernel,
    check_assumptions,
    fbm_kernel,
    product_kernel,
    uniform_grid,
    variation_2d,
)
from .roughlift import (
    Level2Path,
    chen_compose,
    dyadic_convergence,
    kl_second_moments,
    lift_piecewise_linear,
    p_variation,
    rough_distance,
)
from .enhanced import EnhancedSample, enhance, lift_enhanced, translate, translation_growth
from .rde import VectorFieldSet, jacobian, malliavin_rde, solve
from .analysis import PartitionStats, RateResult, greedy, rate_function, scaling_check, tail_scan

__all__ = [
    "__version__",
    "SymTensor",
    "contract",
    "inner",
    "power",
    "symmetrize_outer",
    "ChaosVariable",
    "GaussianSample",
    "MalliavinDerivative",
    "eval_chaos",
    "hermite",
    "inner_dk",
    "malliavin",
    "moment_ratio",
    "product_expand",
    "KernelPath",
    "brownian_kernel",
    "brownian_product_kernel",
    "check_assumptions",
    "fbm_kernel",
    "product_kernel",
    "uniform_grid",
    "variation_2d",
    "Level2Path",
    "chen_compose",
    "dyadic_convergence",
    "kl_second_moments",
    "lift_piecewise_linear",
    "p_variation",
    "rough_distance",
    "EnhancedSample",
    "enhance",
    "lift_enhanced",
    "translate",
    "translation_growth",
    "VectorFieldSet",
    "jacobian",
    "malliavin_rde",
    "solve",
    "PartitionStats",
    "RateResult",
    "greedy",
    "rate_function",
    "scaling_check",
    "tail_scan",
]
