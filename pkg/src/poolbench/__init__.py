"""Pooling operators that generalize max- and average-pooling.

Forward passes, exact analytic gradients, a numerically stable smooth
maximum, a finite-difference oracle, and a desk-scale training benchmark
comparing the methods on synthetic data.
"""

from .tensor import (
    ShapeError,
    WindowMapError,
    WindowSpec,
    as_tensor,
    extract_window,
    map_windows,
    output_size,
)
from .ops import (
    ACTIVE_PARAMS,
    HEADLINE_METHODS,
    METHODS,
    Affine,
    ConfigurationError,
    DegenerateWeightsError,
    GateValue,
    ParameterError,
    PoolParams,
    PoolSpec,
    avg_pool,
    conv_pool,
    fixed_temperatures,
    gated_pool,
    global_avg_pool,
    learned_norm_pool,
    lse_pool,
    max_pool,
    nearest_pool,
    norm_exponent,
    ordinal_pool,
    project_to_simplex,
    se_gated_max_pool,
    se_temperatures,
    sigmoid,
    smooth_max_pool,
    validate_pool_params,
)
from .grads import (
    FDOracleConfig,
    GradBundle,
    OracleError,
    StaleCacheError,
    avg_pool_grad,
    central_difference,
    conv_pool_grad,
    fd_check,
    gap_grad,
    gated_pool_grad,
    learned_norm_pool_grad,
    lse_pool_grad,
    max_pool_grad,
    nearest_pool_grad,
    ordinal_pool_grad,
    relative_error,
    se_branch_grad,
    smooth_max_pool_grad,
)

__version__ = "0.1.0"
