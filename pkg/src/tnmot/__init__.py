"""Multi-marginal entropic optimal transport on factor graphs via tensor networks."""

from .certificates import (
    ErrorBudget,
    HypothesisError,
    compose_factor_errors,
    epsilon_entropic,
    epsilon_total,
    normalized_budget,
)
from .factor_model import (
    BudgetExceeded,
    CostFactor,
    CostModel,
    KernelFactor,
    KernelModel,
    PositivityError,
    assemble_dense_cost,
    assemble_dense_kernel,
    chain_cost,
    gibbs_factors,
    sqdist_cost,
)
from .lowrank import (
    TTCores,
    factor_log_errors,
    log_error,
    lowrank_kernel,
    lowrank_kernel_factor,
    randomized_svd,
    truncated_svd,
    tt_svd,
)
from .network import (
    Contractor,
    FactorNetwork,
    Rank1Correction,
    Scalings,
    build_network,
    eval_all_marginals,
    eval_cost,
    eval_marginal,
    flops,
    materialize,
    network_from_tt,
    plan_contraction,
    plan_marginal,
)
from .rounding import round_dense, round_structured, rounded_marginals
from .sinkhorn import (
    DenseOracle,
    NetworkOracle,
    SinkhornConfig,
    SinkhornResult,
    iteration_bound_a,
    iteration_bound_b,
    solve,
)
from .tensor_core import entropy, inner, marginal, marginals, mode_product, outer, scale_modes

__version__ = "0.1.0"
