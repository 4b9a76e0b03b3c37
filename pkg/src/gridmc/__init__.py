"""Monte Carlo estimation for 2-D binary constrained channels.

Partition functions, noiseless capacities, and AWGN information rates of
grids with pairwise constraints, via blocked Gibbs sampling over cycle-free
strips, reciprocal-mass estimation, and tempered importance sampling, with
exact oracles for verification at small sizes.
"""

from .grid import (
    Configuration,
    ConstraintKind,
    GridError,
    GridSpec,
    SupportCount,
    count_support_zeroed,
    evaluate_f,
    restrict_to_strip,
)
from .chain import (
    BackwardMessages,
    ChainModel,
    InfeasibleChainError,
    backward_filter,
    chain_normalization,
    forward_sample,
    transition_probabilities,
)
from .gibbs import (
    GibbsEnsemble,
    GibbsState,
    TargetSpec,
    default_burn_in,
    gibbs_sweep,
    initial_state,
    run_chain,
)
from .estimators import (
    EstimatorAccumulator,
    EstimatorError,
    LayerSchedule,
    importance_ratio,
    log_weight_mean,
    multilayer_estimate,
    ogata_tanemura_direct,
    ogata_tanemura_tree,
)
from .capacity import (
    BudgetError,
    CapacityEstimate,
    estimate_capacity,
    exact_capacity_bits,
    exact_log_z_enumeration,
    exact_log_z_transfer_matrix,
)
from .info_rate import (
    ChannelModel,
    InfoRateResult,
    OutputSample,
    conditional_entropy_rate,
    default_layer_count,
    estimate_info_rate,
    log2_p_y,
    log2_p_y_batch,
    simulate_output,
)

__version__ = "0.1.0"
