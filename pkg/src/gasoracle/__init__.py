"""Gas-price oracles for next-block inclusion on Ethereum.

The package turns per-transaction gas prices into a minimum-price-per-block
series, then offers several predictors of the price needed to enter the next
block: a Gaussian-process regressor with calibrated percentile quotes, two
percentile-of-recent-history baselines (GS-Express and a Geth-style fixed
percentile), and a hybrid that switches between them based on a rolling
success-rate monitor.  A backtesting harness scores any of these on
historical series; the ``gasoracle`` command line wraps the whole pipeline.
"""

from .baseline_oracles import (
    PercentileOracleConfig,
    PercentileWindowOracle,
    empirical_percentile_price,
    geth_oracle,
    geth_quote,
    gs_express_oracle,
    gs_express_quote,
)
from .data_ingest import (
    Dataset,
    RawBlock,
    fetch_block_range,
    load_blocks,
    load_processed,
    save_processed,
    save_raw,
)
from .errors import (
    ConfigError,
    DataError,
    FetchError,
    FitError,
    GasOracleError,
    InsufficientHistoryError,
    InvariantViolation,
    NumericalError,
    OrderingError,
    ParseError,
    SchemaError,
)
from .evaluation import (
    BacktestReport,
    Oracle,
    PredictionRecord,
    average_cost_gwei,
    backtest,
    ipw,
    min_short_term_success,
    success_indicator,
    success_rate,
)
from .gp_regression import (
    FitConfig,
    GpHyperparams,
    GpModel,
    GpOracle,
    PredictiveDistribution,
    TrainingSeries,
    build_covariance,
    build_model,
    fit,
    inverse_normal_cdf,
    log_marginal_likelihood,
    log_marginal_likelihood_gradient,
    percentile_price,
    predict,
    predict_next,
    sq_exp_kernel,
)
from .hybrid_oracle import (
    HybridConfig,
    HybridOracle,
    HybridState,
    advance,
    backtest_hybrid,
    find_alpha_prime,
    hybrid_quote,
    instant_success_rate,
    quote_with_case,
)
from .preprocess import (
    ProcessedBlock,
    filter_small_blocks,
    linear_percentile,
    low_fee_threshold,
    preprocess_chain,
    trim_block,
)

__version__ = "0.1.0"
