"""Conservative asset pricing from bid-ask ranges by maximum entropy in the
mean, with exponential-utility and mean-variance portfolio backtesting."""

from .market_data import (
    BidAskRange,
    OhlcSeries,
    QuantileGrid,
    empirical_quantile_grid,
    estimate_bid_ask,
    gross_returns,
    load_ohlc,
    sample_periodic_closes,
    scenario_prices,
)
from .mem import (
    ConvergenceError,
    DistortionCurve,
    IntegrityError,
    MemProblem,
    MemSolution,
    SolverOptions,
    build_discretization,
    conservative_prices,
    dual_entropy,
    dual_gradient,
    reconstruct_distortion,
    solution_record,
    solve_mem,
    verify_optimality,
)
from .portfolio import (
    Holdings,
    MomentEstimates,
    estimate_moments,
    exp_utility_objective,
    optimize_exponential_utility,
    optimize_mean_variance,
    portfolio_gross_return,
    project_to_simplex,
)
from .backtest import (
    BacktestConfig,
    QuartileTable,
    WindowSpec,
    build_report,
    merge_reports,
    quartile_report,
    roll_windows,
    run_backtest,
    run_window,
)

__version__ = "0.1.0"
