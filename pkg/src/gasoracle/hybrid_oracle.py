"""Hybrid oracle: percentile quoting with a GP fallback, driven by a
rolling success-rate monitor.

The oracle tracks how often plain GS-Express quotes at the desired level
alpha would have succeeded over the last n_gs blocks (the instant success
rate R) and picks one of three regimes per block:

  a. R < alpha - e   GS-Express is underbidding (prices rising); quote the
                     max of the GP and GS-Express prices.
  b. |R - alpha| <= e  on target; quote plain GS-Express.
  c. R > alpha + e   overpaying; quote GS-Express at a reduced level
                     alpha' chosen so the retrospective rate falls back
                     into the band.

alpha is a percent (75 means 75%), e an absolute rate (0.1 means ten
percentage points).  R is recomputed from stored sorted window snapshots,
which is what makes the retrospective alpha' search well-defined: the same
last-n_gs windows are re-evaluated at any candidate level against the known
actual minimums.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .baseline_oracles import gs_express_quote
from .errors import InsufficientHistoryError
from .gp_regression import (
    FitConfig,
    GpOracle,
    TrainingSeries,
    fit,
    percentile_price,
    predict_next,
)

log = logging.getLogger(__name__)

BISECTION_ITERATIONS = 40


@dataclass(frozen=True)
class HybridConfig:
    """alpha: desired success rate in percent; n_gs / n_gp: monitor and GP
    window lengths; e: allowed deviation of the instant rate, in rate units."""

    alpha: float = 75.0
    n_gs: int = 30
    n_gp: int = 200
    e: float = 0.1
    fit_config: FitConfig = field(default_factory=FitConfig)
    bisection_iterations: int = BISECTION_ITERATIONS

    def __post_init__(self):
        if not 0.0 < self.alpha < 100.0:
            raise ValueError(f"alpha must be in (0, 100), got {self.alpha}")
        if self.n_gs < 1:
            raise ValueError(f"n_gs must be >= 1, got {self.n_gs}")
        if self.n_gp < max(2, self.n_gs):
            raise ValueError(f"n_gp must be >= max(2, n_gs), got {self.n_gp}")
        if not 0.0 < self.e < 1.0:
            raise ValueError(f"e must be a rate in (0, 1), got {self.e}")
        if self.alpha / 100.0 - self.e <= 0.0:
            raise ValueError(
                f"alpha/100 - e must be positive, got {self.alpha / 100.0 - self.e}"
            )
        if self.alpha / 100.0 + self.e >= 1.0:
            # legal but the upper band edge saturates: regime c can never fire
            log.debug(
                "alpha/100 + e = %.3f >= 1; high-rate regime is unreachable",
                self.alpha / 100.0 + self.e,
            )
        if self.bisection_iterations < 1:
            raise ValueError(
                f"bisection_iterations must be >= 1, got {self.bisection_iterations}"
            )


@dataclass
class HybridState:
    """Rolling view of the series: the last n_gp minimums, plus the sorted
    GS-Express windows and actual minimums of the last n_gs resolved blocks."""

    n_gs: int
    n_gp: int
    history: deque
    snapshots: deque
    actuals: deque

    @classmethod
    def empty(cls, n_gs: int, n_gp: int) -> "HybridState":
        return cls(
            n_gs=n_gs,
            n_gp=n_gp,
            history=deque(maxlen=n_gp),
            snapshots=deque(maxlen=n_gs),
            actuals=deque(maxlen=n_gs),
        )

    @property
    def targets_seen(self) -> int:
        return len(self.snapshots)


def advance(state: HybridState, y: int) -> None:
    """Absorb the next block's minimum.

    If a full GS-Express window preceded this block, its sorted snapshot and
    the realized minimum are recorded so the success of any percentile level
    on this block can be recomputed later.
    """
    if len(state.history) >= state.n_gs:
        window = sorted(list(state.history)[-state.n_gs :])
        state.snapshots.append(tuple(window))
        state.actuals.append(y)
    state.history.append(y)


def instant_success_rate(state: HybridState, alpha: float) -> float:
    """Fraction of the last n_gs blocks a GS-Express quote at alpha would
    have entered, recomputed from the stored snapshots."""
    if state.targets_seen < state.n_gs:
        raise InsufficientHistoryError(
            f"success-rate monitor needs {state.n_gs} resolved blocks, "
            f"have {state.targets_seen}"
        )
    hits = sum(
        1
        for snapshot, actual in zip(state.snapshots, state.actuals)
        if gs_express_quote(snapshot, alpha) >= actual
    )
    return hits / state.n_gs


def find_alpha_prime(
    state: HybridState,
    alpha: float,
    e: float,
    iterations: int = BISECTION_ITERATIONS,
) -> float:
    """Reduced level alpha' <= alpha whose retrospective rate lands in
    [alpha - e, alpha + e] (rate units).

    The rate is a non-decreasing step function of the level, so bisection
    homes in on the band; the rate moves in multiples of 1/n_gs, and when a
    step straddles the whole band no level attains it, in which case alpha
    itself is returned.
    """
    rate = instant_success_rate(state, alpha)
    band_lo = alpha / 100.0 - e
    band_hi = alpha / 100.0 + e
    if rate <= band_hi:
        raise ValueError(
            f"alpha' search requires the rate above the band, got {rate:.4f}"
        )
    lo, hi = 0.0, alpha
    for _ in range(iterations):
        mid = (lo + hi) / 2.0
        r = instant_success_rate(state, mid)
        if r > band_hi:
            hi = mid
        elif r < band_lo:
            lo = mid
        else:
            return mid
    return alpha


def _gp_quote_fresh(window: Sequence[int], alpha: float, fit_config: FitConfig) -> int:
    training = TrainingSeries.from_wei(window, normalize=fit_config.normalize)
    model = fit(training, fit_config)
    return percentile_price(predict_next(model), alpha)


def quote_with_case(
    state: HybridState,
    config: HybridConfig,
    gp_quote: Callable[[float], int] | None = None,
) -> tuple[int, str]:
    """Price for the next block plus which regime ('a'/'b'/'c') produced it.

    gp_quote lets a caller supply a cached GP (it is only consulted in
    regime a); by default a fresh GP is fit on the history window.
    """
    if len(state.history) < config.n_gp:
        raise InsufficientHistoryError(
            f"hybrid quote needs {config.n_gp} past blocks, have {len(state.history)}"
        )
    alpha, e = config.alpha, config.e
    rate = instant_success_rate(state, alpha)
    gs_window = list(state.history)[-config.n_gs :]
    if rate < alpha / 100.0 - e:
        gs_price = gs_express_quote(gs_window, alpha)
        if gp_quote is None:
            gp_price = _gp_quote_fresh(list(state.history), alpha, config.fit_config)
        else:
            gp_price = gp_quote(alpha)
        return max(gp_price, gs_price), "a"
    if rate <= alpha / 100.0 + e:
        return gs_express_quote(gs_window, alpha), "b"
    alpha_prime = find_alpha_prime(state, alpha, e, config.bisection_iterations)
    return gs_express_quote(gs_window, alpha_prime), "c"


def hybrid_quote(
    state: HybridState,
    config: HybridConfig,
    gp_quote: Callable[[float], int] | None = None,
) -> int:
    return quote_with_case(state, config, gp_quote)[0]


class HybridOracle:
    """Backtest adapter around the hybrid quoting rules.

    Stateful: each instance is configured for one confidence level and must
    see the series in order.  History is absorbed lazily from the prefix
    passed to quote_prices, so observe is a no-op; case_log records which
    regime fired at each 1-based target position.
    """

    def __init__(self, config: HybridConfig | None = None, name: str | None = None):
        self.config = config or HybridConfig()
        self.name = name or f"hybrid-{self.config.alpha:g}"
        self.min_history = max(self.config.n_gp, 2 * self.config.n_gs)
        self.is_stateless = False
        self._gp = GpOracle(
            train_size=self.config.n_gp, fit_config=self.config.fit_config
        )
        self._state = HybridState.empty(self.config.n_gs, self.config.n_gp)
        self._absorbed = 0
        self.case_log: list[tuple[int, str]] = []

    @property
    def state(self) -> HybridState:
        return self._state

    def reset(self) -> None:
        self._state = HybridState.empty(self.config.n_gs, self.config.n_gp)
        self._absorbed = 0
        self._gp.reset()
        self.case_log = []

    def case_counts(self) -> dict[str, int]:
        counts = {"a": 0, "b": 0, "c": 0}
        for _, case in self.case_log:
            counts[case] += 1
        return counts

    def quote_prices(
        self, history: Sequence[int], at: int, alphas: Sequence[float]
    ) -> dict[float, int]:
        if list(alphas) != [self.config.alpha]:
            raise ValueError(
                f"{self.name} quotes only its configured level "
                f"{self.config.alpha}, asked for {list(alphas)}"
            )
        if at < self.min_history:
            raise InsufficientHistoryError(
                f"{self.name} needs {self.min_history} past blocks, have {at}"
            )
        if self._absorbed > at:
            raise ValueError(
                f"series replay moved backwards: absorbed {self._absorbed}, at {at}"
            )
        while self._absorbed < at:
            advance(self._state, history[self._absorbed])
            self._absorbed += 1
        price, case = quote_with_case(
            self._state,
            self.config,
            gp_quote=lambda alpha: self._gp.quote_prices(history, at, (alpha,))[alpha],
        )
        self.case_log.append((at + 1, case))
        return {self.config.alpha: price}

    def observe(self, actual_y: int) -> None:
        pass  # absorbed lazily on the next quote


def backtest_hybrid(
    series: Sequence[int],
    config: HybridConfig,
    alphas: Sequence[float],
    train_size: int | None = None,
    start: int | None = None,
    end: int | None = None,
) -> dict[float, "BacktestReport"]:
    """One independent single-level backtest per requested confidence level.

    The switching rules are defined per level (the monitor band moves with
    alpha), so levels are evaluated as separate runs rather than columns of
    one run; quotes need not be monotone across levels here.
    """
    from .evaluation import backtest

    reports = {}
    for alpha in sorted(alphas):
        oracle = HybridOracle(replace(config, alpha=alpha))
        reports[alpha] = backtest(
            oracle, series, [alpha], train_size=train_size, start=start, end=end
        )
    return reports
