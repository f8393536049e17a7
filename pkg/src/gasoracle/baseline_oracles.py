"""Percentile-of-recent-history baselines: GS-Express and a Geth-style oracle.

Both quote a percentile of the minimum gas prices over a sliding window of
recent blocks.  GS-Express maps the requested confidence level directly to
the percentile; the Geth-style oracle always samples one fixed percentile
(60th of the last 100 block minimums by default) no matter what confidence
is asked for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import InsufficientHistoryError
from .preprocess import linear_percentile

GS_EXPRESS_WINDOW = 200
GETH_WINDOW = 100
GETH_SAMPLE_PERCENTILE = 60.0


def empirical_percentile_price(values: Sequence[int | float], q: float) -> int:
    """The q-th percentile of values, rounded up to integer wei."""
    return math.ceil(linear_percentile(values, q))


def gs_express_quote(window_y: Sequence[int], alpha: float) -> int:
    """GS-Express quote at confidence alpha: the alpha-th percentile of the window."""
    if not 0.0 < alpha < 100.0:
        raise ValueError(f"alpha must be in (0, 100), got {alpha}")
    return empirical_percentile_price(window_y, alpha)


def geth_quote(
    window_y: Sequence[int], sample_percentile: float = GETH_SAMPLE_PERCENTILE
) -> int:
    """Geth-style quote: a fixed percentile of the window, independent of alpha."""
    return empirical_percentile_price(window_y, sample_percentile)


@dataclass(frozen=True)
class PercentileOracleConfig:
    """window is the number of trailing blocks sampled; fixed_percentile of
    None means the requested confidence level itself is used."""

    window: int
    fixed_percentile: float | None = None

    def __post_init__(self):
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.fixed_percentile is not None and not 0.0 <= self.fixed_percentile <= 100.0:
            raise ValueError(
                f"fixed_percentile must be in [0, 100], got {self.fixed_percentile}"
            )


class PercentileWindowOracle:
    """Stateless backtest oracle quoting window percentiles.

    The window is sorted once per target and shared across confidence levels.
    """

    def __init__(self, name: str, config: PercentileOracleConfig):
        self.name = name
        self.config = config
        self.min_history = config.window
        self.is_stateless = True

    def quote_prices(
        self, history: Sequence[int], at: int, alphas: Sequence[float]
    ) -> dict[float, int]:
        window = self.config.window
        if at < window:
            raise InsufficientHistoryError(
                f"{self.name} needs {window} past blocks, have {at}"
            )
        ordered = sorted(history[at - window : at])
        if self.config.fixed_percentile is not None:
            price = empirical_percentile_price(ordered, self.config.fixed_percentile)
            return {alpha: price for alpha in alphas}
        quotes = {}
        for alpha in alphas:
            if not 0.0 < alpha < 100.0:
                raise ValueError(f"alpha must be in (0, 100), got {alpha}")
            quotes[alpha] = empirical_percentile_price(ordered, alpha)
        return quotes

    def observe(self, actual_y: int) -> None:
        pass


def gs_express_oracle(window: int = GS_EXPRESS_WINDOW) -> PercentileWindowOracle:
    """Confidence level maps straight to the window percentile."""
    return PercentileWindowOracle(
        name=f"gs-express-{window}", config=PercentileOracleConfig(window=window)
    )


def geth_oracle(
    window: int = GETH_WINDOW,
    sample_percentile: float = GETH_SAMPLE_PERCENTILE,
) -> PercentileWindowOracle:
    """Fixed-percentile oracle resembling the default node fee suggestion."""
    return PercentileWindowOracle(
        name=f"geth-{window}",
        config=PercentileOracleConfig(window=window, fixed_percentile=sample_percentile),
    )
