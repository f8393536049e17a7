"""Backtesting driver and inclusion metrics.

A backtest walks the processed minimum-price series block by block: at each
target position the oracle sees only earlier blocks, quotes one price per
confidence level, and the quote succeeds if it is at or above the block's
actual minimum.  Aggregates per level are the success rate, the average
quoted cost in Gwei, the inclusion-probability-weighted cost, and the worst
success rate over short sliding windows of targets.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from time import perf_counter
from typing import Protocol, Sequence, runtime_checkable

from .errors import InsufficientHistoryError, InvariantViolation

WEI_PER_GWEI = 1_000_000_000

SHORT_TERM_WINDOWS = (25, 50, 100)


@runtime_checkable
class Oracle(Protocol):
    """What the backtest driver needs from a price oracle.

    history is the full minimum-price series; at is the 0-based position of
    the target block, so history[:at] is all the oracle may look at.
    observe is called with the realized minimum after each target and must be
    a no-op when is_stateless is true.
    """

    name: str
    min_history: int
    is_stateless: bool

    def quote_prices(
        self, history: Sequence[int], at: int, alphas: Sequence[float]
    ) -> dict[float, int]: ...

    def observe(self, actual_y: int) -> None: ...


def success_indicator(predicted: int, actual: int) -> int:
    """1 if a bid at the predicted price would have entered the block."""
    return 1 if predicted >= actual else 0


def success_rate(indicators: Sequence[int]) -> float:
    if len(indicators) == 0:
        raise ValueError("success rate of an empty sequence")
    return sum(indicators) / len(indicators)


def average_cost_gwei(prices_wei: Sequence[int]) -> float:
    """Mean quoted price in Gwei; the sum is exact integer arithmetic."""
    if len(prices_wei) == 0:
        raise ValueError("average cost of an empty sequence")
    return sum(prices_wei) / (len(prices_wei) * WEI_PER_GWEI)


def ipw(avg_cost_gwei: float, rate: float) -> float:
    """Inclusion-probability-weighted cost: Gwei paid per unit of success rate."""
    if not rate > 0.0:
        raise ValueError(f"success rate must be positive, got {rate}")
    return avg_cost_gwei / rate


def min_short_term_success(indicators: Sequence[int], window: int) -> float:
    """Worst mean indicator over every contiguous window of the given length.

    One pass with a running sum, so long series stay cheap.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    n = len(indicators)
    if n < window:
        raise ValueError(f"need at least {window} indicators, have {n}")
    running = sum(indicators[:window])
    best = running
    for i in range(window, n):
        running += indicators[i] - indicators[i - window]
        if running < best:
            best = running
    return best / window


@dataclass(frozen=True)
class PredictionRecord:
    """One target block: its 1-based position, realized minimum, and quotes."""

    position: int
    actual: int
    quotes: dict[float, int]


@dataclass
class BacktestReport:
    oracle_name: str
    alphas: tuple[float, ...]
    records: list[PredictionRecord]
    config: dict = field(default_factory=dict)
    elapsed_seconds: float = 0.0

    @property
    def n_targets(self) -> int:
        return len(self.records)

    def indicators(self, alpha: float) -> list[int]:
        return [success_indicator(r.quotes[alpha], r.actual) for r in self.records]

    def aggregates(
        self, short_term_windows: Sequence[int] = SHORT_TERM_WINDOWS
    ) -> dict[str, dict]:
        out: dict[str, dict] = {}
        previous_rate = None
        for alpha in self.alphas:
            flags = self.indicators(alpha)
            rate = success_rate(flags)
            if previous_rate is not None and rate < previous_rate:
                raise InvariantViolation(
                    f"success rate decreased with alpha: {previous_rate:.6f} -> "
                    f"{rate:.6f} at alpha={alpha}"
                )
            previous_rate = rate
            cost = average_cost_gwei([r.quotes[alpha] for r in self.records])
            entry = {
                "success_rate": rate,
                "average_cost_gwei": cost,
                "ipw": ipw(cost, rate) if rate > 0 else None,
                "min_short_term_success": {
                    str(m): min_short_term_success(flags, m)
                    for m in short_term_windows
                    if m <= len(flags)
                },
            }
            out[format_alpha(alpha)] = entry
        return out

    def to_json_dict(
        self,
        short_term_windows: Sequence[int] = SHORT_TERM_WINDOWS,
        include_timing: bool = False,
    ) -> dict:
        doc = {
            "oracle": self.oracle_name,
            "config": self.config,
            "alphas": list(self.alphas),
            "records": [
                [r.position, r.actual] + [r.quotes[a] for a in self.alphas]
                for r in self.records
            ],
            "aggregates": self.aggregates(short_term_windows),
        }
        if include_timing:
            doc["elapsed_seconds"] = self.elapsed_seconds
        return doc


def format_alpha(alpha: float) -> str:
    """Stable string key for a confidence level (95.0 -> "95")."""
    return f"{alpha:g}"


def _check_quote_monotonicity(
    quotes: dict[float, int], alphas: Sequence[float], position: int, oracle_name: str
) -> None:
    previous = None
    for alpha in alphas:
        price = quotes[alpha]
        if price < 0:
            raise InvariantViolation(
                f"{oracle_name} quoted negative price {price} at block {position}"
            )
        if previous is not None and price < previous:
            raise InvariantViolation(
                f"{oracle_name} quotes not monotone in alpha at block {position}: "
                f"{previous} -> {price} at alpha={alpha}"
            )
        previous = price


def _validate_alphas(alphas: Sequence[float]) -> tuple[float, ...]:
    if len(alphas) == 0:
        raise ValueError("at least one confidence level is required")
    for alpha in alphas:
        if not 0.0 < alpha < 100.0:
            raise ValueError(f"alpha must be in (0, 100), got {alpha}")
    ordered = tuple(sorted(alphas))
    if len(set(ordered)) != len(ordered):
        raise ValueError(f"duplicate confidence levels in {list(alphas)}")
    return ordered


def backtest(
    oracle: Oracle,
    series: Sequence[int],
    alphas: Sequence[float],
    train_size: int | None = None,
    start: int | None = None,
    end: int | None = None,
    jobs: int = 1,
) -> BacktestReport:
    """Replay the series through the oracle and collect one record per target.

    Positions are 1-based: with train_size n the first default target is
    block n+1 of the series.  start/end (inclusive/exclusive, 1-based) narrow
    the target range.  jobs > 1 evaluates targets in a thread pool, allowed
    only for stateless oracles; results are identical to the sequential path.
    """
    ordered_alphas = _validate_alphas(alphas)
    warm_up = max(oracle.min_history, train_size or 0)
    first = warm_up + 1 if start is None else start
    last = len(series) + 1 if end is None else end
    if first <= warm_up:
        raise InsufficientHistoryError(
            f"first target {first} needs {warm_up} prior blocks"
        )
    if last > len(series) + 1:
        raise ValueError(f"end {last} is past the series ({len(series)} blocks)")
    if first >= last:
        raise ValueError(f"empty target range [{first}, {last})")
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    if jobs > 1 and not oracle.is_stateless:
        raise ValueError(f"oracle {oracle.name} is stateful; parallel backtest "
                         "would reorder its observations")

    targets = range(first - 1, last - 1)  # 0-based positions into the series
    started = perf_counter()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            all_quotes = list(
                pool.map(lambda t: oracle.quote_prices(series, t, ordered_alphas), targets)
            )
    else:
        all_quotes = []
        for t in targets:
            all_quotes.append(oracle.quote_prices(series, t, ordered_alphas))
            oracle.observe(series[t])
    elapsed = perf_counter() - started

    records = []
    for t, quotes in zip(targets, all_quotes):
        _check_quote_monotonicity(quotes, ordered_alphas, t + 1, oracle.name)
        records.append(
            PredictionRecord(position=t + 1, actual=series[t], quotes=dict(quotes))
        )
    report = BacktestReport(
        oracle_name=oracle.name,
        alphas=ordered_alphas,
        records=records,
        config={
            "oracle": oracle.name,
            "train_size": warm_up,
            "start": first,
            "end": last,
            "alphas": list(ordered_alphas),
        },
        elapsed_seconds=elapsed,
    )
    report.aggregates()  # rate monotonicity is checked on aggregation; fail fast
    return report
