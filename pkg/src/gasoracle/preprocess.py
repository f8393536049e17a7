"""Reduce raw blocks to the per-block minimum-price series used by all models.

The pipeline keeps blocks with at least 7 transactions, computes each block's
2.5th-percentile fee, drops transactions priced strictly below it, and takes
the minimum surviving price as the block's target value y (wei).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .data_ingest import Dataset, RawBlock

# "more than six transactions" == at least 7
MIN_TX_COUNT = 7
LOW_FEE_PERCENTILE = 2.5


@dataclass(frozen=True)
class ProcessedBlock:
    """A block reduced to its post-trim minimum gas price y (wei)."""

    block_number: int
    y: int
    # Not part of the two-column processed CSV, so excluded from equality to
    # keep save -> load an identity.
    surviving_tx_count: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.block_number < 0:
            raise ValueError(f"block_number must be non-negative, got {self.block_number}")
        if self.y <= 0:
            raise ValueError(f"y must be a positive wei amount, got {self.y}")
        if self.surviving_tx_count is not None and self.surviving_tx_count < 1:
            raise ValueError(f"surviving_tx_count must be >= 1, got {self.surviving_tx_count}")


def linear_percentile(values: Sequence[int | float], q: float) -> float:
    """The q-th percentile under linear interpolation on sorted values.

    Rank r = (q/100) * (n-1); the result interpolates between the two
    bracketing order statistics.  This single definition is shared by the
    pre-processing fee floor and every percentile oracle in the package.
    """
    if not 0.0 <= q <= 100.0:
        raise ValueError(f"percentile must be in [0, 100], got {q}")
    if len(values) == 0:
        raise ValueError("percentile of an empty sequence")
    ordered = sorted(values)
    rank = (q / 100.0) * (len(ordered) - 1)
    lo = math.floor(rank)
    frac = rank - lo
    if frac == 0.0 or lo + 1 >= len(ordered):
        return float(ordered[lo])
    return ordered[lo] + frac * (ordered[lo + 1] - ordered[lo])


def filter_small_blocks(blocks: Iterable[RawBlock]) -> list[RawBlock]:
    """Keep only blocks with at least MIN_TX_COUNT transactions, order preserved."""
    return [b for b in blocks if b.tx_count >= MIN_TX_COUNT]


def low_fee_threshold(prices: Sequence[int]) -> float:
    """The block's 2.5th-percentile gas price; fees strictly below it are noise."""
    if len(prices) == 0:
        raise ValueError("low_fee_threshold of an empty price list")
    return linear_percentile(prices, LOW_FEE_PERCENTILE)


def trim_block(block: RawBlock) -> ProcessedBlock:
    """Drop transactions priced strictly below the block's fee floor; y = min survivor.

    The maximum price is never below the 2.5th percentile, so at least one
    transaction always survives.
    """
    if block.tx_count < MIN_TX_COUNT:
        raise ValueError(
            f"block {block.block_number} has {block.tx_count} transactions, "
            f"need at least {MIN_TX_COUNT}"
        )
    threshold = low_fee_threshold(block.gas_prices)
    survivors = [p for p in block.gas_prices if p >= threshold]
    return ProcessedBlock(
        block_number=block.block_number,
        y=min(survivors),
        surviving_tx_count=len(survivors),
    )


def preprocess_chain(dataset: Dataset | Iterable[RawBlock]) -> list[ProcessedBlock]:
    """Run the full pipeline: small-block filter, then per-block trim."""
    blocks = dataset.blocks if isinstance(dataset, Dataset) else dataset
    return [trim_block(b) for b in filter_small_blocks(blocks)]
