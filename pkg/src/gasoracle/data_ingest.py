"""Load raw block/transaction gas-price data from files or an Ethereum node.

Raw CSV interchange: header ``block_number,tx_index,gas_price_wei``, one row
per transaction, blocks in strictly increasing order.  Raw JSON convenience
format: a list of ``{"block_number": int, "gas_prices": [int, ...]}`` objects.
Processed CSV: header ``block_number,min_gas_price_wei``.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import requests

from .errors import (
    ConfigError,
    FetchError,
    OrderingError,
    ParseError,
    SchemaError,
)

log = logging.getLogger(__name__)

RPC_URL_ENV = "GAS_ORACLE_RPC_URL"

RAW_CSV_HEADER = ["block_number", "tx_index", "gas_price_wei"]
PROCESSED_CSV_HEADER = ["block_number", "min_gas_price_wei"]


@dataclass(frozen=True)
class RawBlock:
    """A block number plus the gas price (wei) of each of its transactions.

    ``gas_prices`` may be empty: empty blocks exist on chain.
    """

    block_number: int
    gas_prices: tuple[int, ...]

    def __post_init__(self):
        if self.block_number < 0:
            raise ValueError(f"block_number must be non-negative, got {self.block_number}")
        if any(p < 0 for p in self.gas_prices):
            raise ValueError(f"block {self.block_number}: negative gas price")

    @property
    def tx_count(self) -> int:
        return len(self.gas_prices)


@dataclass(frozen=True)
class Dataset:
    """An ordered run of raw blocks; block numbers strictly increase, gaps allowed."""

    blocks: tuple[RawBlock, ...]
    source_descriptor: str = ""

    def __post_init__(self):
        numbers = [b.block_number for b in self.blocks]
        for prev, cur in zip(numbers, numbers[1:]):
            if cur <= prev:
                raise OrderingError(
                    f"block numbers not strictly increasing: {prev} then {cur}"
                )

    def __len__(self) -> int:
        return len(self.blocks)


def _infer_format(path: str | Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("csv", "json"):
            raise ConfigError(f"unknown raw data format {fmt!r} (expected csv or json)")
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix == ".json":
        return "json"
    return "csv"


def load_blocks(path: str | Path, fmt: str | None = None) -> Dataset:
    """Read a raw block file (CSV or JSON) into a Dataset.

    Rows are grouped by block_number in file order; duplicate
    (block, tx_index) rows and non-monotone block numbers are rejected.
    """
    fmt = _infer_format(path, fmt)
    if fmt == "json":
        return _load_blocks_json(path)
    return _load_blocks_csv(path)


def _load_blocks_csv(path: str | Path) -> Dataset:
    blocks: list[RawBlock] = []
    cur_number: int | None = None
    cur_prices: list[int] = []
    cur_indices: set[int] = set()

    def close_group():
        if cur_number is not None:
            blocks.append(RawBlock(cur_number, tuple(cur_prices)))

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {RAW_CSV_HEADER}")
        if [h.strip() for h in header] != RAW_CSV_HEADER:
            raise SchemaError(f"{path}: bad header {header}, expected {RAW_CSV_HEADER}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", line=line)
            try:
                number, tx_index, price = (int(x) for x in row)
            except ValueError:
                raise ParseError(f"non-integer field in row {row}", line=line)
            if number < 0 or tx_index < 0 or price < 0:
                raise ParseError(f"negative value in row {row}", line=line)
            if cur_number is None or number > cur_number:
                close_group()
                cur_number, cur_prices, cur_indices = number, [], set()
            elif number < cur_number:
                raise OrderingError(
                    f"{path}: line {line}: block {number} after block {cur_number}"
                )
            if tx_index in cur_indices:
                raise ParseError(
                    f"duplicate (block, tx_index) = ({number}, {tx_index})", line=line
                )
            cur_indices.add(tx_index)
            cur_prices.append(price)
    close_group()
    return Dataset(tuple(blocks), source_descriptor=str(path))


def _load_blocks_json(path: str | Path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}", line=exc.lineno)
    if not isinstance(payload, list):
        raise SchemaError(f"{path}: expected a JSON list of block objects")
    blocks: list[RawBlock] = []
    for i, entry in enumerate(payload):
        if not isinstance(entry, dict):
            raise SchemaError(f"{path}: entry {i} is not an object")
        try:
            number = entry["block_number"]
            prices = entry["gas_prices"]
        except KeyError as exc:
            raise SchemaError(f"{path}: entry {i} missing key {exc}")
        if not isinstance(number, int) or not isinstance(prices, list):
            raise SchemaError(f"{path}: entry {i} has wrong field types")
        if not all(isinstance(p, int) for p in prices):
            raise SchemaError(f"{path}: entry {i} has non-integer gas prices")
        blocks.append(RawBlock(number, tuple(prices)))
    try:
        return Dataset(tuple(blocks), source_descriptor=str(path))
    except OrderingError as exc:
        raise OrderingError(f"{path}: {exc}")


# --- JSON-RPC fetch ---------------------------------------------------------

_thread_local = threading.local()


def _session() -> requests.Session:
    s = getattr(_thread_local, "session", None)
    if s is None:
        s = requests.Session()
        _thread_local.session = s
    return s


def _decode_gas_price(value, block_number: int) -> int:
    if isinstance(value, str):
        try:
            return int(value, 16)
        except ValueError:
            raise SchemaError(f"block {block_number}: bad gasPrice {value!r}")
    if isinstance(value, int):
        return value
    raise SchemaError(f"block {block_number}: bad gasPrice {value!r}")


def _fetch_one(
    endpoint: str, number: int, retries: int, backoff: float, timeout: float
) -> RawBlock:
    payload = {
        "jsonrpc": "2.0",
        "id": number,
        "method": "eth_getBlockByNumber",
        "params": [hex(number), True],
    }
    last_error: Exception | None = None
    for attempt in range(retries + 1):
        if attempt:
            time.sleep(backoff * 2 ** (attempt - 1))
        try:
            resp = _session().post(endpoint, json=payload, timeout=timeout)
            resp.raise_for_status()
            body = resp.json()
        except (requests.RequestException, ValueError) as exc:
            last_error = exc
            log.debug("block %d attempt %d failed: %s", number, attempt + 1, exc)
            continue
        if body.get("error"):
            last_error = FetchError(f"block {number}: rpc error {body['error']}")
            continue
        result = body.get("result")
        if result is None:
            last_error = FetchError(f"block {number}: node returned no result")
            continue
        txs = result.get("transactions")
        if txs is None:
            raise SchemaError(f"block {number}: result has no transactions field")
        prices = []
        for tx in txs:
            if not isinstance(tx, dict) or "gasPrice" not in tx:
                raise SchemaError(f"block {number}: transaction missing gasPrice")
            prices.append(_decode_gas_price(tx["gasPrice"], number))
        return RawBlock(number, tuple(prices))
    raise FetchError(
        f"block {number}: giving up after {retries + 1} attempts"
    ) from last_error


def fetch_block_range(
    endpoint: str | None,
    start: int,
    end: int,
    *,
    max_in_flight: int = 4,
    retries: int = 5,
    backoff: float = 0.5,
    timeout: float = 30.0,
) -> Dataset:
    """Fetch blocks [start, end] over Ethereum JSON-RPC, in block order.

    Issues eth_getBlockByNumber with the full-transaction flag and collects
    each transaction's gasPrice (hex wei).  Requests run with bounded
    concurrency but results are delivered in ascending block order.
    Transient failures are retried with exponential backoff.
    """
    endpoint = endpoint or os.environ.get(RPC_URL_ENV)
    if not endpoint:
        raise ConfigError(f"no RPC endpoint given and {RPC_URL_ENV} is not set")
    if start < 0:
        raise ValueError(f"start block must be non-negative, got {start}")
    if start > end:
        raise ValueError(f"start {start} > end {end}")
    numbers = range(start, end + 1)
    if max_in_flight <= 1 or len(numbers) == 1:
        blocks = [_fetch_one(endpoint, n, retries, backoff, timeout) for n in numbers]
    else:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            blocks = list(
                pool.map(lambda n: _fetch_one(endpoint, n, retries, backoff, timeout), numbers)
            )
    descriptor = f"{endpoint} [{start}, {end}]"
    return Dataset(tuple(blocks), source_descriptor=descriptor)


def save_raw(blocks: Iterable[RawBlock], path: str | Path, append: bool = False) -> None:
    """Write RawBlocks as the per-transaction raw CSV.

    With append=True the header is only written to a new/empty file, so a
    partially fetched range can be extended in place.
    """
    path = Path(path)
    mode = "a" if append else "w"
    need_header = not append or not path.exists() or path.stat().st_size == 0
    with open(path, mode, newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if need_header:
            writer.writerow(RAW_CSV_HEADER)
        for block in blocks:
            for tx_index, price in enumerate(block.gas_prices):
                writer.writerow([block.block_number, tx_index, price])


# --- processed-series cache -------------------------------------------------


def save_processed(blocks: Iterable, path: str | Path) -> None:
    """Write ProcessedBlocks as the two-column processed CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PROCESSED_CSV_HEADER)
        for block in blocks:
            writer.writerow([block.block_number, block.y])


def load_processed(path: str | Path) -> list:
    """Read a processed CSV back into ProcessedBlocks.

    Round-trips with save_processed.  The file must have exactly the
    two canonical columns; anything else is a schema error.
    """
    from .preprocess import ProcessedBlock  # deferred to avoid an import cycle

    blocks: list[ProcessedBlock] = []
    prev_number: int | None = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {PROCESSED_CSV_HEADER}")
        if [h.strip() for h in header] != PROCESSED_CSV_HEADER:
            raise SchemaError(
                f"{path}: bad header {header}, expected {PROCESSED_CSV_HEADER}"
            )
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 2:
                raise SchemaError(
                    f"{path}: line {line}: expected 2 columns, got {len(row)}"
                )
            try:
                number, y = int(row[0]), int(row[1])
            except ValueError:
                raise ParseError(f"non-integer field in row {row}", line=line)
            if y <= 0:
                raise ParseError(f"min_gas_price_wei must be positive, got {y}", line=line)
            if prev_number is not None and number <= prev_number:
                raise OrderingError(
                    f"{path}: line {line}: block {number} after block {prev_number}"
                )
            prev_number = number
            blocks.append(ProcessedBlock(number, y))
    return blocks
