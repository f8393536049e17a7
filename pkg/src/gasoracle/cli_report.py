"""Command-line front door: ingest, preprocess, backtest, compare, quote,
and plot-data subcommands.

Settings resolve in the order command line > TOML config file (subcommand
section, then top level) > environment > built-in defaults.  Machine output
is deterministic: rerunning a subcommand with the config echoed in its JSON
reproduces the same bytes (wall-clock timing is only included on request).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 invariant
violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import asdict, fields as dataclass_fields
from pathlib import Path
from typing import Any, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .baseline_oracles import (
    GETH_SAMPLE_PERCENTILE,
    GETH_WINDOW,
    GS_EXPRESS_WINDOW,
    geth_oracle,
    gs_express_oracle,
)
from .data_ingest import (
    RPC_URL_ENV,
    fetch_block_range,
    load_blocks,
    load_processed,
    save_processed,
    save_raw,
)
from .errors import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_OK,
    ConfigError,
    GasOracleError,
    ParseError,
)
from .evaluation import SHORT_TERM_WINDOWS, BacktestReport, backtest, format_alpha
from .gp_regression import FitConfig, GpOracle
from .hybrid_oracle import HybridConfig, HybridOracle, backtest_hybrid
from .preprocess import preprocess_chain

log = logging.getLogger(__name__)

DEFAULT_ALPHAS = (50.0, 75.0, 84.13, 95.0)
DEFAULT_TRAIN_SIZE = 200
ORACLE_KINDS = ("gp", "gs-express", "geth", "hybrid")


# --- config plumbing --------------------------------------------------------


def load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad TOML in {path}: {exc}")


def setting(
    args: argparse.Namespace,
    file_cfg: dict,
    section: str,
    key: str,
    env: str | None = None,
    default: Any = None,
) -> Any:
    """One resolved setting: CLI flag, [section] table, top level, env, default."""
    value = getattr(args, key, None)
    if value is None:
        value = file_cfg.get(section, {}).get(key)
    if value is None:
        top = file_cfg.get(key)
        if not isinstance(top, dict):  # bare top-level keys only; tables are sections
            value = top
    if value is None and env is not None:
        value = os.environ.get(env)
    return default if value is None else value


def parse_alphas(value) -> tuple[float, ...]:
    if isinstance(value, str):
        parts = [p for p in value.split(",") if p.strip()]
    else:
        parts = list(value)
    try:
        alphas = tuple(float(p) for p in parts)
    except (TypeError, ValueError):
        raise ConfigError(f"bad alpha list: {value!r}")
    if not alphas:
        raise ConfigError("alpha list is empty")
    for alpha in alphas:
        if not 0.0 < alpha < 100.0:
            raise ConfigError(f"alpha must be in (0, 100), got {alpha}")
    ordered = tuple(sorted(alphas))
    if len(set(ordered)) != len(ordered):
        raise ConfigError(f"duplicate alphas in {value!r}")
    return ordered


def parse_range(value: str | None) -> tuple[int | None, int | None]:
    """"A:B" in 1-based series positions, end exclusive; either side optional."""
    if value is None:
        return None, None
    text = str(value)
    if ":" not in text:
        raise ConfigError(f"range must look like START:END, got {text!r}")
    left, _, right = text.partition(":")
    try:
        start = int(left) if left.strip() else None
        end = int(right) if right.strip() else None
    except ValueError:
        raise ConfigError(f"non-integer range bound in {text!r}")
    if (start is not None and start < 1) or (end is not None and end < 1):
        raise ConfigError(f"range bounds are 1-based, got {text!r}")
    return start, end


def make_fit_config(file_cfg: dict, refit_every: int | None = None) -> FitConfig:
    section = dict(file_cfg.get("fit", {}))
    known = {f.name for f in dataclass_fields(FitConfig)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown [fit] keys: {sorted(unknown)}")
    kwargs = {
        key: tuple(value) if isinstance(value, list) else value
        for key, value in section.items()
    }
    if refit_every is not None:
        kwargs["refit_every"] = refit_every
    try:
        return FitConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad fit config: {exc}")


def make_hybrid_config(
    args: argparse.Namespace,
    file_cfg: dict,
    section: str,
    alpha: float,
    fit_config: FitConfig,
) -> HybridConfig:
    table = dict(file_cfg.get("hybrid", {}))
    known = {"alpha", "n_gs", "n_gp", "e", "bisection_iterations"}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"unknown [hybrid] keys: {sorted(unknown)}")
    kwargs = {
        "alpha": alpha,
        "n_gs": setting(args, file_cfg, section, "n_gs", default=table.get("n_gs", 30)),
        "n_gp": setting(args, file_cfg, section, "n_gp", default=table.get("n_gp", 200)),
        "e": setting(args, file_cfg, section, "e", default=table.get("e", 0.1)),
        "fit_config": fit_config,
    }
    if "bisection_iterations" in table:
        kwargs["bisection_iterations"] = table["bisection_iterations"]
    try:
        return HybridConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad hybrid config: {exc}")


def build_oracle(
    kind: str,
    *,
    train_size: int,
    window: int | None,
    sample_percentile: float | None,
    fit_config: FitConfig,
):
    """Oracle instance plus the parameter echo that goes into reports."""
    if kind == "gp":
        oracle = GpOracle(train_size=train_size, fit_config=fit_config)
        return oracle, {"kind": "gp", "train_size": train_size, "fit": asdict(fit_config)}
    if kind == "gs-express":
        w = window or GS_EXPRESS_WINDOW
        return gs_express_oracle(window=w), {"kind": "gs-express", "window": w}
    if kind == "geth":
        w = window or GETH_WINDOW
        pct = sample_percentile if sample_percentile is not None else GETH_SAMPLE_PERCENTILE
        return geth_oracle(window=w, sample_percentile=pct), {
            "kind": "geth",
            "window": w,
            "sample_percentile": pct,
        }
    raise ConfigError(f"unknown oracle {kind!r}, expected one of {ORACLE_KINDS}")


def resolve_out(args: argparse.Namespace, value: str | None) -> Path | None:
    if value is None:
        return None
    path = Path(value)
    out_dir = getattr(args, "out_dir", None)
    if out_dir is not None and not path.is_absolute():
        path = Path(out_dir) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


# --- rendering --------------------------------------------------------------


def format_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))

    def fmt(cells: Sequence[str]) -> str:
        first = cells[0].ljust(widths[0])
        rest = [cell.rjust(w) for cell, w in zip(cells[1:], widths[1:])]
        return "  ".join([first, *rest]).rstrip()

    lines = [fmt(headers), "  ".join("-" * w for w in widths)]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)


_METRIC_SECTIONS = (
    ("long-run success rate", "success_rate", "{:.3f}"),
    ("average cost (gwei)", "average_cost_gwei", "{:.1f}"),
    ("cost per unit success (ipw, gwei)", "ipw", "{:.2f}"),
)


def render_comparison(
    agg_by_oracle: dict[str, dict], alphas: Sequence[float]
) -> str:
    """Success-rate / cost / ipw tables plus the short-window minimums."""
    alpha_keys = [format_alpha(a) for a in sorted(alphas)]
    chunks = []
    for title, key, fmt in _METRIC_SECTIONS:
        rows = []
        for name, agg in agg_by_oracle.items():
            cells = [name]
            for ak in alpha_keys:
                value = agg.get(ak, {}).get(key)
                cells.append("-" if value is None else fmt.format(value))
            rows.append(cells)
        headers = ["oracle"] + [f"P{ak}" for ak in alpha_keys]
        chunks.append(f"{title}\n{format_table(headers, rows)}")

    windows = sorted(
        {
            int(m)
            for agg in agg_by_oracle.values()
            for entry in agg.values()
            for m in entry.get("min_short_term_success", {})
        }
    )
    if windows:
        rows = []
        for name, agg in agg_by_oracle.items():
            for ak in alpha_keys:
                entry = agg.get(ak)
                if entry is None:
                    continue
                cells = [name, ak]
                for m in windows:
                    value = entry["min_short_term_success"].get(str(m))
                    cells.append("-" if value is None else f"{value:.2f}")
                rows.append(cells)
        headers = ["oracle", "alpha"] + [f"m={m}" for m in windows]
        chunks.append(f"minimum short-term success rate\n{format_table(headers, rows)}")
    return "\n\n".join(chunks)


def summary_csv_text(agg_by_oracle: dict[str, dict], alphas: Sequence[float]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    windows = sorted(SHORT_TERM_WINDOWS)
    writer.writerow(
        ["oracle", "alpha", "success_rate", "average_cost_gwei", "ipw"]
        + [f"min_success_{m}" for m in windows]
    )
    for name, agg in agg_by_oracle.items():
        for alpha in sorted(alphas):
            entry = agg.get(format_alpha(alpha))
            if entry is None:
                continue
            short = entry["min_short_term_success"]
            writer.writerow(
                [
                    name,
                    format_alpha(alpha),
                    repr(entry["success_rate"]),
                    repr(entry["average_cost_gwei"]),
                    "" if entry["ipw"] is None else repr(entry["ipw"]),
                ]
                + [
                    "" if str(m) not in short else repr(short[str(m)])
                    for m in windows
                ]
            )
    return buf.getvalue()


def json_text(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


# --- backtest orchestration shared by backtest/compare ----------------------


def run_oracle_backtests(
    kind: str,
    series: list[int],
    alphas: tuple[float, ...],
    *,
    args: argparse.Namespace,
    file_cfg: dict,
    section: str,
    train_size: int | None,
    start: int | None,
    end: int | None,
    threads: int,
    timing: bool,
    data_path: str,
) -> tuple[str, dict, list[dict], float]:
    """Run one oracle kind over the series.

    Returns (display name, merged aggregates keyed by alpha, report JSON
    docs, total elapsed seconds).  The hybrid runs once per level; everything
    else runs once across all levels.
    """
    refit_every = setting(args, file_cfg, section, "refit_every")
    fit_config = make_fit_config(file_cfg, refit_every)
    if kind == "hybrid":
        base = make_hybrid_config(args, file_cfg, section, alphas[0], fit_config)
        reports = backtest_hybrid(
            series, base, alphas, train_size=train_size, start=start, end=end
        )
        if threads > 1:
            log.debug("hybrid oracle is stateful; running single-threaded")
        agg: dict[str, dict] = {}
        docs = []
        elapsed = 0.0
        for alpha in sorted(reports):
            report = reports[alpha]
            agg.update(report.aggregates())
            doc = report.to_json_dict(include_timing=timing)
            doc["config"]["data"] = data_path
            doc["config"]["oracle_params"] = {
                "kind": "hybrid",
                **{
                    k: v
                    for k, v in asdict(base).items()
                    if k not in ("alpha", "fit_config")
                },
                "alpha": alpha,
                "fit": asdict(base.fit_config),
            }
            docs.append(doc)
            elapsed += report.elapsed_seconds
        return "hybrid", agg, docs, elapsed

    oracle, params = build_oracle(
        kind,
        train_size=train_size or DEFAULT_TRAIN_SIZE,
        window=setting(args, file_cfg, section, "window"),
        sample_percentile=setting(args, file_cfg, section, "sample_percentile"),
        fit_config=fit_config,
    )
    jobs = threads if oracle.is_stateless else 1
    report = backtest(
        oracle,
        series,
        alphas,
        train_size=train_size,
        start=start,
        end=end,
        jobs=jobs,
    )
    doc = report.to_json_dict(include_timing=timing)
    doc["config"]["data"] = data_path
    doc["config"]["oracle_params"] = params
    return oracle.name, report.aggregates(), [doc], report.elapsed_seconds


# --- subcommands ------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace, file_cfg: dict) -> int:
    section = "ingest"
    rpc_url = setting(args, file_cfg, section, "rpc_url", env=RPC_URL_ENV)
    start = setting(args, file_cfg, section, "start_block")
    end = setting(args, file_cfg, section, "end_block")
    if start is None or end is None:
        raise ConfigError("ingest needs --start-block and --end-block")
    start, end = int(start), int(end)
    if start > end:
        raise ConfigError(f"start block {start} > end block {end}")
    out = resolve_out(args, setting(args, file_cfg, section, "out", default="raw.csv"))
    max_in_flight = int(setting(args, file_cfg, section, "max_in_flight", default=4))
    retries = int(setting(args, file_cfg, section, "retries", default=5))

    append = False
    if setting(args, file_cfg, section, "resume") and out.exists() and out.stat().st_size:
        existing = load_blocks(out, "csv")
        if len(existing):
            done = existing.blocks[-1].block_number
            if done >= end:
                print(f"{out}: already contains blocks through {done}, nothing to fetch")
                return EXIT_OK
            log.info("resuming after block %d", done)
            start = max(start, done + 1)
            append = True

    dataset = fetch_block_range(
        rpc_url, start, end, max_in_flight=max_in_flight, retries=retries
    )
    save_raw(dataset.blocks, out, append=append)
    txs = sum(b.tx_count for b in dataset.blocks)
    print(f"fetched blocks {start}..{end}: {len(dataset)} blocks, {txs} transactions -> {out}")
    return EXIT_OK


def cmd_preprocess(args: argparse.Namespace, file_cfg: dict) -> int:
    section = "preprocess"
    in_path = setting(args, file_cfg, section, "in_path")
    if in_path is None:
        raise ConfigError("preprocess needs --in")
    out = resolve_out(
        args, setting(args, file_cfg, section, "out", default="processed.csv")
    )
    fmt = setting(args, file_cfg, section, "in_format")
    dataset = load_blocks(in_path, fmt)
    processed = preprocess_chain(dataset)
    save_processed(processed, out)
    dropped = len(dataset) - len(processed)
    print(
        f"processed {len(processed)} of {len(dataset)} blocks "
        f"({dropped} dropped for having fewer than 7 transactions) -> {out}"
    )
    return EXIT_OK


def cmd_backtest(args: argparse.Namespace, file_cfg: dict) -> int:
    section = "backtest"
    data = setting(args, file_cfg, section, "data")
    if data is None:
        raise ConfigError("backtest needs --data")
    kind = setting(args, file_cfg, section, "oracle", default="gp")
    alphas = parse_alphas(
        setting(args, file_cfg, section, "alphas", default=list(DEFAULT_ALPHAS))
    )
    train_size = setting(args, file_cfg, section, "train_size")
    train_size = int(train_size) if train_size is not None else None
    start, end = parse_range(setting(args, file_cfg, section, "range"))
    threads = int(setting(args, file_cfg, section, "threads", default=1))
    timing = bool(setting(args, file_cfg, section, "timing", default=False))

    blocks = load_processed(data)
    series = [b.y for b in blocks]
    display, agg, docs, elapsed = run_oracle_backtests(
        kind,
        series,
        alphas,
        args=args,
        file_cfg=file_cfg,
        section=section,
        train_size=train_size,
        start=start,
        end=end,
        threads=threads,
        timing=timing,
        data_path=str(data),
    )
    doc = docs[0] if len(docs) == 1 else {
        "oracle": display,
        "alphas": list(alphas),
        "reports": docs,
    }

    fmt = getattr(args, "format", None) or "table"
    if fmt == "json":
        print(json_text(doc), end="")
    elif fmt == "csv":
        print(summary_csv_text({display: agg}, alphas), end="")
    else:
        n_targets = sum(len(d["records"]) for d in docs)
        print(render_comparison({display: agg}, alphas))
        print(
            f"\n{n_targets} targets in {elapsed:.2f} s "
            f"({1000.0 * elapsed / max(1, n_targets):.1f} ms per target)"
        )

    out = resolve_out(args, setting(args, file_cfg, section, "out"))
    if out is not None:
        write_text(out, json_text(doc))
        log.info("wrote %s", out)
    summary = resolve_out(args, setting(args, file_cfg, section, "summary_csv"))
    if summary is not None:
        write_text(summary, summary_csv_text({display: agg}, alphas))
        log.info("wrote %s", summary)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, file_cfg: dict) -> int:
    section = "compare"
    data = setting(args, file_cfg, section, "data")
    if data is None:
        raise ConfigError("compare needs --data")
    kinds_value = setting(
        args, file_cfg, section, "oracles", default="gp,gs-express,geth"
    )
    if isinstance(kinds_value, str):
        kinds = [k.strip() for k in kinds_value.split(",") if k.strip()]
    else:
        kinds = list(kinds_value)
    for kind in kinds:
        if kind not in ORACLE_KINDS:
            raise ConfigError(f"unknown oracle {kind!r}, expected one of {ORACLE_KINDS}")
    if not kinds:
        raise ConfigError("no oracles selected")
    alphas = parse_alphas(
        setting(args, file_cfg, section, "alphas", default=list(DEFAULT_ALPHAS))
    )
    train_size = setting(args, file_cfg, section, "train_size")
    train_size = int(train_size) if train_size is not None else None
    start, end = parse_range(setting(args, file_cfg, section, "range"))
    threads = int(setting(args, file_cfg, section, "threads", default=1))
    timing = bool(setting(args, file_cfg, section, "timing", default=False))

    blocks = load_processed(data)
    series = [b.y for b in blocks]

    # align every oracle on one warm-up so all runs score the same targets
    refit_every = setting(args, file_cfg, section, "refit_every")
    fit_config = make_fit_config(file_cfg, refit_every)
    common = train_size or 0
    for kind in kinds:
        if kind == "hybrid":
            base = make_hybrid_config(args, file_cfg, section, alphas[0], fit_config)
            common = max(common, base.n_gp, 2 * base.n_gs)
        else:
            oracle, _ = build_oracle(
                kind,
                train_size=train_size or DEFAULT_TRAIN_SIZE,
                window=setting(args, file_cfg, section, "window"),
                sample_percentile=setting(args, file_cfg, section, "sample_percentile"),
                fit_config=fit_config,
            )
            common = max(common, oracle.min_history)

    agg_by_oracle: dict[str, dict] = {}
    all_docs: list[dict] = []
    for kind in kinds:
        display, agg, docs, elapsed = run_oracle_backtests(
            kind,
            series,
            alphas,
            args=args,
            file_cfg=file_cfg,
            section=section,
            train_size=common,
            start=start,
            end=end,
            threads=threads,
            timing=timing,
            data_path=str(data),
        )
        log.info("%s: %.2f s", display, elapsed)
        agg_by_oracle[display] = agg
        all_docs.extend(docs)

    fmt = getattr(args, "format", None) or "table"
    doc = {
        "alphas": list(alphas),
        "config": {
            "data": str(data),
            "oracles": kinds,
            "train_size": common,
            "alphas": list(alphas),
        },
        "reports": all_docs,
    }
    if fmt == "json":
        print(json_text(doc), end="")
    elif fmt == "csv":
        print(summary_csv_text(agg_by_oracle, alphas), end="")
    else:
        print(render_comparison(agg_by_oracle, alphas))

    out = resolve_out(args, setting(args, file_cfg, section, "out"))
    if out is not None:
        write_text(out, json_text(doc))
        log.info("wrote %s", out)
    summary = resolve_out(args, setting(args, file_cfg, section, "summary_csv"))
    if summary is not None:
        write_text(summary, summary_csv_text(agg_by_oracle, alphas))
        log.info("wrote %s", summary)
    return EXIT_OK


def cmd_quote(args: argparse.Namespace, file_cfg: dict) -> int:
    section = "quote"
    history_path = setting(args, file_cfg, section, "history")
    if history_path is None:
        raise ConfigError("quote needs --history")
    kind = setting(args, file_cfg, section, "oracle", default="gp")
    single = setting(args, file_cfg, section, "alpha")
    listed = setting(args, file_cfg, section, "alphas")
    if single is not None and listed is not None:
        raise ConfigError("give either --alpha or --alphas, not both")
    if single is not None:
        alphas = parse_alphas([single])
    elif listed is not None:
        alphas = parse_alphas(listed)
    else:
        alphas = DEFAULT_ALPHAS

    blocks = load_processed(history_path)
    series = [b.y for b in blocks]
    at = len(series)
    refit_every = setting(args, file_cfg, section, "refit_every")
    fit_config = make_fit_config(file_cfg, refit_every)
    case = None
    if kind == "hybrid":
        if len(alphas) != 1:
            raise ConfigError("the hybrid oracle quotes one level; use --alpha")
        config = make_hybrid_config(args, file_cfg, section, alphas[0], fit_config)
        oracle = HybridOracle(config)
        quotes = oracle.quote_prices(series, at, alphas)
        case = oracle.case_log[-1][1]
        params: dict[str, Any] = {"kind": "hybrid", **{
            k: v for k, v in asdict(config).items() if k != "fit_config"
        }, "fit": asdict(config.fit_config)}
    else:
        train_size = setting(args, file_cfg, section, "train_size")
        oracle, params = build_oracle(
            kind,
            train_size=int(train_size) if train_size is not None else DEFAULT_TRAIN_SIZE,
            window=setting(args, file_cfg, section, "window"),
            sample_percentile=setting(args, file_cfg, section, "sample_percentile"),
            fit_config=fit_config,
        )
        quotes = oracle.quote_prices(series, at, alphas)

    fmt = getattr(args, "format", None) or "table"
    if fmt == "json":
        doc = {
            "oracle": oracle.name,
            "config": {
                "history": str(history_path),
                "next_position": at + 1,
                "oracle_params": params,
            },
            "quotes": {format_alpha(a): quotes[a] for a in alphas},
        }
        if case is not None:
            doc["case"] = case
        print(json_text(doc), end="")
    else:
        rows = [
            [format_alpha(a), str(quotes[a]), f"{quotes[a] / 1e9:.3f}"]
            for a in alphas
        ]
        print(f"oracle {oracle.name}, next block after position {at}")
        print(format_table(["alpha", "price (wei)", "price (gwei)"], rows))
        if case is not None:
            print(f"regime: {case}")
    return EXIT_OK


def cmd_plot_data(args: argparse.Namespace, file_cfg: dict) -> int:
    section = "plot-data"
    report_path = setting(args, file_cfg, section, "report")
    if report_path is None:
        raise ConfigError("plot-data needs --report")
    try:
        with open(report_path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{report_path}: not valid JSON: {exc}")
    reports = doc["reports"] if "reports" in doc else [doc]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["block_number", "actual_gwei", "oracle", "alpha", "predicted_gwei"])
    for rep in reports:
        try:
            name = rep["oracle"]
            alphas = rep["alphas"]
            records = rep["records"]
        except (KeyError, TypeError):
            raise ParseError(f"{report_path}: missing oracle/alphas/records fields")
        for record in records:
            position, actual, *prices = record
            for alpha, price in zip(alphas, prices):
                writer.writerow(
                    [
                        position,
                        f"{actual / 1e9:.3f}",
                        name,
                        format_alpha(alpha),
                        f"{price / 1e9:.3f}",
                    ]
                )
    out = resolve_out(args, setting(args, file_cfg, section, "out"))
    if out is not None:
        write_text(out, buf.getvalue())
        log.info("wrote %s", out)
    else:
        print(buf.getvalue(), end="")
    return EXIT_OK


# --- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gasoracle",
        description="Gas-price oracles over historical Ethereum blocks: "
        "ingest data, preprocess it, and backtest predictors.",
    )
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--out-dir", help="directory for relative output paths")
    parser.add_argument(
        "--format", choices=("table", "json", "csv"), help="stdout format (default table)"
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="fetch raw blocks over JSON-RPC into a CSV")
    p.add_argument("--rpc-url", help=f"endpoint (default ${RPC_URL_ENV})")
    p.add_argument("--start-block", type=int)
    p.add_argument("--end-block", type=int)
    p.add_argument("--out", help="raw CSV path (default raw.csv)")
    p.add_argument("--max-in-flight", type=int, help="concurrent requests (default 4)")
    p.add_argument("--retries", type=int, help="attempts per block (default 5)")
    p.add_argument(
        "--resume",
        action="store_const",
        const=True,
        help="continue after the last block already in --out",
    )
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("preprocess", help="raw blocks -> minimum-price series CSV")
    p.add_argument("--in", dest="in_path", help="raw CSV or JSON file")
    p.add_argument("--in-format", choices=("csv", "json"), help="default: by extension")
    p.add_argument("--out", help="processed CSV path (default processed.csv)")
    p.set_defaults(func=cmd_preprocess)

    def backtest_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--data", help="processed CSV")
        p.add_argument("--alphas", help="confidence levels, e.g. 50,75,84.13,95")
        p.add_argument("--train-size", type=int, help="warm-up/GP window (default 200)")
        p.add_argument("--window", type=int, help="percentile-oracle window")
        p.add_argument("--sample-percentile", type=float, help="geth fixed percentile")
        p.add_argument("--refit-every", type=int, help="GP hyperparameter refit cadence")
        p.add_argument("--n-gs", type=int, help="hybrid monitor window")
        p.add_argument("--n-gp", type=int, help="hybrid GP window")
        p.add_argument("--e", type=float, help="hybrid rate band half-width (e.g. 0.1)")
        p.add_argument("--range", help="target positions START:END (1-based, end exclusive)")
        p.add_argument("--threads", type=int, help="parallel quoting for stateless oracles")
        p.add_argument("--out", help="write the JSON report here")
        p.add_argument("--summary-csv", help="write a per-alpha summary CSV here")
        p.add_argument(
            "--timing",
            action="store_const",
            const=True,
            help="include wall-clock timing in the JSON report",
        )

    p = sub.add_parser("backtest", help="replay one oracle over a processed series")
    p.add_argument("--oracle", choices=ORACLE_KINDS, help="default gp")
    backtest_flags(p)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("compare", help="side-by-side backtests of several oracles")
    p.add_argument("--oracles", help="comma list from: " + ",".join(ORACLE_KINDS))
    backtest_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("quote", help="price the next block after a history file")
    p.add_argument("--history", help="processed CSV")
    p.add_argument("--oracle", choices=ORACLE_KINDS, help="default gp")
    p.add_argument("--alpha", type=float, help="single confidence level")
    p.add_argument("--alphas", help="comma list of levels")
    p.add_argument("--train-size", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--sample-percentile", type=float)
    p.add_argument("--refit-every", type=int)
    p.add_argument("--n-gs", type=int)
    p.add_argument("--n-gp", type=int)
    p.add_argument("--e", type=float)
    p.set_defaults(func=cmd_quote)

    p = sub.add_parser("plot-data", help="report JSON -> tidy CSV of actual vs predicted")
    p.add_argument("--report", help="backtest/compare JSON report")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_plot_data)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        file_cfg = load_config_file(args.config)
        return args.func(args, file_cfg)
    except GasOracleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
