import csv
import io
import json

import numpy as np
import pytest

import gasoracle.cli_report as cli
from gasoracle.baseline_oracles import gs_express_quote
from gasoracle.cli_report import main, parse_alphas, parse_range, format_table
from gasoracle.data_ingest import RPC_URL_ENV, load_blocks, save_processed, save_raw, RawBlock
from gasoracle.errors import ConfigError
from gasoracle.preprocess import ProcessedBlock, preprocess_chain
from rpc_stub import rpc_server, tx


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    rng = np.random.default_rng(7)
    series = [int(v) for v in rng.integers(10**10, 10**11, size=160)]
    blocks = [ProcessedBlock(i + 1, y) for i, y in enumerate(series)]
    path = tmp_path_factory.mktemp("data") / "processed.csv"
    save_processed(blocks, path)
    return str(path), series


def run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


GS_ARGS = ["--oracle", "gs-express", "--window", "20", "--train-size", "20"]


# --- option parsing helpers --------------------------------------------------


def test_parse_range_forms():
    assert parse_range("100:200") == (100, 200)
    assert parse_range(":200") == (None, 200)
    assert parse_range("100:") == (100, None)
    assert parse_range(None) == (None, None)
    for bad in ("5", "abc:2", "0:5", "3:-1"):
        with pytest.raises(ConfigError):
            parse_range(bad)


def test_parse_alphas_forms():
    assert parse_alphas("50,75") == (50.0, 75.0)
    assert parse_alphas("95, 50") == (50.0, 95.0)
    assert parse_alphas([95, 50]) == (50.0, 95.0)
    for bad in ("", "50,50", "0", "101", "fast"):
        with pytest.raises(ConfigError):
            parse_alphas(bad)


def test_format_table_aligns_columns():
    text = format_table(["name", "x"], [["a", "1"], ["long-name", "22"]])
    lines = text.splitlines()
    assert lines[0].startswith("name")
    assert set(lines[1]) <= {"-", " "}
    assert len({len(line) for line in lines if line.strip()}) <= 2  # ragged right only


# --- preprocess --------------------------------------------------------------


def test_preprocess_flow(tmp_path, capsys):
    raw = tmp_path / "raw.csv"
    blocks = (
        RawBlock(1, tuple(range(10, 110, 10))),
        RawBlock(2, (5, 6, 7)),  # too few transactions: dropped
        RawBlock(3, tuple(range(20, 100, 10))),
    )
    save_raw(blocks, raw)
    out = tmp_path / "processed.csv"
    code, stdout, _ = run(["preprocess", "--in", str(raw), "--out", str(out)], capsys)
    assert code == 0
    assert "processed 2 of 3 blocks" in stdout
    assert "1 dropped" in stdout

    from gasoracle.data_ingest import load_processed

    assert load_processed(out) == preprocess_chain(load_blocks(raw))


# --- backtest ----------------------------------------------------------------


def test_backtest_table_output(data_csv, capsys):
    path, _ = data_csv
    code, stdout, _ = run(
        ["backtest", "--data", path, *GS_ARGS, "--alphas", "50,95"], capsys
    )
    assert code == 0
    assert "long-run success rate" in stdout
    assert "average cost (gwei)" in stdout
    assert "gs-express-20" in stdout
    assert "140 targets in" in stdout and "ms per target" in stdout


def test_backtest_json_report_is_byte_identical_on_rerun(data_csv, tmp_path, capsys):
    path, _ = data_csv
    args = ["backtest", "--data", path, *GS_ARGS, "--alphas", "50,95"]
    out_a, out_b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(args + ["--out", str(out_a)], capsys)[0] == 0
    assert run(args + ["--out", str(out_b)], capsys)[0] == 0
    assert out_a.read_bytes() == out_b.read_bytes()

    doc = json.loads(out_a.read_text())
    assert doc["oracle"] == "gs-express-20"
    assert doc["alphas"] == [50.0, 95.0]
    assert doc["config"]["data"] == path
    assert doc["config"]["oracle_params"] == {"kind": "gs-express", "window": 20}
    assert len(doc["records"]) == 140
    assert doc["records"][0][0] == 21  # first target position
    assert set(doc["aggregates"]) == {"50", "95"}
    assert "elapsed_seconds" not in doc


def test_backtest_stdout_json_matches_file(data_csv, tmp_path, capsys):
    path, _ = data_csv
    out = tmp_path / "r.json"
    code, stdout, _ = run(
        ["--format", "json", "backtest", "--data", path, *GS_ARGS,
         "--alphas", "75", "--out", str(out)],
        capsys,
    )
    assert code == 0
    assert stdout == out.read_text()


def test_backtest_timing_is_opt_in(data_csv, tmp_path, capsys):
    path, _ = data_csv
    out = tmp_path / "t.json"
    code, _, _ = run(
        ["backtest", "--data", path, *GS_ARGS, "--alphas", "50", "--timing",
         "--out", str(out)],
        capsys,
    )
    assert code == 0
    assert json.loads(out.read_text())["elapsed_seconds"] >= 0.0


def test_backtest_range_narrows_targets(data_csv, tmp_path, capsys):
    path, _ = data_csv
    out = tmp_path / "r.json"
    code, _, _ = run(
        ["backtest", "--data", path, *GS_ARGS, "--alphas", "50",
         "--range", "30:40", "--out", str(out)],
        capsys,
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert [row[0] for row in doc["records"]] == list(range(30, 40))


def test_backtest_threads_do_not_change_the_report(data_csv, tmp_path, capsys):
    path, _ = data_csv
    base = ["backtest", "--data", path, *GS_ARGS, "--alphas", "50,95"]
    one, four = tmp_path / "one.json", tmp_path / "four.json"
    assert run(base + ["--threads", "1", "--out", str(one)], capsys)[0] == 0
    assert run(base + ["--threads", "4", "--out", str(four)], capsys)[0] == 0
    assert one.read_bytes() == four.read_bytes()


def test_backtest_summary_csv(data_csv, tmp_path, capsys):
    path, _ = data_csv
    out = tmp_path / "summary.csv"
    code, _, _ = run(
        ["backtest", "--data", path, *GS_ARGS, "--alphas", "50,95",
         "--summary-csv", str(out)],
        capsys,
    )
    assert code == 0
    rows = list(csv.reader(io.StringIO(out.read_text())))
    assert rows[0][:5] == ["oracle", "alpha", "success_rate", "average_cost_gwei", "ipw"]
    assert [r[1] for r in rows[1:]] == ["50", "95"]
    assert all(r[0] == "gs-express-20" for r in rows[1:])
    rate_50, rate_95 = float(rows[1][2]), float(rows[2][2])
    assert 0.0 <= rate_50 <= rate_95 <= 1.0


def test_backtest_gp_oracle_end_to_end(data_csv, tmp_path, capsys):
    path, _ = data_csv
    out = tmp_path / "gp.json"
    code, _, _ = run(
        ["backtest", "--data", path, "--oracle", "gp", "--train-size", "30",
         "--refit-every", "50", "--alphas", "50,84.13", "--range", "31:46",
         "--out", str(out)],
        capsys,
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["config"]["oracle_params"]["kind"] == "gp"
    assert doc["config"]["oracle_params"]["fit"]["refit_every"] == 50
    assert set(doc["aggregates"]) == {"50", "84.13"}
    for row in doc["records"]:
        assert row[2] <= row[3]  # quotes monotone across the two levels


def test_backtest_hybrid_single_level(data_csv, tmp_path, capsys):
    path, _ = data_csv
    out = tmp_path / "h.json"
    code, _, _ = run(
        ["backtest", "--data", path, "--oracle", "hybrid", "--alphas", "75",
         "--n-gs", "5", "--n-gp", "20", "--train-size", "20",
         "--refit-every", "10", "--range", "41:61", "--out", str(out)],
        capsys,
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["oracle"] == "hybrid-75"
    assert doc["config"]["oracle_params"]["kind"] == "hybrid"
    assert doc["config"]["oracle_params"]["n_gs"] == 5
    assert len(doc["records"]) == 20


def test_backtest_hybrid_multi_level_writes_combined_doc(data_csv, tmp_path, capsys):
    path, _ = data_csv
    out = tmp_path / "h2.json"
    code, _, _ = run(
        ["backtest", "--data", path, "--oracle", "hybrid", "--alphas", "60,75",
         "--n-gs", "5", "--n-gp", "20", "--train-size", "20",
         "--refit-every", "10", "--range", "41:56", "--out", str(out)],
        capsys,
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["oracle"] == "hybrid"
    assert doc["alphas"] == [60.0, 75.0]
    assert [r["oracle"] for r in doc["reports"]] == ["hybrid-60", "hybrid-75"]
    for rep in doc["reports"]:
        assert len(rep["records"]) == 15


# --- compare -----------------------------------------------------------------


def test_compare_table_lists_every_oracle(data_csv, capsys):
    path, _ = data_csv
    code, stdout, _ = run(
        ["compare", "--data", path, "--oracles", "gs-express,geth",
         "--window", "20", "--train-size", "25", "--alphas", "50,95"],
        capsys,
    )
    assert code == 0
    assert "gs-express-20" in stdout and "geth-20" in stdout
    assert "cost per unit success" in stdout


def test_compare_aligns_warm_up_across_oracles(data_csv, tmp_path, capsys):
    path, _ = data_csv
    out = tmp_path / "cmp.json"
    code, _, _ = run(
        ["--format", "json", "compare", "--data", path,
         "--oracles", "gs-express,geth", "--window", "20", "--train-size", "25",
         "--alphas", "50", "--out", str(out)],
        capsys,
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["config"]["train_size"] == 25
    assert doc["config"]["oracles"] == ["gs-express", "geth"]
    first_positions = {rep["records"][0][0] for rep in doc["reports"]}
    assert first_positions == {26}  # every oracle scores the same targets


def test_compare_with_hybrid(data_csv, tmp_path, capsys):
    path, _ = data_csv
    out = tmp_path / "cmp.json"
    code, stdout, _ = run(
        ["compare", "--data", path, "--oracles", "gs-express,hybrid",
         "--window", "20", "--train-size", "20", "--alphas", "75",
         "--n-gs", "5", "--n-gp", "20", "--refit-every", "10",
         "--range", "41:61", "--out", str(out)],
        capsys,
    )
    assert code == 0
    assert "hybrid" in stdout and "gs-express-20" in stdout
    doc = json.loads(out.read_text())
    assert [rep["oracle"] for rep in doc["reports"]] == ["gs-express-20", "hybrid-75"]


def test_compare_rejects_unknown_oracle(data_csv, capsys):
    path, _ = data_csv
    code, _, err = run(["compare", "--data", path, "--oracles", "psychic"], capsys)
    assert code == 2
    assert "psychic" in err


# --- quote -------------------------------------------------------------------


def test_quote_table_output(data_csv, capsys):
    path, series = data_csv
    code, stdout, _ = run(
        ["quote", "--history", path, "--oracle", "gs-express", "--window", "20",
         "--alphas", "50,95"],
        capsys,
    )
    assert code == 0
    assert "next block after position 160" in stdout
    expected = gs_express_quote(series[-20:], 50.0)
    assert str(expected) in stdout


def test_quote_json_output(data_csv, capsys):
    path, series = data_csv
    code, stdout, _ = run(
        ["--format", "json", "quote", "--history", path, "--oracle", "gs-express",
         "--window", "20", "--alpha", "75"],
        capsys,
    )
    assert code == 0
    doc = json.loads(stdout)
    assert doc["config"]["next_position"] == 161
    assert doc["quotes"] == {"75": gs_express_quote(series[-20:], 75.0)}


def test_quote_hybrid_reports_its_regime(data_csv, capsys):
    path, _ = data_csv
    code, stdout, _ = run(
        ["quote", "--history", path, "--oracle", "hybrid", "--alpha", "75",
         "--n-gs", "5", "--n-gp", "20"],
        capsys,
    )
    assert code == 0
    assert "regime:" in stdout


def test_quote_rejects_alpha_and_alphas_together(data_csv, capsys):
    path, _ = data_csv
    code, _, err = run(
        ["quote", "--history", path, "--alpha", "75", "--alphas", "50,75"], capsys
    )
    assert code == 2
    assert "either --alpha or --alphas" in err


# --- plot-data ---------------------------------------------------------------


def test_plot_data_from_backtest_report(data_csv, tmp_path, capsys):
    path, _ = data_csv
    report = tmp_path / "r.json"
    run(
        ["backtest", "--data", path, *GS_ARGS, "--alphas", "50,95",
         "--range", "30:40", "--out", str(report)],
        capsys,
    )
    out = tmp_path / "plot.csv"
    code, _, _ = run(["plot-data", "--report", str(report), "--out", str(out)], capsys)
    assert code == 0
    rows = list(csv.reader(io.StringIO(out.read_text())))
    assert rows[0] == ["block_number", "actual_gwei", "oracle", "alpha", "predicted_gwei"]
    assert len(rows) == 1 + 10 * 2  # ten targets, two levels

    doc = json.loads(report.read_text())
    position, actual, price_50, _ = doc["records"][0]
    assert rows[1] == [
        str(position),
        f"{actual / 1e9:.3f}",
        "gs-express-20",
        "50",
        f"{price_50 / 1e9:.3f}",
    ]


def test_plot_data_handles_combined_reports(data_csv, tmp_path, capsys):
    path, _ = data_csv
    report = tmp_path / "cmp.json"
    run(
        ["compare", "--data", path, "--oracles", "gs-express,geth",
         "--window", "20", "--train-size", "25", "--alphas", "50",
         "--range", "30:35", "--out", str(report)],
        capsys,
    )
    code, stdout, _ = run(["plot-data", "--report", str(report)], capsys)
    assert code == 0
    rows = list(csv.reader(io.StringIO(stdout)))
    assert len(rows) == 1 + 5 * 2  # five targets for each of the two oracles
    assert {r[2] for r in rows[1:]} == {"gs-express-20", "geth-20"}


def test_plot_data_rejects_malformed_reports(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["plot-data", "--report", str(bad)], capsys)[0] == 3

    bad.write_text(json.dumps({"foo": 1}))
    assert run(["plot-data", "--report", str(bad)], capsys)[0] == 3


# --- configuration file and precedence ---------------------------------------


def test_toml_config_supplies_settings(data_csv, tmp_path, capsys):
    path, _ = data_csv
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        "train_size = 35\n"
        "\n"
        "[backtest]\n"
        'oracle = "gs-express"\n'
        "window = 30\n"
        'alphas = "50,95"\n'
        f'data = "{path}"\n'
    )
    out = tmp_path / "r.json"
    code, _, _ = run(
        ["--config", str(cfg), "backtest", "--out", str(out)], capsys
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["oracle"] == "gs-express-30"  # window from the [backtest] table
    assert doc["config"]["train_size"] == 35  # top-level key reached as fallback
    assert doc["alphas"] == [50.0, 95.0]


def test_cli_flags_override_the_config_file(data_csv, tmp_path, capsys):
    path, _ = data_csv
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(f'[backtest]\noracle = "gs-express"\nwindow = 30\ndata = "{path}"\n')
    out = tmp_path / "r.json"
    code, _, _ = run(
        ["--config", str(cfg), "backtest", "--window", "25", "--train-size", "25",
         "--alphas", "50", "--out", str(out)],
        capsys,
    )
    assert code == 0
    assert json.loads(out.read_text())["oracle"] == "gs-express-25"


def test_fit_section_configures_the_gp(data_csv, tmp_path, capsys):
    path, _ = data_csv
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        "[fit]\n"
        "length_scale_starts = [10.0]\n"
        "sigma_n_starts = [0.1]\n"
        "refit_every = 50\n"
    )
    out = tmp_path / "r.json"
    code, _, _ = run(
        ["--config", str(cfg), "backtest", "--data", path, "--oracle", "gp",
         "--train-size", "30", "--alphas", "50", "--range", "31:41",
         "--out", str(out)],
        capsys,
    )
    assert code == 0
    fit_echo = json.loads(out.read_text())["config"]["oracle_params"]["fit"]
    assert fit_echo["length_scale_starts"] == [10.0]
    assert fit_echo["refit_every"] == 50


def test_unknown_fit_key_is_a_config_error(data_csv, tmp_path, capsys):
    path, _ = data_csv
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("[fit]\nturbo = true\n")
    code, _, err = run(
        ["--config", str(cfg), "backtest", "--data", path, *GS_ARGS,
         "--alphas", "50"],
        capsys,
    )
    assert code == 2
    assert "turbo" in err


def test_out_dir_prefixes_relative_outputs(data_csv, tmp_path, capsys):
    path, _ = data_csv
    code, _, _ = run(
        ["--out-dir", str(tmp_path / "nested" / "runs"), "backtest", "--data", path,
         *GS_ARGS, "--alphas", "50", "--out", "r.json"],
        capsys,
    )
    assert code == 0
    assert (tmp_path / "nested" / "runs" / "r.json").exists()


# --- exit codes --------------------------------------------------------------


def test_missing_data_flag_is_config_error(capsys):
    code, _, err = run(["backtest", "--oracle", "gs-express"], capsys)
    assert code == 2
    assert "needs --data" in err


def test_missing_data_file_is_data_error(tmp_path, capsys):
    code, _, _ = run(
        ["backtest", "--data", str(tmp_path / "nope.csv"), *GS_ARGS,
         "--alphas", "50"],
        capsys,
    )
    assert code == 3


def test_bad_toml_is_config_error(data_csv, tmp_path, capsys):
    path, _ = data_csv
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("not [[ toml = ")
    code, _, err = run(["--config", str(cfg), "backtest", "--data", path], capsys)
    assert code == 2
    assert "bad TOML" in err


def test_missing_config_file_is_config_error(data_csv, capsys):
    path, _ = data_csv
    code, _, _ = run(["--config", "/does/not/exist.toml", "backtest", "--data", path], capsys)
    assert code == 2


def test_bad_range_is_config_error(data_csv, capsys):
    path, _ = data_csv
    code, _, _ = run(
        ["backtest", "--data", path, *GS_ARGS, "--alphas", "50", "--range", "7"],
        capsys,
    )
    assert code == 2


def test_unknown_oracle_choice_exits_2(data_csv, capsys):
    path, _ = data_csv
    with pytest.raises(SystemExit) as excinfo:
        main(["backtest", "--data", path, "--oracle", "psychic"])
    assert excinfo.value.code == 2


def test_invariant_violation_exits_4(data_csv, monkeypatch, capsys):
    path, _ = data_csv

    class Rigged:
        name = "rigged"
        min_history = 1
        is_stateless = True

        def quote_prices(self, history, at, alphas):
            return {50.0: 100, 95.0: 50}

        def observe(self, actual_y):
            pass

    monkeypatch.setattr(
        cli, "build_oracle", lambda *a, **k: (Rigged(), {"kind": "rigged"})
    )
    code, _, err = run(
        ["backtest", "--data", path, "--oracle", "gs-express", "--alphas", "50,95",
         "--train-size", "5"],
        capsys,
    )
    assert code == 4
    assert "monotone" in err


# --- ingest ------------------------------------------------------------------


def test_ingest_writes_raw_csv(tmp_path, capsys, monkeypatch):
    out = tmp_path / "raw.csv"
    with rpc_server() as server:
        for n in range(1, 5):
            server.blocks[n] = [tx(n * 100), tx(n * 100 + 1)]
        monkeypatch.setenv(RPC_URL_ENV, server.endpoint)
        code, stdout, _ = run(
            ["ingest", "--start-block", "1", "--end-block", "4", "--out", str(out)],
            capsys,
        )
    assert code == 0
    assert "4 blocks, 8 transactions" in stdout
    dataset = load_blocks(out)
    assert [b.block_number for b in dataset.blocks] == [1, 2, 3, 4]
    assert dataset.blocks[0].gas_prices == (100, 101)


def test_ingest_resume_fetches_only_new_blocks(tmp_path, capsys):
    out = tmp_path / "raw.csv"
    with rpc_server() as server:
        for n in range(1, 7):
            server.blocks[n] = [tx(n)]
        base = ["ingest", "--rpc-url", server.endpoint, "--out", str(out)]
        assert run(base + ["--start-block", "1", "--end-block", "4"], capsys)[0] == 0
        assert (
            run(base + ["--start-block", "1", "--end-block", "6", "--resume"], capsys)[0]
            == 0
        )
        assert all(server.request_counts[n] == 1 for n in range(1, 7))

        # fully covered already: nothing is fetched
        code, stdout, _ = run(
            base + ["--start-block", "1", "--end-block", "6", "--resume"], capsys
        )
        assert code == 0
        assert "nothing to fetch" in stdout
        assert all(server.request_counts[n] == 1 for n in range(1, 7))
    assert [b.block_number for b in load_blocks(out).blocks] == [1, 2, 3, 4, 5, 6]


def test_ingest_requires_block_range(capsys):
    code, _, err = run(["ingest", "--rpc-url", "http://localhost:1/"], capsys)
    assert code == 2
    assert "start-block" in err
