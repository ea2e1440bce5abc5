"""End-to-end command-line tests driven through cli.main with exit-code checks."""
import csv
import json

import pytest

from memport.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


BASE = ["--window-months", "36", "--step-months", "24", "--grid-size", "50"]


class TestPrice:
    def test_prices_inside_boxes(self, small_fixture_csv, capsys):
        code, out, err = run(
            capsys, "price", "--input", str(small_fixture_csv), *BASE
        )
        assert code == 0, err
        result = json.loads(out)
        assert len(result["assets"]) == 3
        for row in result["assets"]:
            assert row["bid"] - 1e-6 <= row["price_unbounded"] <= row["ask"] + 1e-6

    def test_both_modes_emit_two_columns(self, small_fixture_csv, capsys):
        code, out, _ = run(
            capsys, "price", "--input", str(small_fixture_csv), "--mode", "both", *BASE
        )
        assert code == 0
        row = json.loads(out)["assets"][0]
        assert "price_unbounded" in row and "price_bounded" in row

    def test_ticker_filter(self, small_fixture_csv, capsys):
        code, out, _ = run(
            capsys, "price", "--input", str(small_fixture_csv), "--tickers", "BBB", *BASE
        )
        assert code == 0
        assert [r["ticker"] for r in json.loads(out)["assets"]] == ["BBB"]

    def test_empty_ticker_filter_fails(self, small_fixture_csv, capsys):
        code, _, err = run(
            capsys, "price", "--input", str(small_fixture_csv), "--tickers", " ", *BASE
        )
        assert code == 1
        assert "no assets selected" in err

    def test_unknown_ticker_fails(self, small_fixture_csv, capsys):
        code, _, err = run(
            capsys, "price", "--input", str(small_fixture_csv), "--tickers", "ZZZ", *BASE
        )
        assert code == 1
        assert "ZZZ" in err

    def test_csv_format(self, small_fixture_csv, capsys, tmp_path):
        out_path = tmp_path / "prices.csv"
        code, _, _ = run(
            capsys, "price", "--input", str(small_fixture_csv),
            "--format", "csv", "--output", str(out_path), *BASE,
        )
        assert code == 0
        rows = list(csv.reader(out_path.open()))
        assert rows[0][:4] == ["ticker", "current", "bid", "ask"]
        assert len(rows) == 4

    def test_explicit_pricing_date(self, small_fixture_csv, capsys):
        code, out, _ = run(
            capsys, "price", "--input", str(small_fixture_csv),
            "--date", "2004-06-30", *BASE,
        )
        assert code == 0
        assert json.loads(out)["epoch_end"] == "2004-06-30"

    def test_missing_input_is_usage_error(self, capsys):
        code, _, err = run(capsys, "price")
        assert code == 2
        assert "usage error" in err

    def test_unreadable_file_is_domain_error(self, capsys, tmp_path):
        code, _, err = run(capsys, "price", "--input", str(tmp_path / "absent.csv"))
        assert code == 1


class TestBacktest:
    def test_writes_report_and_boxplots(self, small_fixture_csv, capsys, tmp_path):
        outdir = tmp_path / "run"
        code, _, err = run(
            capsys, "backtest", "--input", str(small_fixture_csv),
            "--output", str(outdir), "--format", "csv", *BASE,
        )
        assert code == 0, err
        report = json.loads((outdir / "report.json").read_text())
        assert report["schema_version"] == 1
        assert report["config"]["window_months"] == 36
        n_windows = len(report["windows"])
        assert len(list(outdir.glob("boxplot_window_*.csv"))) == n_windows
        lines = (outdir / "quartiles.csv").read_text().splitlines()
        assert lines[0].startswith("objective,price_source,q0")
        labels = {line.split(",")[1] for line in lines[1:]}
        assert labels == {"S(0)_current", "S(0)_mem"}

    def test_runs_are_identical_across_jobs(self, small_fixture_csv, capsys, tmp_path):
        reports = []
        for name, jobs in (("a", "1"), ("b", "3")):
            outdir = tmp_path / name
            code, _, _ = run(
                capsys, "backtest", "--input", str(small_fixture_csv),
                "--output", str(outdir), "--jobs", jobs, *BASE,
            )
            assert code == 0
            report = json.loads((outdir / "report.json").read_text())
            # the embedded config records the differing jobs flag and paths
            report.pop("config")
            reports.append(report)
        assert json.dumps(reports[0], sort_keys=True) == json.dumps(reports[1], sort_keys=True)

    def test_window_longer_than_data(self, small_fixture_csv, capsys):
        code, _, err = run(
            capsys, "backtest", "--input", str(small_fixture_csv),
            "--window-months", "1200",
        )
        assert code == 1
        assert "1200" in err

    def test_mode_both_rejected(self, small_fixture_csv, capsys):
        code, _, err = run(
            capsys, "backtest", "--input", str(small_fixture_csv), "--mode", "both",
        )
        assert code == 2

    def test_unknown_mode_is_usage_error(self, small_fixture_csv, capsys):
        code, _, err = run(
            capsys, "backtest", "--input", str(small_fixture_csv), "--mode", "sideways",
        )
        assert code == 2


class TestConfigFile:
    def test_file_presets_and_cli_override(self, small_fixture_csv, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "# experiment presets\n"
            f"input = {small_fixture_csv}\n"
            "window-months = 36\n"
            "step-months = 24\n"
            "grid-size = 50\n"
            "tickers = AAA,BBB\n"
        )
        code, out, err = run(
            capsys, "price", "--config", str(cfg), "--tickers", "CCC"
        )
        assert code == 0, err
        assert [r["ticker"] for r in json.loads(out)["assets"]] == ["CCC"]
        assert json.loads(out)["config"]["window_months"] == 36

    def test_malformed_line_rejected(self, small_fixture_csv, capsys, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("window-months 36\n")
        code, _, err = run(
            capsys, "price", "--input", str(small_fixture_csv), "--config", str(cfg)
        )
        assert code == 1
        assert "line 1" in err


@pytest.fixture(scope="module")
def two_reports(small_fixture_csv, tmp_path_factory):
    outroot = tmp_path_factory.mktemp("reports")
    paths = []
    for name, step in (("a", "24"), ("b", "36")):
        outdir = outroot / name
        code = main([
            "backtest", "--input", str(small_fixture_csv),
            "--window-months", "36", "--step-months", step,
            "--grid-size", "50", "--output", str(outdir),
        ])
        assert code == 0
        paths.append(outdir / "report.json")
    return paths


class TestReport:
    def test_identity_merge(self, two_reports, capsys):
        code, out, _ = run(capsys, "report", str(two_reports[0]))
        assert code == 0
        merged = json.loads(out)
        original = json.loads(two_reports[0].read_text())
        for key, row in original["quartiles"].items():
            for stat, value in row.items():
                assert merged["quartiles"][key][stat] == pytest.approx(value)

    def test_two_file_merge_sums_support(self, two_reports, capsys):
        code, out, _ = run(capsys, "report", *(str(p) for p in two_reports))
        assert code == 0
        merged = json.loads(out)
        totals = [json.loads(p.read_text()) for p in two_reports]
        for key, row in merged["quartiles"].items():
            assert row["support"] == sum(
                t["quartiles"][key]["support"] for t in totals
            )

    def test_csv_output(self, two_reports, capsys):
        code, out, _ = run(
            capsys, "report", str(two_reports[0]), "--format", "csv"
        )
        assert code == 0
        assert out.splitlines()[0].startswith("objective,price_source")

    def test_schema_mismatch(self, two_reports, capsys, tmp_path):
        mangled = json.loads(two_reports[0].read_text())
        mangled["schema_version"] = 99
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(mangled))
        code, _, err = run(capsys, "report", str(two_reports[0]), str(bad))
        assert code == 1
        assert "schema" in err

    def test_invalid_json_is_domain_error(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code, _, _ = run(capsys, "report", str(bad))
        assert code == 1
