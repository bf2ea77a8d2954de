import math

import numpy as np
import pytest

from mirstat.cli import (
    ANALYSIS_COLUMNS,
    DEFAULT_THETA_GRID,
    AnalysisConfig,
    CliError,
    _segments,
    analyze,
    format_rows,
    ingest,
    main,
    read_config,
    theta_search,
    transform,
)
from mirstat.estimator import adaptive_estimate
from mirstat.sim import ARFIMA, FGN, PowerLawPlus, simulate


def _write_lines(path, values):
    path.write_text("".join(f"{float(v)!r}\n" for v in values))
    return path


def _error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return err[0]


# ingest / transform -------------------------------------------------------


def test_ingest_single_column(tmp_path):
    f = _write_lines(tmp_path / "x.txt", np.arange(100.0))
    s = ingest(f)
    assert len(s) == 100 and s.values[-1] == 99.0


def test_ingest_named_and_indexed_column(tmp_path):
    f = tmp_path / "x.csv"
    f.write_text("date,price\n" + "".join(f"d{i},{i + 1.5}\n" for i in range(60)))
    assert ingest(f, "price").values[0] == 1.5
    assert ingest(f, "1").values[-1] == 60.5
    with pytest.raises(CliError, match="no column"):
        ingest(f, "volume")
    with pytest.raises(CliError, match="--column"):
        ingest(f)


def test_ingest_reports_line(tmp_path):
    vals = [str(float(i)) for i in range(60)]
    vals[6] = "abc"
    f = tmp_path / "x.txt"
    f.write_text("\n".join(vals) + "\n")
    with pytest.raises(CliError, match=r":7: not a number") as err:
        ingest(f)
    assert err.value.code == "E_INPUT"


def test_ingest_rejects_nan_blank_and_short(tmp_path):
    f = tmp_path / "x.txt"
    f.write_text("1\n" * 30 + "nan\n" + "1\n" * 30)
    with pytest.raises(CliError, match=":31: non-finite"):
        ingest(f)
    f.write_text("1\n" * 30 + "\n" + "1\n" * 30)
    with pytest.raises(CliError, match=":31: blank"):
        ingest(f)
    f.write_text("1\n" * 49)
    with pytest.raises(CliError, match="at least 50"):
        ingest(f)
    with pytest.raises(CliError) as err:
        ingest(tmp_path / "missing.txt")
    assert err.value.code == "E_IO"


def test_transforms():
    prices = np.full(60, 7.0)
    assert np.all(transform(prices, "returns").values == 0.0)
    r = np.random.default_rng(0).standard_normal(100)
    assert np.array_equal(transform(r, "power", 2.0).values, transform(r, "square").values)
    assert np.array_equal(transform(np.abs(r), "power", 1.0).values, transform(r, "abs").values)
    p = np.exp(np.cumsum(r * 0.01))
    assert np.allclose(transform(p, "returns").values, np.diff(np.log(p)))
    with pytest.raises(CliError, match="nonpositive"):
        transform(np.r_[1.0, 0.0, 2.0], "returns")
    with pytest.raises(CliError):
        transform(r, "power")
    with pytest.raises(CliError):
        transform(r, "log")


# config -------------------------------------------------------------------


def test_read_config(tmp_path):
    f = tmp_path / "a.cfg"
    f.write_text("# comment\ninput = data.txt  # trailing\n\nlevel=0.1\n")
    assert read_config(f) == {"input": "data.txt", "level": "0.1"}
    f.write_text("input = a\ninput = b\n")
    with pytest.raises(CliError, match="duplicate"):
        read_config(f)
    f.write_text("nonsense\n")
    with pytest.raises(CliError, match=":1:"):
        read_config(f)


def test_analysis_config_parsing(tmp_path):
    cfg = AnalysisConfig.from_mapping(
        {"input": "x.csv", "transforms": "returns, power(0.5), power-search", "breakpoints": "1, 100, 200",
         "theta_grid": "0.5:1.5:0.5", "format": "both"},
        base_dir=tmp_path,
    )
    assert cfg.input == str(tmp_path / "x.csv")
    assert cfg.transforms == ("returns", "power(0.5)", "power-search")
    assert cfg.breakpoints == (1, 100, 200)
    assert cfg.theta_grid == (0.5, 1.0, 1.5)
    for bad in ({"input": "x", "transforms": "cube"}, {"input": "x", "breakpoints": "5, 3"},
                {"input": "x", "theta_grid": "0:4:1"}, {"transforms": "abs"}, {"input": "x", "colour": "red"},
                {"input": "x", "series": "volumes"}):
        with pytest.raises(CliError) as err:
            AnalysisConfig.from_mapping(bad)
        assert err.value.code == "E_CONFIG"


def test_default_theta_grid():
    assert DEFAULT_THETA_GRID[0] == 0.05 and DEFAULT_THETA_GRID[-1] == 3.0
    assert all(0 < t <= 3 for t in DEFAULT_THETA_GRID)
    assert np.allclose(np.diff(DEFAULT_THETA_GRID), 0.05)


def test_segments():
    assert _segments(300, ()) == [(0, 300)]
    assert _segments(300, (1, 150, 300)) == [(0, 149), (149, 300)]
    with pytest.raises(CliError):
        _segments(300, (1, 400))
    with pytest.raises(CliError):
        _segments(300, (5,))


def test_format_rows():
    rows = [{"a": 1, "b": 0.123456, "c": "x|y"}]
    assert format_rows(rows, ("a", "b", "c"), "csv") == "a,b,c\n1,0.1235,x|y\n"
    md = format_rows(rows, ("a", "b", "c"), "markdown").splitlines()
    assert len(md) == 3 and "x\\|y" in md[2]


# subcommands ----------------------------------------------------------------


def test_simulate_command(tmp_path, capsys):
    out = tmp_path / "s.txt"
    assert main(["simulate", "--model", "arfima(d=0.3)", "--n", "200", "--seed", "4", "--out", str(out)]) == 0
    vals = np.array(out.read_text().split(), dtype=float)
    assert np.array_equal(vals, simulate(ARFIMA(0.3), 200, 4).values)
    assert main(["simulate", "--model", "fgn(h=0.7)", "--n", "5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 5 and all(len(s.lstrip("-").replace(".", "").split("e")[0]) >= 15 for s in lines)


def test_model_error_position(capsys):
    assert main(["simulate", "--model", "arfima(d=0.3,ar=[x])", "--n", "10"]) == 1
    line = _error_line(capsys)
    assert line.startswith("error E_MODEL:") and "position 17" in line


def test_usage_errors(capsys):
    assert main(["frobnicate"]) == 2
    assert _error_line(capsys).startswith("error E_USAGE:")
    assert main(["estimate"]) == 2
    assert _error_line(capsys).startswith("error E_USAGE:")


def test_estimate_missing_file(tmp_path, capsys):
    assert main(["estimate", "--in", str(tmp_path / "none.txt")]) == 1
    assert _error_line(capsys).startswith("error E_IO:")


def test_bench_config_errors(tmp_path, capsys):
    f = tmp_path / "b.cfg"
    f.write_text("n = 200\n")
    assert main(["bench", "--spec", str(f)]) == 1
    assert _error_line(capsys).startswith("error E_CONFIG:")
    f.write_text("models = arfima(d=)\nn = 200\n")
    assert main(["bench", "--spec", str(f)]) == 1
    assert _error_line(capsys).startswith("error E_MODEL:")
    f.write_text("models = arfima(d=0)\nn = 200\nspeed = 3\n")
    assert main(["bench", "--spec", str(f)]) == 1
    assert "speed" in _error_line(capsys)


def test_verify_command(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[-1].endswith("passed") and "FAIL" not in "\n".join(out)


def test_bad_gamma_table(tmp_path, capsys):
    data = _write_lines(tmp_path / "x.txt", np.random.default_rng(0).standard_normal(300))
    bad = tmp_path / "g.txt"
    bad.write_text("not a table\n")
    assert main(["estimate", "--in", str(data), "--gamma", str(bad)]) == 1
    assert _error_line(capsys).startswith("error E_TABLE:")


# end to end (packaged table) ---------------------------------------------


def test_estimate_and_test_commands(tmp_path, capsys):
    data = _write_lines(tmp_path / "x.txt", simulate(ARFIMA(0.3), 2000, 1).values)
    assert main(["estimate", "--in", str(data)]) == 0
    out1 = capsys.readouterr().out
    assert main(["estimate", "--in", str(data)]) == 0
    assert capsys.readouterr().out == out1
    assert main(["test", "--in", str(data), "--kind", "stat"]) == 0
    assert "stationarity test" in capsys.readouterr().out
    assert main(["test", "--in", str(data), "--kind", "threshold"]) == 2
    assert _error_line(capsys).startswith("error E_USAGE:")


@pytest.mark.parametrize("model", [ARFIMA(0.3), ARFIMA(0.9), FGN(0.7), PowerLawPlus(0.2, 0.1, 1.5)])
def test_round_trip_recovers_d(model, tmp_path, capsys):
    out = tmp_path / "s.txt"
    assert main(["simulate", "--model", str(model), "--n", "10000", "--seed", "8", "--out", str(out)]) == 0
    rep = adaptive_estimate(ingest(out).values)
    assert abs(rep.d - model.memory) < 3 * rep.se


def test_theta_search_properties():
    r = simulate(ARFIMA(0.0), 2000, 3).values
    grid = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
    res = theta_search(r, grid)
    assert res.theta in grid and len(res.profile) == len(grid)
    assert theta_search(3.7 * r, grid) == res
    for theta, d, err in res.profile:
        rep = adaptive_estimate(np.abs(r) ** theta)
        assert err is None and abs(d) < 3 * rep.se
    with pytest.raises(CliError):
        theta_search(r, (0.0, 1.0))


def test_analyze_white_noise(tmp_path):
    r = simulate(ARFIMA(0.0), 1500, 2).values * 0.01
    prices = 100 * np.exp(np.cumsum(np.r_[0.0, r]))
    _write_lines(tmp_path / "p.txt", prices)
    cfg = AnalysisConfig.from_mapping({"input": "p.txt", "transforms": "returns"}, tmp_path)
    (row,) = analyze(cfg)
    assert row["N"] == 1500 and row["S"] == "accept"
    assert abs(row["d"]) < 3 * row["se"]
    assert row["kurtosis"] == pytest.approx(3.0, abs=0.5)


def test_analyze_segments_and_long_memory(tmp_path):
    y = simulate(ARFIMA(0.3), 3000, 5).values
    _write_lines(tmp_path / "r.txt", y)
    cfg = AnalysisConfig.from_mapping(
        {"input": "r.txt", "series": "returns", "transforms": "returns, abs", "breakpoints": "1, 1500, 3000"},
        tmp_path,
    )
    rows = analyze(cfg)
    assert [r["segment"] for r in rows] == ["1-1499", "1-1499", "1500-3000", "1500-3000"]
    full = AnalysisConfig.from_mapping({"input": "r.txt", "series": "returns", "transforms": "returns"}, tmp_path)
    (row,) = analyze(full)
    assert row["S"] == "accept" and row["LM"] == "long memory"


def test_analyze_command_output(tmp_path, capsys):
    _write_lines(tmp_path / "r.txt", simulate(ARFIMA(0.2), 800, 6).values)
    cfg = tmp_path / "a.cfg"
    cfg.write_text("input = r.txt\nseries = returns\ntransforms = returns, square, power-search\n"
                   "theta_grid = 0.5:2:0.5\nformat = both\n")
    assert main(["analyze", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert out.count("|r|^") == 1 and "(argmax)" in out
    assert ",".join(ANALYSIS_COLUMNS) in out
