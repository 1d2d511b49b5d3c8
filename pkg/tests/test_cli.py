import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from tandem_paoi import cli


def _read_csv(path):
    lines = path.read_text().splitlines()
    meta = {}
    body = []
    for line in lines:
        if line.startswith("# "):
            k, v = line[2:].split(": ", 1)
            meta[k] = json.loads(v)
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return meta, rows[0], rows[1:]


def _column(rows, header, name, cast=float):
    k = header.index(name)
    return np.array([cast(r[k]) for r in rows])


def test_analytic_md1_defaults(tmp_path):
    out = tmp_path / "a.csv"
    assert cli.main(["--mode", "analytic", "--tandem", "md1", "--out", str(out)]) == 0
    meta, header, rows = _read_csv(out)
    assert header[:3] == ["tau", "pdf_total", "cdf_total"]
    assert {f"cdf_{c}" for c in "ABCD"} <= set(header)
    tau, cdf = _column(rows, header, "tau"), _column(rows, header, "cdf_total")
    assert len(tau) == 301
    assert np.all(cdf[tau < 1.6] == 0.0)
    assert np.all(np.diff(cdf) >= 0)
    assert cdf[-1] == pytest.approx(1.0, abs=1e-4)
    assert meta["case_probabilities"]["A"] == pytest.approx(0.313985, abs=1e-6)
    assert meta["config"]["tandem"] == "md1"


def test_analytic_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["--mode", "analytic", "--tandem", "mm1", "--tau-points", "101"]
    assert cli.main([*args, "--out", str(a)]) == 0
    assert cli.main([*args, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_file_regenerates_from_its_header(tmp_path, fmt):
    a, b = tmp_path / f"a.{fmt}", tmp_path / f"b.{fmt}"
    assert cli.main(["--mode", "sweep", "--tandem", "mm1", "--sweep-param", "lambda", "--sweep-values", "0.3,0.5",
                     "--format", fmt, "--out", str(a)]) == 0
    assert cli.main(["--config", str(a), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    if fmt == "json":
        doc = json.loads(a.read_text())
        assert set(doc) == {"metadata", "columns", "rows"}


def test_simulate_file_deterministic_and_embeds_counts(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["--mode", "simulate", "--tandem", "md1", "--packets", "20000", "--seed", "5"]
    assert cli.main([*args, "--out", str(a)]) == 0
    assert cli.main([*args, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    meta, header, rows = _read_csv(a)
    assert meta["n_samples"] == 19000
    assert sum(meta["case_counts"].values()) == 19000
    assert header[:2] == ["tau", "ecdf_total"]


def test_simulate_single_packet_notice(tmp_path):
    out = tmp_path / "s.csv"
    assert cli.main(["--mode", "simulate", "--packets", "1", "--warmup", "0", "--out", str(out)]) == 0
    meta, _, rows = _read_csv(out)
    assert meta["n_samples"] == 0
    assert "no peak-age samples" in meta["notice"]
    assert rows == []


def test_simulate_unstable_flagged(tmp_path):
    out = tmp_path / "u.csv"
    assert cli.main(["--mode", "simulate", "--tandem", "mm1", "--lambda", "1.1", "--packets", "3000",
                     "--out", str(out)]) == 0
    meta, _, _ = _read_csv(out)
    assert "unstable" in meta["warning"]


def test_compare_pass_and_fail(tmp_path, capsys):
    ok = tmp_path / "ok.csv"
    assert cli.main(["--mode", "compare", "--tandem", "mm1", "--packets", "200000", "--out", str(ok)]) == 0
    meta, header, rows = _read_csv(ok)
    assert meta["passed"] is True
    assert set(_column(rows, header, "result", str)) == {"pass"}
    bad = tmp_path / "bad.csv"
    assert cli.main(["--mode", "compare", "--tandem", "mm1", "--packets", "200000", "--sim-lambda", "0.6",
                     "--out", str(bad)]) == 1
    meta, header, rows = _read_csv(bad)
    metric = list(_column(rows, header, "metric", str))
    ks = _column(rows, header, "value")[metric.index("ks_total")]
    assert ks > 0.01 and meta["passed"] is False


def test_sweep_lambda_u_shape(tmp_path):
    out = tmp_path / "sw.csv"
    assert cli.main(["--mode", "sweep", "--tandem", "mm1", "--sweep-param", "lambda",
                     "--sweep-values", "0.05:0.95:0.05", "--out", str(out)]) == 0
    _, header, rows = _read_csv(out)
    lam, p99 = _column(rows, header, "value"), _column(rows, header, "p99")
    assert len(lam) == 19
    best = lam[np.argmin(p99)]
    assert 0.40 <= best <= 0.55
    assert p99[0] > 2 * p99.min() and p99[lam == 0.9][0] > 2 * p99.min()
    assert header == ["value", "status", "p95", "p99", "p99.9", "mean"]


def test_sweep_unstable_rows_marked(tmp_path):
    out = tmp_path / "sw.csv"
    assert cli.main(["--mode", "sweep", "--tandem", "md1", "--sweep-param", "service_d",
                     "--sweep-values", "0.5,2.5", "--out", str(out)]) == 0
    _, header, rows = _read_csv(out)
    assert list(_column(rows, header, "status", str)) == ["ok", "unstable"]


def test_sweep_d_flattening_gains(tmp_path):
    out = tmp_path / "d.csv"
    assert cli.main(["--mode", "sweep", "--tandem", "md1", "--sweep-param", "service_d",
                     "--sweep-values", "0.2:1.4:0.2", "--percentiles", "0.99", "--out", str(out)]) == 0
    _, header, rows = _read_csv(out)
    p99 = _column(rows, header, "p99")
    steps = np.diff(p99)
    # monotone in D, with each reduction of D buying less than the previous one
    assert np.all(steps > 0)
    assert np.all(np.diff(steps) > 0)


def test_reproduce_fig4(tmp_path):
    assert cli.main(["--mode", "reproduce", "--figure", "fig4", "--packets", "20000", "--out", str(tmp_path)]) == 0
    _, header, rows = _read_csv(tmp_path / "fig4_md1_cases_analytic.csv")
    tau = _column(rows, header, "tau")
    for c in "ABCD":
        cdf = _column(rows, header, f"cdf_{c}")
        assert np.all(cdf[tau < 1.6] == 0.0)
    assert (tmp_path / "fig4_md1_cases_simulated.csv").exists()


def test_reproduce_fig9_ordering(tmp_path):
    assert cli.main(["--mode", "reproduce", "--figure", "fig9", "--tau-points", "2001", "--out", str(tmp_path)]) == 0

    def q(name, p):
        _, header, rows = _read_csv(tmp_path / name)
        tau, cdf = _column(rows, header, "tau"), _column(rows, header, "cdf_total")
        return tau[np.searchsorted(cdf, p)]

    assert q("fig9_md1_D1_analytic.csv", 0.8) < q("fig9_mm1_mu2_1.25_analytic.csv", 0.8)
    assert q("fig9_md1_D1_analytic.csv", 0.2) > q("fig9_mm1_mu2_1.25_analytic.csv", 0.2)


def test_reproduce_fig10_means(tmp_path):
    assert cli.main(["--mode", "reproduce", "--figure", "fig10", "--percentiles", "0.99", "--out", str(tmp_path)]) == 0
    means = {}
    for kind in ("md1", "mm1"):
        _, header, rows = _read_csv(tmp_path / f"fig10c_mean_{kind}.csv")
        lam = _column(rows, header, "value")
        means[kind] = _column(rows, header, "mean")[lam == 0.75][0]
    assert means["md1"] < means["mm1"]


def test_default_output_directory_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path))
    assert cli.main(["--mode", "analytic", "--tau-points", "11"]) == 0
    assert (tmp_path / "analytic.csv").exists()


def test_config_errors_exit_2(tmp_path, capsys):
    assert cli.main(["--mode", "analytic", "--tau-points", "1", "--out", str(tmp_path / "x.csv")]) == 2
    assert "tau_points" in capsys.readouterr().err
    assert cli.main(["--mode", "analytic", "--mu1", "-1", "--out", str(tmp_path / "x.csv")]) == 2
    assert cli.main(["--mode", "analytic", "--lambda", "2", "--out", str(tmp_path / "x.csv")]) == 2
    assert cli.main(["--config", str(tmp_path / "missing.csv")]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["--mode", "reproduce", "--figure", "fig99"])
    assert exc.value.code == 2


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.json"
    res = subprocess.run([sys.executable, "-m", "tandem_paoi", "--mode", "analytic", "--tau-points", "5",
                          "--format", "json", "--out", str(out)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert json.loads(out.read_text())["columns"][0] == "tau"
