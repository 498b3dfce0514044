import csv
import io
import json
import os
import time

import numpy as np
import pytest

from mgfr import cli
from mgfr.evaluation import Record, SweepResult


@pytest.fixture(autouse=True)
def _isolated_cwd(tmp_path, monkeypatch):
    # the default output.dir is relative to the working directory
    monkeypatch.chdir(tmp_path)


def run(argv, env=None):
    return cli.main([str(a) for a in argv], environ=env or {})


def write_toml(path, text):
    path.write_text(text)
    return path


def tiny_config(tmp_path, extra=""):
    return write_toml(tmp_path / "cfg.toml", f"""
[simulation]
n = 50
seed = 3
[sweep]
n_grid = [30]
replicates = 1
estimators = ["GFR"]
[output]
dir = "{tmp_path / 'out'}"
{extra}
""")


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def power_law_csv(path, exponent, estimators=("MGFR",), replicates=10):
    recs = [Record(e, n, r, 2.0 * n ** exponent, False)
            for e in estimators for n in (50, 100, 200, 400, 800) for r in range(replicates)]
    path.write_text(SweepResult(tuple(recs), estimators, (50, 100, 200, 400, 800), replicates).to_csv())
    return path


# --- simulate -----------------------------------------------------------------

def test_simulate_minimal(tmp_path):
    assert run(["simulate", "-c", tiny_config(tmp_path)]) == 0
    rows = read_csv(tmp_path / "out" / "dataset.csv")
    assert len(rows) == 50
    assert sum(k.startswith("x") for k in rows[0]) == 5
    man = json.loads((tmp_path / "out" / "manifest-simulate.json").read_text())
    assert man["seed"] == 3 and man["schema_version"] == 1
    assert man["config"]["simulation"]["n"] == 50
    assert "dataset.csv" in man["outputs"]


def test_simulate_same_hash(tmp_path):
    cfg = tiny_config(tmp_path)
    run(["simulate", "-c", cfg])
    first = json.loads((tmp_path / "out" / "manifest-simulate.json").read_text())
    data = (tmp_path / "out" / "dataset.csv").read_bytes()
    run(["simulate", "-c", cfg])
    second = json.loads((tmp_path / "out" / "manifest-simulate.json").read_text())
    assert first["content_hash"] == second["content_hash"]
    assert (tmp_path / "out" / "dataset.csv").read_bytes() == data


def test_invalid_v1_exit_2(tmp_path, capsys):
    cfg = tiny_config(tmp_path)
    assert run(["simulate", "-c", cfg, "--simulation.v1", "-1"]) == 2
    assert "v1" in capsys.readouterr().err
    bad = write_toml(tmp_path / "bad.toml", "[simulation]\nv1 = -1\n")
    assert run(["simulate", "-c", bad]) == 2
    assert "v1" in capsys.readouterr().err


@pytest.mark.parametrize("text, key", [
    ("[simulation]\nwat = 1\n", "wat"),
    ("[nonsense]\nn = 1\n", "nonsense"),
    ("[sweep]\nn_grid = [100, 50]\n", "n_grid"),
    ("[sweep]\nreplicates = \"many\"\n", "replicates"),
    ("[simulation\n", "cfg.toml"),
])
def test_config_errors_name_key(tmp_path, capsys, text, key):
    path = write_toml(tmp_path / "cfg.toml", text)
    assert run(["simulate", "-c", path]) == 2
    assert key in capsys.readouterr().err


def test_unwritable_output_dir(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run(["simulate", "--simulation.n", "20", "--output.dir", str(blocker / "sub")]) == 2
    assert "output.dir" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert run(["simulate", "-c", tmp_path / "nope.toml"]) == 2


def test_bad_subcommand():
    assert run(["frobnicate"]) == 2


def test_precedence_flag_env_file(tmp_path):
    cfg = tiny_config(tmp_path)
    man = tmp_path / "out" / "manifest-simulate.json"
    run(["simulate", "-c", cfg])
    assert json.loads(man.read_text())["seed"] == 3
    run(["simulate", "-c", cfg], env={"MGFR_SEED": "11"})
    assert json.loads(man.read_text())["seed"] == 11
    run(["simulate", "-c", cfg, "--simulation.seed", "12"], env={"MGFR_SEED": "11"})
    assert json.loads(man.read_text())["seed"] == 12
    run(["simulate", "--simulation.n", "20", "--output.dir", tmp_path / "d"])
    assert json.loads((tmp_path / "d" / "manifest-simulate.json").read_text())["seed"] == 0


def test_env_seed_must_be_integer(tmp_path, capsys):
    assert run(["simulate", "-c", tiny_config(tmp_path)], env={"MGFR_SEED": "abc"}) == 2
    assert "MGFR_SEED" in capsys.readouterr().err


def test_example_config_loads(tmp_path):
    example = os.path.join(os.path.dirname(__file__), "..", "configs", "example.toml")
    argv = ["simulate", "-c", example, "--simulation.n", "20", "--output.dir", tmp_path]
    assert run(argv) == 0


# --- fit ----------------------------------------------------------------------

def test_fit_from_dataset(tmp_path):
    cfg = tiny_config(tmp_path)
    run(["simulate", "-c", cfg])
    ds = tmp_path / "out" / "dataset.csv"
    assert run(["fit", "-c", cfg, "--fit.dataset", f'"{ds}"', "--fit.estimator", '"GFR"']) == 0
    rows = read_csv(tmp_path / "out" / "fits.csv")
    assert len(rows) == 50
    q = np.array([[float(r[f"q{j}"]) for j in range(100)] for r in rows])
    assert np.all(np.diff(q, axis=1) >= 0)
    assert {r["estimator"] for r in rows} == {"GFR"}


def test_fit_bures(tmp_path):
    cfg = tiny_config(tmp_path, '[fit]\nestimator = "DMGFR"')
    assert run(["fit", "-c", cfg, "--simulation.metric", '"bures"']) == 0
    rows = read_csv(tmp_path / "out" / "fits.csv")
    assert all(float(r["sigma00"]) >= 0 for r in rows)


# --- sweep / rate-check / report ---------------------------------------------

def test_sweep_smoke_under_5s(tmp_path):
    t0 = time.perf_counter()
    assert run(["sweep", "-c", tiny_config(tmp_path)]) == 0
    assert time.perf_counter() - t0 < 5.0
    rows = read_csv(tmp_path / "out" / "results.csv")
    assert len(rows) == 1 and float(rows[0]["loss"]) >= 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["aggregates"][0]["completed"] == 1


def test_sweep_idempotent(tmp_path):
    cfg = tiny_config(tmp_path)
    out = tmp_path / "out"
    run(["sweep", "-c", cfg, "--sweep.replicates", "2"])
    before = {p: (out / p).read_bytes() for p in ("results.csv", "summary.json", "manifest-sweep.json")}
    run(["sweep", "-c", cfg, "--sweep.replicates", "2"])
    assert all((out / p).read_bytes() == b for p, b in before.items())


def test_sweep_partial_flush(tmp_path, monkeypatch, capsys):
    import mgfr.evaluation as ev
    real = ev._run_cell

    def flaky(cfg, n, replicate):
        if replicate == 2:
            raise FloatingPointError("synthetic numeric failure")
        return real(cfg, n, replicate)

    monkeypatch.setattr(ev, "_run_cell", flaky)
    assert run(["sweep", "-c", tiny_config(tmp_path), "--sweep.replicates", "4"]) == 1
    assert "FloatingPointError" in capsys.readouterr().err
    partial = read_csv(tmp_path / "out" / "results.partial.csv")
    assert [int(r["replicate"]) for r in partial] == [0, 1]
    streamed = read_csv(tmp_path / "out" / "results.csv")
    assert [int(r["replicate"]) for r in streamed] == [0, 1]


def test_rate_check_power_law(tmp_path):
    cfg = tiny_config(tmp_path)
    fixture = power_law_csv(tmp_path / "c_over_n.csv", -1.0)
    assert run(["rate-check", "-c", cfg, "--results", fixture]) == 0
    rate = json.loads((tmp_path / "out" / "rate.json").read_text())
    assert rate["slope"] == pytest.approx(-1.0, abs=1e-10)
    assert rate["within_band"] is True
    slow = power_law_csv(tmp_path / "c_over_sqrt_n.csv", -0.5)
    assert run(["rate-check", "-c", cfg, "--results", slow]) == 1
    assert run(["rate-check", "-c", cfg, "--results", slow, "--rate.band", "[-0.6, -0.4]"]) == 0


def test_rate_check_degenerate(tmp_path):
    fixture = tmp_path / "zero.csv"
    recs = [Record("MGFR", n, r, 0.0, False) for n in (50, 100, 200) for r in range(10)]
    fixture.write_text(SweepResult(tuple(recs), ("MGFR",), (50, 100, 200), 10).to_csv())
    assert run(["rate-check", "-c", tiny_config(tmp_path), "--results", fixture]) == 1


def test_report_first_row_is_lowest_mean(tmp_path):
    cfg = tiny_config(tmp_path)
    argv = ["report", "-c", cfg, "--sweep.n_grid", "[60, 120]", "--sweep.replicates", "3",
            "--sweep.estimators", '["GFR", "MGFR", "DMGFR"]', "--simulation.noise_sigma", "0.5",
            "--simulation.collinear_pairs", "[[0, 1]]"]
    assert run(argv) == 0
    out = tmp_path / "out"
    # independent recomputation from the raw CSV
    sums = {}
    for row in read_csv(out / "results.csv"):
        if row["skipped"] == "0":
            sums.setdefault(row["estimator"], []).append(float(row["loss"]))
    best = min(sums, key=lambda e: np.mean(sums[e]))
    lines = (out / "report.txt").read_text().splitlines()
    assert lines[1].split()[:2] == ["1", best]
    report = json.loads((out / "report.json").read_text())
    assert report["ordering"][0] == best
    assert len(report["rows"]) == 3 * 2
    man = json.loads((out / "manifest-report.json").read_text())
    assert set(man["outputs"]) == {"results.csv", "report.txt", "report.json"}


def test_report_from_results_file(tmp_path, capsys):
    fixture = power_law_csv(tmp_path / "r.csv", -1.0, estimators=("GFR", "MGFR"))
    assert run(["report", "-c", tiny_config(tmp_path), "--results", fixture]) == 0
    assert "rank" in capsys.readouterr().out


# --- plot ---------------------------------------------------------------------

def test_plot_three_series_and_deterministic(tmp_path):
    fixture = power_law_csv(tmp_path / "r.csv", -1.0, estimators=("GFR", "MGFR", "DMGFR"))
    svg = tmp_path / "a.svg"
    assert run(["plot", fixture, "--out", svg]) == 0
    text = svg.read_text()
    assert text.count('class="series"') == 3
    for e in ("GFR", "MGFR", "DMGFR"):
        assert f'data-estimator="{e}"' in text
        assert f">{e}</text>" in text
    first = svg.read_bytes()
    run(["plot", fixture, "--out", svg])
    assert svg.read_bytes() == first
    run(["plot", fixture, "--out", tmp_path / "log.svg", "--log-axes"])
    assert (tmp_path / "log.svg").read_bytes() != first


def test_plot_empty_csv(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run(["plot", empty, "--out", tmp_path / "x.svg"]) != 0
    assert not (tmp_path / "x.svg").exists()


def test_plot_missing_column_named(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("estimator,n,loss,skipped\nGFR,10,0.5,0\n")
    assert run(["plot", bad, "--out", tmp_path / "x.svg"]) == 1
    assert "replicate" in capsys.readouterr().err


def test_plot_missing_file(tmp_path):
    assert run(["plot", tmp_path / "nope.csv"]) == 1


# --- manifest -----------------------------------------------------------------

def test_manifest_hash_detects_tampering(tmp_path):
    run(["sweep", "-c", tiny_config(tmp_path), "--sweep.replicates", "2"])
    out = tmp_path / "out"
    man = json.loads((out / "manifest-sweep.json").read_text())

    def recompute():
        files = {}
        for name in sorted(man["outputs"]):
            data = (out / name).read_bytes()
            files[name] = {"sha256": cli._sha256(data), "bytes": len(data)}
        return cli._sha256(json.dumps(files, sort_keys=True).encode())

    assert recompute() == man["content_hash"]
    text = (out / "results.csv").read_text()
    rows = list(csv.reader(io.StringIO(text)))
    rows[1][3] = repr(float(rows[1][3]) * (1 + 1e-12))
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    (out / "results.csv").write_text(buf.getvalue())
    assert recompute() != man["content_hash"]


def test_module_entry_point(tmp_path):
    import subprocess
    import sys
    proc = subprocess.run([sys.executable, "-m", "mgfr", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "mgfr" in proc.stdout
