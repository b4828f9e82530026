import csv
import io
import json
import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hermite_boltzmann.cli import ConfigError, RunConfig, cli_report, main

KW_SMALL = {"scenario": {"kind": "krook_wu", "case": 2}, "solver": {"M": 8, "M0": 4, "t_end": 0.05}}
COUETTE_SMALL = {
    "scenario": {"kind": "couette", "case": 1},
    "solver": {"M": 5, "M0": 2, "t_end": 0.02, "output_every": 0.01},
}

configs = st.fixed_dictionaries(
    {"scenario": st.fixed_dictionaries({"kind": st.sampled_from(["couette", "fourier"]), "case": st.integers(1, 3)})},
    optional={
        "solver": st.fixed_dictionaries(
            {},
            optional={
                "M": st.integers(3, 20),
                "cfl": st.floats(0.05, 0.95),
                "reconstruction": st.sampled_from(["linear", "weno3", "constant"]),
                "t_end": st.floats(0.01, 10),
            },
        ),
        "dt": st.floats(1e-4, 1.0),
        "memory_budget_gb": st.floats(0.5, 64),
    },
)


@settings(max_examples=50, deadline=None)
@given(configs)
def test_config_round_trip(d):
    cfg = RunConfig.from_dict(d)
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def _write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def test_precompute_cold_then_warm(tmp_path, capsys):
    cfg = _write(tmp_path, "kw.json", KW_SMALL)
    cache = str(tmp_path / "cache")
    assert main(["precompute", "--config", cfg, "--cache-dir", cache]) == 0
    cold = capsys.readouterr().out
    assert cold.count("assembled") == 3 and "3 distinct mass ratio" in cold
    assert main(["precompute", "--config", cfg, "--cache-dir", cache]) == 0
    warm = capsys.readouterr().out
    assert warm.count("cached") == 3 and "assembled" not in warm


def test_run_krook_wu_outputs(tmp_path):
    cfg = _write(tmp_path, "kw.json", KW_SMALL)
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--cache-dir", str(tmp_path / "c"), "--output-dir", str(out)]) == 0
    rows = list(csv.reader(open(out / "f400.csv")))
    assert rows[0][0] == "t (dimensionless)"
    assert len(rows) == 1 + 6
    # 17 significant digits
    assert len(rows[1][1].lstrip("-").replace(".", "").replace("0", "", 1)) >= 15
    man = json.loads((out / "manifest.json").read_text())
    assert {"config", "tensors", "timings", "diagnostics"} <= set(man)
    assert man["diagnostics"]["f400_max_rel_error"] < 1e-8


def test_run_couette_snapshots_and_report(tmp_path):
    cfg = _write(tmp_path, "c.json", COUETTE_SMALL)
    out = tmp_path / "out"
    code = main(["run", "--config", cfg, "--cache-dir", str(tmp_path / "c"), "--output-dir", str(out), "--threads", "2"])
    assert code == 0
    snap = list(csv.reader(open(out / "moments_final.csv")))
    header = snap[0]
    assert header[0] == "x (m)" and "u2 (m/s)" in header and "T (K)" in header
    assert "sigma12 (Pa)" in header and "q1 (kg/s^3)" in header
    assert len(snap) == 1 + 2 * 25
    assert (out / "final_coefficients.csv").exists()
    man = json.loads((out / "manifest.json").read_text())
    assert man["diagnostics"]["max_density_drift"] == 0.0
    assert man["diagnostics"]["max_wall_mass_flux"] < 1e-12
    buf = io.StringIO()
    rows = cli_report([out / "manifest.json", out / "manifest.json"], out=buf)
    assert "timings.per_collision_term_s" in rows
    assert "tensors.bytes" in buf.getvalue()


@pytest.mark.parametrize(
    "payload",
    [
        "{not json",
        json.dumps({"scenario": {"kind": "couette", "case": 9}}),
        json.dumps({"scenario": {"kind": "couette"}, "solver": {"M": 2, "M0": 5}}),
        json.dumps({"scenario": {"kind": "couette"}, "solver": {"order": 3}}),
        json.dumps({"bogus": 1}),
    ],
)
def test_config_errors_exit_2(tmp_path, payload):
    p = tmp_path / "bad.json"
    p.write_text(payload)
    assert main(["precompute", "--config", str(p), "--cache-dir", str(tmp_path)]) == 2


def test_resource_error_exit_4(tmp_path):
    cfg = _write(tmp_path, "big.json", {"scenario": {"kind": "couette", "case": 1}, "memory_budget_gb": 1e-6})
    assert main(["precompute", "--config", cfg, "--cache-dir", str(tmp_path / "c")]) == 4


def test_numeric_error_exit_3(tmp_path):
    # a negative initial density makes the first collision step fail
    from hermite_boltzmann.scenarios import build_case, with_solver

    sc = with_solver(build_case("couette", 1), M=4, M0=2, t_end=0.01)
    d = sc.to_dict()
    d["densities"] = [-1.0, 0.5]
    cfg = _write(tmp_path, "neg.json", {"custom": d})
    code = main(["run", "--config", cfg, "--cache-dir", str(tmp_path / "c"), "--output-dir", str(tmp_path / "o")])
    assert code == 3


def test_report_rejects_non_manifest(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{}")
    with pytest.raises(ConfigError):
        cli_report([p])
    assert main(["report", str(p)]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "hermite_boltzmann", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "precompute" in res.stdout
