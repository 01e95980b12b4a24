import csv
import io
import json

import numpy as np
import pytest

from dqc.cli import main
from dqc.config import resolve_config
from dqc.runner import run
from dqc.trainer import evaluate_solution


def quick(preset="coupled", n_iter=4, **extra):
    cfg = {"preset": preset, "optimizer": {"n_iter": n_iter}}
    cfg.update(extra)
    return cfg


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def read_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], np.array(rows[1:], dtype=float)


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("solve")
    cfg = write(tmp, quick())
    out = tmp / "out"
    assert main(["solve", str(cfg), "--out-dir", str(out), "--quiet"]) == 0
    return tmp, out


class TestSolve:
    def test_artifacts(self, solved):
        _, out = solved
        assert sorted(p.name for p in out.iterdir()) == ["metrics.csv", "params.json", "solution.csv"]

    def test_coupled_columns(self, solved):
        head, rows = read_csv((solved[1] / "solution.csv").read_text())
        assert head == ["x", "u1", "u2", "ref_u1", "ref_u2"]
        assert rows.shape == (200, 5) and np.all(np.isfinite(rows))

    def test_metrics_header(self, solved):
        text = (solved[1] / "metrics.csv").read_text()
        assert text.splitlines()[0] == "stage,n_j,L_F,L_D,L_Q"
        assert len(text.splitlines()) == 5 and "\r" not in text

    def test_timing_column(self, tmp_path):
        cfg = write(tmp_path, quick(n_iter=2))
        assert main(["solve", str(cfg), "--out-dir", str(tmp_path / "o"), "--quiet", "--timing"]) == 0
        assert (tmp_path / "o" / "metrics.csv").read_text().splitlines()[0].endswith(",elapsed_ms")

    def test_params_document(self, solved):
        doc = json.loads((solved[1] / "params.json").read_text())
        assert doc["format"] == "dqc-params" and doc["functions"] == ["u1", "u2"]
        assert [m["register"] for m in doc["models"]] == [0, 1]
        assert all(m["f_b"] is not None for m in doc["models"])
        assert doc["config"]["optimizer"]["n_iter"] == 4

    def test_rerun_from_params_bitwise(self, solved, tmp_path):
        _, out = solved
        assert main(["solve", str(out / "params.json"), "--out-dir", str(tmp_path), "--quiet"]) == 0
        assert (tmp_path / "metrics.csv").read_bytes() == (out / "metrics.csv").read_bytes()
        assert (tmp_path / "solution.csv").read_bytes() == (out / "solution.csv").read_bytes()

    def test_env_out_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DQC_OUT_DIR", str(tmp_path / "env"))
        cfg = write(tmp_path, quick(n_iter=1))
        assert main(["solve", str(cfg), "--quiet"]) == 0
        assert (tmp_path / "env" / "params.json").exists()

    def test_inline_problem(self, tmp_path):
        cfg = {
            "problem": {"functions": ["y"], "residuals": ["dy/dx + y"],
                        "boundary": [{"function": "y", "x0": 0.0, "u0": 1.0}], "domain": [0.0, 0.5]},
            "grid": {"kind": "chebyshev", "points": 6, "intervals": [0.0, 0.5]},
            "model": {"qubits": 2, "feature_map": {"kind": "chebyshev_tower"},
                      "ansatz": {"kind": "hea", "depth": 1}, "cost": {"kind": "total_z"}},
            "optimizer": {"n_iter": 2},
        }
        assert main(["solve", str(write(tmp_path, cfg)), "--out-dir", str(tmp_path / "o"), "--quiet"]) == 0
        head, rows = read_csv((tmp_path / "o" / "solution.csv").read_text())
        assert head == ["x", "y"] and rows[0, 0] == 0.0 and rows[-1, 0] == 0.5


class TestErrors:
    def test_unknown_key(self, tmp_path, capsys):
        cfg = write(tmp_path, {"preset": "coupled", "optimiser": {}})
        out = tmp_path / "never"
        assert main(["solve", str(cfg), "--out-dir", str(out)]) == 2
        assert not out.exists()
        assert "configuration error" in capsys.readouterr().err

    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        assert main(["solve", str(p), "--out-dir", str(tmp_path / "o")]) == 2

    def test_missing_file(self, tmp_path):
        assert main(["solve", str(tmp_path / "nope.json")]) == 2

    def test_unknown_preset(self, tmp_path):
        assert main(["reference", "no_such"]) == 2

    def test_bad_residual(self, tmp_path):
        cfg = quick()
        cfg["problem"] = {"residuals": ["du1/ + u2", "du2/dx"]}
        assert main(["solve", str(write(tmp_path, cfg)), "--out-dir", str(tmp_path / "o")]) == 2
        assert not (tmp_path / "o").exists()

    def test_numeric_failure(self, tmp_path):
        cfg = quick("damped_lambda8", 2)
        cfg["problem"] = {"residuals": ["du/dx + ln(u - 50)"], "reference": None}
        assert main(["solve", str(write(tmp_path, cfg)), "--out-dir", str(tmp_path / "o"), "--quiet"]) == 3

    def test_non_convergence(self, tmp_path):
        cfg = quick("damped_lambda8", 2)
        cfg["optimizer"].update({"loss_below": 1e-30, "strict": True})
        assert main(["solve", str(write(tmp_path, cfg)), "--out-dir", str(tmp_path / "o"), "--quiet"]) == 4


class TestEval:
    def test_matches_training_grid(self, solved, capsys):
        tmp, out = solved
        assert main(["eval", str(out / "params.json"), "--from", "0", "--to", "0.9", "--points", "20"]) == 0
        head, rows = read_csv(capsys.readouterr().out)
        res = run(resolve_config(quick()))
        ref = evaluate_solution(res.final.models, res.final.state, res.final.problem.points())
        np.testing.assert_allclose(rows[:, 0], res.final.problem.points(), atol=1e-15)
        assert np.abs(rows[:, 1:3].T - ref).max() < 1e-12

    def test_matches_solution_csv(self, solved, tmp_path):
        _, out = solved
        dest = tmp_path / "e.csv"
        assert main(["eval", str(out / "params.json"), "--points", "200", "--reference", "--out", str(dest)]) == 0
        _, a = read_csv(dest.read_text())
        _, b = read_csv((out / "solution.csv").read_text())
        assert np.abs(a - b).max() < 1e-12

    def test_between_and_outside(self, solved, capsys):
        _, out = solved
        assert main(["eval", str(out / "params.json"), "--from", "0.013", "--to", "1.2", "--points", "3"]) == 0
        cap = capsys.readouterr()
        _, rows = read_csv(cap.out)
        assert rows.shape == (2, 3) and np.all(np.isfinite(rows))
        assert "1 point(s)" in cap.err


class TestReference:
    @pytest.mark.parametrize("preset, prov, cols", [
        ("damped_lambda8", "analytic", ["x", "u"]),
        ("nontrivial", "rk4", ["x", "u"]),
        ("coupled", "analytic", ["x", "u1", "u2"]),
        ("nozzle", "time-marched", ["x", "rho", "T", "V"]),
    ])
    def test_presets(self, preset, prov, cols, capsys):
        assert main(["reference", preset, "--points", "11"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == f"# provenance: {prov}"
        assert lines[1].split(",") == cols and len(lines) == 13

    def test_damped_values(self, capsys):
        from dqc.oracle import analytic_damped
        main(["reference", "damped_lambda8", "--points", "5"])
        _, rows = read_csv("\n".join(capsys.readouterr().out.splitlines()[1:]))
        np.testing.assert_allclose(rows[:, 1], analytic_damped(rows[:, 0]), atol=1e-15)


class TestPresets:
    def test_listing(self, capsys):
        assert main(["presets"]) == 0
        names = [ln.split(":")[0] for ln in capsys.readouterr().out.splitlines()]
        for n in ["damped_lambda8", "damped_lambda20", "nontrivial", "nontrivial_evolution_enhanced",
                  "coupled_floating", "coupled_pinned", "coupled_optimized", "nozzle"]:
            assert n in names

    def test_verbose_nozzle(self, capsys):
        main(["presets", "-v"])
        text = capsys.readouterr().out
        assert "(0, 0.4) and (0.6, 0.9) with 20 points each" in text
        full = [ln for ln in text.splitlines() if ln.strip().startswith("full:")][0]
        assert "n_iter=600" in full and "lr=0.005" in full and "n_j=150" in full

    def test_damped20_hyperparameters(self):
        from dqc.config import stage_configs
        st = stage_configs(resolve_config({"preset": "damped_lambda20"}))[0]
        assert st["model"]["qubits"] == 6 and st["model"]["ansatz"]["depth"] == 5
