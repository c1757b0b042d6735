"""End-to-end checks of the command-line front end."""

import json
from pathlib import Path

import numpy as np
import pytest

from dlczsim import cli, model, physics
from dlczsim.montecarlo import TrialBatchConfig, sample_trials


def run_cli(*args):
    return cli.main([str(a) for a in args])


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def read_csv(path):
    return np.genfromtxt(path, delimiter=",", names=True)


def sweep_config(tmp_path, **grid):
    grid = grid or {"min": 3e-4, "max": 0.12, "n_points": 10, "spacing": "log"}
    return write_config(tmp_path, {"grid": grid})


def synthetic_data_csv(tmp_path, rel_err=0.03, n=12):
    """Noiseless (g12, qc) curves with nominal error bars, CSV formatted."""
    p_values = np.geomspace(3e-4, 0.12, n)
    points = model.sweep(model.ModelParams.defaults(), p_values)
    lines = ["p1,g12,g12_err,qc,qc_err"]
    for pt in points:
        lines.append(",".join(format(v, ".17g") for v in
                              (pt.p1, pt.g12, rel_err * pt.g12,
                               pt.qc, rel_err * pt.qc)))
    path = tmp_path / "data.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestSweep:
    def test_exact_columns(self, tmp_path):
        assert run_cli("sweep", "--config", sweep_config(tmp_path),
                       "--out", tmp_path, "--no-plot") == 0
        header = (tmp_path / "sweep.csv").read_text().splitlines()[0]
        assert header == "p,p1,p2,p12,g12,qc,pc"

    def test_values_round_trip_exactly(self, tmp_path):
        run_cli("sweep", "--config", sweep_config(tmp_path),
                "--out", tmp_path, "--no-plot")
        rows = read_csv(tmp_path / "sweep.csv")
        points = model.sweep(model.ModelParams.defaults(),
                             np.geomspace(3e-4, 0.12, 10))
        for name in ("p", "p1", "p2", "p12", "g12", "qc", "pc"):
            assert np.array_equal(rows[name],
                                  [getattr(pt, name) for pt in points])

    def test_single_point_grid_single_row(self, tmp_path):
        cfg = sweep_config(tmp_path, values=[0.03])
        run_cli("sweep", "--config", cfg, "--out", tmp_path, "--no-plot")
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert len(lines) == 2

    def test_p1_axis_grid_inverts(self, tmp_path):
        cfg = write_config(tmp_path, {"grid": {"axis": "p1",
                                               "values": [5.163e-3]}})
        run_cli("sweep", "--config", cfg, "--out", tmp_path, "--no-plot")
        rows = read_csv(tmp_path / "sweep.csv")
        assert float(rows["p"]) == pytest.approx(0.03000197385129613,
                                                 rel=1e-12)
        assert float(rows["p1"]) == pytest.approx(5.163e-3, rel=1e-15)

    def test_grid_with_unit_p_rejected(self, tmp_path, capsys):
        cfg = sweep_config(tmp_path, values=[0.01, 1.0])
        assert run_cli("sweep", "--config", cfg, "--out", tmp_path) == 2
        assert "values[1]" in capsys.readouterr().err

    def test_unknown_top_level_key_rejected(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"modle": {}})
        assert run_cli("sweep", "--config", cfg, "--out", tmp_path) == 2
        assert "'modle'" in capsys.readouterr().err

    def test_unknown_nested_key_names_path(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"grid": {"values": [0.03],
                                               "spacingg": "log"}})
        assert run_cli("sweep", "--config", cfg, "--out", tmp_path) == 2
        assert "grid.spacingg" in capsys.readouterr().err

    def test_json_syntax_error_reports_position(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text('{"grid": ', encoding="utf-8")
        assert run_cli("sweep", "--config", path, "--out", tmp_path) == 2
        assert ":1:" in capsys.readouterr().err

    def test_missing_grid_section(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"model": {"p": 0.03}})
        assert run_cli("sweep", "--config", cfg, "--out", tmp_path) == 2
        assert "grid" in capsys.readouterr().err

    def test_json_format_matches_csv(self, tmp_path):
        cfg = sweep_config(tmp_path)
        run_cli("sweep", "--config", cfg, "--out", tmp_path / "a", "--no-plot")
        run_cli("sweep", "--config", cfg, "--out", tmp_path / "b",
                "--format", "json", "--no-plot")
        rows = read_csv(tmp_path / "a" / "sweep.csv")
        jrows = json.loads((tmp_path / "b" / "sweep.json").read_text())
        assert np.array_equal(rows["g12"], [r["g12"] for r in jrows])

    def test_figure_written_by_default(self, tmp_path):
        run_cli("sweep", "--config", sweep_config(tmp_path), "--out", tmp_path)
        assert (tmp_path / "sweep.png").exists()

    def test_no_plot_suppresses_figure(self, tmp_path):
        run_cli("sweep", "--config", sweep_config(tmp_path),
                "--out", tmp_path, "--no-plot")
        assert not (tmp_path / "sweep.png").exists()

    def test_manifest_digests_outputs(self, tmp_path):
        import hashlib
        cfg = sweep_config(tmp_path)
        run_cli("sweep", "--config", cfg, "--out", tmp_path, "--no-plot")
        manifest = json.loads((tmp_path / "sweep_manifest.json").read_text())
        assert manifest["command"] == "sweep"
        assert manifest["version"]
        assert "timestamp_utc" in manifest
        assert manifest["inputs"]["config.json"] == hashlib.sha256(
            cfg.read_bytes()).hexdigest()
        assert manifest["outputs"]["sweep.csv"] == hashlib.sha256(
            (tmp_path / "sweep.csv").read_bytes()).hexdigest()
        assert manifest["parameters"]["model"]["alpha2"] == 0.035


class TestFit:
    def test_round_trip_recovers_parameters(self, tmp_path):
        data = synthetic_data_csv(tmp_path)
        assert run_cli("fit", data, "--out", tmp_path, "--no-plot") == 0
        payload = json.loads((tmp_path / "fit_result.json").read_text())
        assert payload["values"]["kappa1"] == pytest.approx(0.034, rel=1e-6)
        assert payload["values"]["kappa2"] == pytest.approx(1.91, rel=1e-6)
        assert payload["values"]["alpha2"] == pytest.approx(0.035, rel=1e-6)
        assert payload["converged"] is True
        assert payload["dof"] == 2 * 12 - 3
        assert payload["chi2"] < 1e-12
        assert payload["fixed"] == {"alpha1": 0.16, "b1": 5.1e-5,
                                    "b2": 1.6e-4, "eta2": 0.14}
        assert len(payload["covariance"]) == 3

    def test_residual_csv_columns(self, tmp_path):
        data = synthetic_data_csv(tmp_path)
        run_cli("fit", data, "--out", tmp_path, "--no-plot")
        lines = (tmp_path / "fit_residuals.csv").read_text().splitlines()
        assert lines[0] == "p1,observable,measured,sigma,model,standardized"
        assert len(lines) == 1 + 2 * 12

    def test_header_mismatch_names_expected(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("p1,g12,qc\n0.005,10,0.2\n", encoding="utf-8")
        assert run_cli("fit", bad, "--out", tmp_path) == 2
        assert "p1,g12,g12_err,qc,qc_err" in capsys.readouterr().err

    def test_too_few_rows(self, tmp_path, capsys):
        data = synthetic_data_csv(tmp_path, n=2)
        assert run_cli("fit", data, "--out", tmp_path) == 2
        assert "3 informative" in capsys.readouterr().err

    def test_non_numeric_cell_reports_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("p1,g12,g12_err,qc,qc_err\n"
                       "0.005,ten,1,0.2,0.02\n", encoding="utf-8")
        assert run_cli("fit", bad, "--out", tmp_path) == 2
        err = capsys.readouterr().err
        assert ":2:" in err and "g12" in err

    def test_g12_only_degraded_mode(self, tmp_path):
        p_values = np.geomspace(3e-4, 0.12, 10)
        points = model.sweep(model.ModelParams.defaults(), p_values)
        lines = ["p1,g12,g12_err,qc,qc_err"]
        for pt in points:
            lines.append(f"{pt.p1:.17g},{pt.g12:.17g},{0.03 * pt.g12:.17g},,")
        data = tmp_path / "g12only.csv"
        data.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.warns(UserWarning, match="absent"):
            code = run_cli("fit", data, "--out", tmp_path, "--no-plot")
        assert code == 0
        payload = json.loads((tmp_path / "fit_result.json").read_text())
        assert payload["observables"] == ["g12"]
        assert payload["values"]["kappa2"] == pytest.approx(1.91, rel=1e-4)

    def test_non_convergence_exits_3(self, tmp_path):
        data = synthetic_data_csv(tmp_path)
        cfg = write_config(tmp_path, {"fit": {"max_nfev": 1, "n_starts": 1}})
        with pytest.warns(UserWarning, match="converge"):
            code = run_cli("fit", data, "--config", cfg,
                           "--out", tmp_path, "--no-plot")
        assert code == 3
        payload = json.loads((tmp_path / "fit_result.json").read_text())
        assert payload["converged"] is False

    def test_fit_figure_written(self, tmp_path):
        data = synthetic_data_csv(tmp_path)
        run_cli("fit", data, "--out", tmp_path)
        assert (tmp_path / "fit_curves.png").exists()


class TestSimulate:
    CFG = {"model": {"p": 0.03},
           "montecarlo": {"n_trials": 200_000, "seed": 42}}

    def test_replay_byte_identical_excluding_timestamp(self, tmp_path):
        cfg = write_config(tmp_path, self.CFG)
        run_cli("simulate", "--config", cfg, "--out", tmp_path / "a")
        run_cli("simulate", "--config", cfg, "--out", tmp_path / "b")
        first = (tmp_path / "a" / "simulate_result.json").read_bytes()
        second = (tmp_path / "b" / "simulate_result.json").read_bytes()
        assert first == second
        m1 = json.loads((tmp_path / "a" / "simulate_manifest.json").read_text())
        m2 = json.loads((tmp_path / "b" / "simulate_manifest.json").read_text())
        differing = {k for k in m1 if m1[k] != m2[k]}
        assert differing <= {"timestamp_utc"}

    def test_counts_match_library_call(self, tmp_path):
        cfg = write_config(tmp_path, self.CFG)
        run_cli("simulate", "--config", cfg, "--out", tmp_path)
        payload = json.loads((tmp_path / "simulate_result.json").read_text())
        counts = sample_trials(model.ModelParams.defaults(),
                               TrialBatchConfig(n_trials=200_000, seed=42))
        assert payload["counts"]["k1"] == counts.k1
        assert payload["counts"]["k12"] == counts.k12
        assert payload["counts"]["n_trials"] == 200_000

    def test_seed_and_trials_flags_override(self, tmp_path):
        cfg = write_config(tmp_path, self.CFG)
        run_cli("simulate", "--config", cfg, "--out", tmp_path,
                "--seed", 7, "--trials", 50_000)
        payload = json.loads((tmp_path / "simulate_result.json").read_text())
        assert payload["seed"] == 7
        assert payload["n_trials"] == 50_000

    def test_zero_trials_rejected(self, tmp_path, capsys):
        cfg = write_config(tmp_path, self.CFG)
        assert run_cli("simulate", "--config", cfg, "--out", tmp_path,
                       "--trials", 0) == 2
        assert "n_trials" in capsys.readouterr().err

    def test_missing_seed_rejected(self, tmp_path, capsys):
        cfg = write_config(tmp_path, {"montecarlo": {"n_trials": 1000}})
        assert run_cli("simulate", "--config", cfg, "--out", tmp_path) == 2
        assert "seed" in capsys.readouterr().err

    def test_csv_row_parses(self, tmp_path):
        cfg = write_config(tmp_path, self.CFG)
        run_cli("simulate", "--config", cfg, "--out", tmp_path,
                "--format", "csv")
        rows = read_csv(tmp_path / "simulate_result.csv")
        payload = json.loads((tmp_path / "simulate_result.json").read_text())
        assert float(rows["g12"]) == payload["estimates"]["g12"]["value"]
        assert int(rows["k1"]) == payload["counts"]["k1"]

    def test_tap_stream_written(self, tmp_path):
        cfg = write_config(tmp_path, {
            "model": {"p": 0.03},
            "montecarlo": {"n_trials": 5000, "seed": 1, "tap": "tap.csv"}})
        run_cli("simulate", "--config", cfg, "--out", tmp_path)
        lines = (tmp_path / "tap.csv").read_text().splitlines()
        assert lines[0] == "n1,n2"
        assert len(lines) == 1 + 5000


class TestAux:
    def test_decay_matches_library(self, tmp_path):
        assert run_cli("aux", "decay", "--out", tmp_path, "--no-plot") == 0
        rows = read_csv(tmp_path / "decay.csv")
        t = np.linspace(0.0, 10e-6, 101)
        expected = physics.retrieval_vs_time(physics.DecayModel(0.25, 3e-6), t)
        assert np.array_equal(rows["qc"], expected)
        assert np.array_equal(rows["t_us"], t * 1e6)

    def test_decay_from_broadening_width(self, tmp_path):
        cfg = write_config(tmp_path, {"decay": {"fwhm_hz": 150e3}})
        run_cli("aux", "decay", "--config", cfg, "--out", tmp_path,
                "--no-plot")
        manifest = json.loads(
            (tmp_path / "aux_decay_manifest.json").read_text())
        assert manifest["parameters"]["tau_s"] == pytest.approx(
            2.498541668390368e-6, rel=1e-12)

    def test_spectrum_resonant_dip(self, tmp_path):
        cfg = write_config(tmp_path, {"spectrum": {"od": 1.4,
                                                   "n_points": 201}})
        run_cli("aux", "spectrum", "--config", cfg, "--out", tmp_path,
                "--no-plot")
        rows = read_csv(tmp_path / "spectrum.csv")
        mid = len(rows) // 2
        assert rows["delta_mhz"][mid] == 0.0
        assert rows["transmission"][mid] == pytest.approx(np.exp(-1.4),
                                                          rel=1e-12)
        assert np.array_equal(rows["transmission"], rows["transmission"][::-1])

    def test_filter_summary_row(self, tmp_path, capsys):
        assert run_cli("aux", "filter", "--out", tmp_path, "--no-plot") == 0
        assert "160 dB, 0.40" in capsys.readouterr().out
        lines = (tmp_path / "filter.csv").read_text().splitlines()
        total = lines[-1].split(",")
        assert total[0] == "total"
        assert float(total[1]) == 160.0
        assert float(total[2]) == 0.4
        assert float(total[3]) == pytest.approx(4.289067315546388, rel=1e-12)

    def test_timing_reference_rates(self, tmp_path):
        run_cli("aux", "timing", "--out", tmp_path, "--no-plot")
        rows = read_csv(tmp_path / "timing.csv")
        assert float(rows["in_protocol_hz"]) == 5000.0
        assert float(rows["averaged_hz"]) == 50.0
        assert float(rows["duty_fraction"]) == 0.01
        assert np.isnan(float(rows["pairs_hz"]))
        phases = (tmp_path / "timing_phases.csv").read_text().splitlines()
        assert phases[0] == "phase,duration_ms"
        assert len(phases) == 4

    def test_timing_with_pc_emits_pairs(self, tmp_path):
        cfg = write_config(tmp_path, {"timing": {"p1": 5e-3, "pc": 0.035}})
        run_cli("aux", "timing", "--config", cfg, "--out", tmp_path,
                "--no-plot")
        rows = read_csv(tmp_path / "timing.csv")
        assert float(rows["pairs_hz"]) == pytest.approx(50.0 * 0.035,
                                                        rel=1e-12)

    def test_hbt_ideal_column_and_bounded_w(self, tmp_path):
        cfg = write_config(tmp_path, {
            "model": {"kappa1": 0.0, "kappa2": 0.0, "b1": 0.0, "b2": 0.0},
            "hbt": {"p_min": 1e-3, "p_max": 0.2, "n_points": 15}})
        assert run_cli("aux", "hbt", "--config", cfg, "--out", tmp_path,
                       "--no-plot") == 0
        lines = (tmp_path / "hbt.csv").read_text().splitlines()
        assert lines[0] == "g12,w_ideal,w_model"
        rows = read_csv(tmp_path / "hbt.csv")
        assert np.array_equal(rows["w_ideal"], 4.0 / rows["g12"])
        assert np.all(rows["w_model"] <= 1.0)
        assert np.all(rows["w_model"] > 0.0)

    def test_wavepacket_peak(self, tmp_path):
        run_cli("aux", "wavepacket", "--out", tmp_path, "--no-plot")
        rows = read_csv(tmp_path / "wavepacket.csv")
        assert rows["amplitude"].max() == 1.0
        assert abs(rows["t_ns"][np.argmax(rows["amplitude"])]) < 1e-9

    def test_unknown_topic_exits_2(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli("aux", "nosuch", "--out", tmp_path)
        assert exc.value.code == 2

    def test_every_topic_writes_manifest_and_figure(self, tmp_path):
        for topic in ("decay", "spectrum", "filter", "timing", "hbt",
                      "wavepacket"):
            out = tmp_path / topic
            assert run_cli("aux", topic, "--out", out) == 0
            assert (out / f"aux_{topic}_manifest.json").exists()
            assert (out / f"{topic}.png").exists()
