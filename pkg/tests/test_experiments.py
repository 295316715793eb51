import json
import subprocess
import sys

import numpy as np
import pytest

from simstack.cli import main
from simstack.config import ConfigError, ExperimentConfig, load_config, parse_config, validate_config
from simstack.experiments import (
    CASE_SPACINGS_WL,
    COLUMNS,
    emit,
    run_convergence,
    run_custom,
    run_experiment,
    run_layer_sweep,
)

TINY_CUSTOM = """
[experiment]
kind = custom
modes = EE,SE,SS
monte_carlo_runs = 2
seed = 11

[geometry]
n_y = 2
n_z = 2
layer_count = 2

[medium]
provider = rayleigh-sommerfeld

[optimizer]
max_iters = 3
"""


def write_config(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestConfigParsing:
    def test_defaults_apply(self):
        cfg, errors = parse_config("[experiment]\nkind = custom\n")
        assert errors == []
        assert cfg.users == 2
        assert cfg.noise_psd == 1.0
        assert cfg.p_max == 2.0
        assert cfg.provider == "dipole"

    def test_all_violations_reported(self):
        text = """
[experiment]
kind = sideways
modes = EE,XX
monte_carlo_runs = 0

[system]
users = 0
noise_psd = -1
"""
        cfg, errors = parse_config(text)
        assert cfg is not None
        joined = "\n".join(errors)
        assert len(errors) >= 5
        assert "kind" in joined
        assert "modes" in joined
        assert "monte_carlo_runs" in joined
        assert "users" in joined
        assert "noise_psd" in joined

    def test_unknown_key_flagged(self):
        _cfg, errors = parse_config("[experiment]\nknid = custom\n")
        assert any("unknown key" in e for e in errors)

    def test_unparseable_value_flagged(self):
        _cfg, errors = parse_config("[system]\nusers = two\n")
        assert any("cannot parse" in e for e in errors)

    def test_sweep_layers_restricted(self):
        text = "[experiment]\nkind = layer-sweep\nlayers = 2,5\n"
        _cfg, errors = parse_config(text)
        assert any("layers" in e for e in errors)

    def test_load_with_overrides(self, tmp_path):
        path = write_config(tmp_path, TINY_CUSTOM)
        cfg = load_config(path, seed=42, modes=("EE",))
        assert cfg.seed == 42
        assert cfg.modes == ("EE",)

    def test_load_raises_with_all_errors(self, tmp_path):
        path = write_config(tmp_path, "[experiment]\nkind = nope\nmodes = YY\n")
        with pytest.raises(ConfigError) as err:
            load_config(path)
        assert len(err.value.errors) == 2

    def test_validate_config_returns_error_list(self, tmp_path):
        good = write_config(tmp_path, TINY_CUSTOM, "good.cfg")
        bad = write_config(tmp_path, "[experiment]\nkind = nope\n", "bad.cfg")
        assert validate_config(good) == []
        assert validate_config(bad) != []


class TestConfigHash:
    def test_ignores_output_location(self):
        a = ExperimentConfig(out_dir="x")
        b = ExperimentConfig(out_dir="y")
        assert a.config_hash() == b.config_hash()

    def test_tracks_seed_and_science_fields(self):
        assert (ExperimentConfig(seed=1).config_hash()
                != ExperimentConfig(seed=2).config_hash())
        assert (ExperimentConfig(users=2).config_hash()
                != ExperimentConfig(users=3).config_hash())


class TestRunners:
    def test_zero_iterations_reports_initial_objective(self):
        cfg, errors = parse_config(TINY_CUSTOM)
        assert not errors
        from dataclasses import replace
        cfg = replace(cfg, max_iters=0, monte_carlo_runs=1)
        records, _notes = run_custom(cfg)
        values = {r.mode: r.sum_rate for r in records}
        # with reflection-free media all three modes share the evaluation
        assert values["EE"] == pytest.approx(values["SS"], rel=1e-9)
        assert values["SE"] == pytest.approx(values["SS"], rel=1e-9)
        for r in records:
            assert r.iteration == 0

    def test_kind_guards(self):
        cfg, _ = parse_config(TINY_CUSTOM)
        with pytest.raises(ValueError):
            run_convergence(cfg)
        with pytest.raises(ValueError):
            run_layer_sweep(cfg)

    def test_records_ordered_and_complete(self):
        cfg, _ = parse_config(TINY_CUSTOM)
        records, _ = run_custom(cfg)
        assert len(records) == 2 * 3  # realizations x modes
        assert [r.realization for r in records] == [0, 0, 0, 1, 1, 1]
        for r in records:
            assert r.experiment == "custom"
            assert np.isfinite(r.sum_rate) and r.sum_rate >= 0
            assert r.n == 4 and r.layer_count == 2

    def test_worker_count_does_not_change_rows(self):
        cfg, _ = parse_config(TINY_CUSTOM)
        one, _ = run_experiment(cfg, jobs=1)
        two, _ = run_experiment(cfg, jobs=2)
        assert len(one) == len(two)
        for a, b in zip(one, two):
            assert a.sum_rate == b.sum_rate
            assert (a.experiment, a.mode, a.realization, a.iteration) == \
                   (b.experiment, b.mode, b.realization, b.iteration)

    def test_exact_never_below_surrogate_evaluated_exactly(self):
        text = TINY_CUSTOM.replace("rayleigh-sommerfeld", "dipole")
        cfg, _ = parse_config(text)
        records, _ = run_custom(cfg)
        by_real = {}
        for r in records:
            by_real.setdefault(r.realization, {})[r.mode] = r.sum_rate
        for modes in by_real.values():
            assert modes["EE"] >= modes["SE"] - 1e-12

    def test_convergence_emits_iteration_traces(self):
        cfg, _ = parse_config(TINY_CUSTOM)
        from dataclasses import replace
        cfg = replace(cfg, kind="convergence", cases=(1,), n_y=2, n_z=2,
                      layer_count=2, monte_carlo_runs=1, provider="dipole")
        records, _ = run_convergence(cfg)
        ee_rows = [r for r in records if r.mode == "EE"]
        assert [r.iteration for r in ee_rows] == list(range(len(ee_rows)))
        values = [r.sum_rate for r in ee_rows]
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
        assert ee_rows[0].experiment == "convergence-case1"

    def test_layer_sweep_uses_element_budget(self):
        cfg, _ = parse_config(TINY_CUSTOM)
        from dataclasses import replace
        cfg = replace(cfg, kind="layer-sweep", layers=(6,), monte_carlo_runs=1,
                      modes=("SS",), max_iters=1)
        records, notes = run_layer_sweep(cfg)
        assert len(records) == 1
        assert records[0].n == 12
        assert records[0].layer_count == 6
        assert notes  # quarter-wavelength patches violate the validity range

    def test_factorization_audit_field(self):
        text = TINY_CUSTOM.replace("rayleigh-sommerfeld", "dipole")
        cfg, _ = parse_config(text)
        records, _ = run_custom(cfg)
        for r in records:
            expected = 0 if r.mode == "SS" else 1
            assert r.factorizations == expected


class TestEmit:
    def test_csv_layout(self, tmp_path):
        cfg, _ = parse_config(TINY_CUSTOM)
        records, _ = run_custom(cfg)
        path = emit(records, cfg, tmp_path, "csv")
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# simstack ")
        header_idx = next(i for i, line in enumerate(lines) if not line.startswith("#"))
        assert lines[header_idx] == ",".join(COLUMNS)
        assert any(line.startswith("# config:") for line in lines[:header_idx])
        assert any(line.startswith("# config_hash:") for line in lines[:header_idx])
        assert len(lines) == header_idx + 1 + len(records)

    def test_json_mirrors_columns(self, tmp_path):
        cfg, _ = parse_config(TINY_CUSTOM)
        records, _ = run_custom(cfg)
        path = emit(records, cfg, tmp_path, "json")
        payload = json.loads(path.read_text())
        assert payload["columns"] == list(COLUMNS)
        assert len(payload["records"]) == len(records)
        assert set(payload["records"][0]) == set(COLUMNS)

    def test_reproducible_apart_from_timing(self, tmp_path):
        cfg, _ = parse_config(TINY_CUSTOM)
        records_a, _ = run_custom(cfg)
        records_b, _ = run_custom(cfg)
        path_a = emit(records_a, cfg, tmp_path / "a", "csv")
        path_b = emit(records_b, cfg, tmp_path / "b", "csv")

        def normalized(path):
            rows = []
            wallclock_col = COLUMNS.index("wallclock_ms")
            for line in path.read_text().splitlines():
                if line.startswith("# generated_at"):
                    continue
                if line.startswith("#"):
                    rows.append(line)
                    continue
                cells = line.split(",")
                if cells[0] != COLUMNS[0]:
                    cells[wallclock_col] = ""
                rows.append(",".join(cells))
            return rows

        assert normalized(path_a) == normalized(path_b)


class TestCli:
    def test_validate_ok(self, tmp_path, capsys):
        path = write_config(tmp_path, TINY_CUSTOM)
        assert main(["validate", str(path)]) == 0
        assert "config ok" in capsys.readouterr().out

    def test_validate_reports_all_errors(self, tmp_path, capsys):
        path = write_config(tmp_path, "[experiment]\nkind = nope\nmodes = YY\n")
        assert main(["validate", str(path)]) == 2
        err = capsys.readouterr().err
        assert err.count("config error:") == 2

    def test_missing_file_is_config_error(self, capsys):
        assert main(["validate", "/nonexistent/x.cfg"]) == 2

    def test_run_writes_output(self, tmp_path, capsys):
        path = write_config(tmp_path, TINY_CUSTOM)
        out = tmp_path / "results"
        assert main(["run", str(path), "--out", str(out), "--modes", "SS",
                     "--format", "json"]) == 0
        files = list(out.glob("custom.json"))
        assert len(files) == 1
        assert "wrote" in capsys.readouterr().out

    def test_run_seed_override_changes_hash(self, tmp_path):
        path = write_config(tmp_path, TINY_CUSTOM)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["run", str(path), "--out", str(out_a), "--modes", "SS"])
        main(["run", str(path), "--out", str(out_b), "--modes", "SS", "--seed", "5"])
        hash_a = next(line for line in (out_a / "custom.csv").read_text().splitlines()
                      if line.startswith("# config_hash"))
        hash_b = next(line for line in (out_b / "custom.csv").read_text().splitlines()
                      if line.startswith("# config_hash"))
        assert hash_a != hash_b

    def test_count_inversions_table(self, capsys):
        assert main(["count-inversions", "--L", "6"]) == 0
        out = capsys.readouterr().out
        assert "2  3" in out
        assert "3  11" in out
        assert out.strip().splitlines()[0].startswith("L")

    def test_count_inversions_validates_argument(self, capsys):
        assert main(["count-inversions", "--L", "1"]) == 2

    def test_bad_jobs_rejected(self, tmp_path):
        path = write_config(tmp_path, TINY_CUSTOM)
        assert main(["run", str(path), "--jobs", "0"]) == 2

    def test_numerical_failure_exit_code(self, tmp_path, capsys):
        # stacked wire elements closer than their own length overlap, which
        # the impedance quadrature rejects
        text = TINY_CUSTOM.replace("rayleigh-sommerfeld", "dipole").replace(
            "layer_count = 2", "layer_count = 2\nspacing_z_wl = 0.1")
        path = write_config(tmp_path, text)
        assert main(["run", str(path), "--out", str(tmp_path / "out")]) == 3
        assert "numerical failure" in capsys.readouterr().err

    def test_validity_note_printed_once(self, tmp_path, capsys):
        path = write_config(tmp_path, TINY_CUSTOM)
        assert main(["run", str(path), "--out", str(tmp_path / "out"),
                     "--modes", "SS"]) == 0
        err = capsys.readouterr().err
        assert err.count("warning:") == 1

    def test_console_script_entry(self):
        result = subprocess.run([sys.executable, "-m", "simstack.cli", "--version"],
                                capture_output=True, text=True)
        assert result.returncode == 0
        assert "simstack" in result.stdout
