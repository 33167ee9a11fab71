"""
Tests for the cs-nmr command-line interface
"""

import json
import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.join(os.path.dirname(__file__), 'pythonScript'))

from cs_nmr_cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, SEED_ENV, main, parse_args
from monte_carlo_harness import read_records_csv
from nmr_simulator import read_measurements, read_scheme
from quantum_core import read_density_matrix, read_state


@pytest.fixture
def psi2_file(tmp_path):
    path = tmp_path / "psi2.txt"
    assert main(["state", "--preset", "psi2", "--out", str(path)]) == EXIT_OK
    return path


def _fidelity_line(output):
    lines = [line for line in output.splitlines() if line.startswith("fidelity ")]
    assert len(lines) == 1
    return float(lines[0].split()[1])


class TestParsing:
    def test_subcommand_options(self):
        spec = parse_args(["sweep", "--case", "A", "--n", "3", "--eta", "0.5,1.0"])
        assert spec.subcommand == "sweep"
        assert spec.options["case"] == "A"
        assert spec.options["eta"] == "0.5,1.0"
        assert spec.options["k_max"] == 30

    def test_unknown_subcommand(self):
        assert main(["bogus"]) == EXIT_USAGE

    def test_missing_required_option(self):
        assert main(["state", "--preset", "psi2"]) == EXIT_USAGE

    def test_invalid_choice(self):
        assert main(["reconstruct", "--state", "x", "--solver", "magic", "--out", "y"]) == EXIT_USAGE


class TestState:
    def test_preset(self, psi2_file):
        psi = read_state(psi2_file)
        assert psi.n == 2
        np.testing.assert_array_equal(psi.amplitudes, [1, 0, 0, 0])
        assert psi2_file.read_text().startswith("# cs-nmr state")

    def test_random_density(self, tmp_path):
        path = tmp_path / "rho.txt"
        assert main(["state", "--random", "--n", "3", "--seed", "4", "--density", "--out", str(path)]) == EXIT_OK
        rho = read_density_matrix(path)
        assert rho.n == 3
        assert np.trace(rho.entries).real == pytest.approx(1.0)

    def test_needs_exactly_one_source(self, tmp_path):
        out = str(tmp_path / "s.txt")
        assert main(["state", "--out", out]) == EXIT_USAGE
        assert main(["state", "--preset", "psi2", "--random", "--n", "2", "--out", out]) == EXIT_USAGE
        assert main(["state", "--random", "--out", out]) == EXIT_USAGE

    def test_seed_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "7")
        from_env, explicit = tmp_path / "env.txt", tmp_path / "explicit.txt"
        assert main(["state", "--random", "--n", "2", "--out", str(from_env)]) == EXIT_OK
        assert main(["state", "--random", "--n", "2", "--seed", "7", "--out", str(explicit)]) == EXIT_OK
        np.testing.assert_array_equal(read_state(from_env).amplitudes, read_state(explicit).amplitudes)


class TestMeasureAndReconstruct:
    def test_measure(self, tmp_path, psi2_file):
        out, scheme_out = tmp_path / "m.txt", tmp_path / "scheme.txt"
        code = main(["measure", "--state", str(psi2_file), "--out", str(out), "--scheme-out", str(scheme_out)])
        assert code == EXIT_OK
        record = read_measurements(out)
        assert len(record.values) == 6
        assert read_scheme(scheme_out).v == 6

    def test_missing_state_file(self, tmp_path):
        code = main(["measure", "--state", str(tmp_path / "absent.txt"), "--out", str(tmp_path / "m.txt")])
        assert code == EXIT_RUNTIME

    @pytest.mark.parametrize("solver, floor", [("fpadmm", 0.999), ("ls", 0.9999), ("qst", 0.9999)])
    def test_reconstruct_full_rate(self, tmp_path, psi2_file, capsys, solver, floor):
        out = tmp_path / "rho_hat.txt"
        code = main(["reconstruct", "--state", str(psi2_file), "--eta", "1.0", "--solver", solver, "--out", str(out)])
        assert code == EXIT_OK
        assert _fidelity_line(capsys.readouterr().out) >= floor
        text = out.read_text()
        assert f"# method {solver}\n" in text
        assert "wall_time" not in text
        assert read_density_matrix(out).n == 2

    def test_reconstruct_from_problem_dump(self, tmp_path, psi2_file, capsys):
        problem, first, second = tmp_path / "problem.txt", tmp_path / "a.txt", tmp_path / "b.txt"
        assert main(["reconstruct", "--state", str(psi2_file), "--mode", "pauli", "--eta", "1.0",
                     "--problem-out", str(problem), "--out", str(first)]) == EXIT_OK
        capsys.readouterr()
        assert main(["reconstruct", "--problem", str(problem), "--state", str(psi2_file),
                     "--record-timing", "--out", str(second)]) == EXIT_OK
        assert _fidelity_line(capsys.readouterr().out) >= 0.999999
        assert "# wall_time " in second.read_text()
        np.testing.assert_allclose(read_density_matrix(second).entries, read_density_matrix(first).entries,
                                   atol=1e-12)

    def test_reconstruct_from_measurement_dump(self, tmp_path, psi2_file, capsys):
        measurements = tmp_path / "m.txt"
        assert main(["measure", "--state", str(psi2_file), "--out", str(measurements)]) == EXIT_OK
        out = tmp_path / "rho_hat.txt"
        assert main(["reconstruct", "--state", str(psi2_file), "--measurements", str(measurements),
                     "--eta", "1.0", "--solver", "qst", "--out", str(out)]) == EXIT_OK
        assert _fidelity_line(capsys.readouterr().out) >= 0.9999

    def test_zero_estimate_scores_zero(self, tmp_path, psi2_file, capsys):
        out = tmp_path / "rho_hat.txt"
        code = main(["reconstruct", "--state", str(psi2_file), "--eta", "1.0", "--mu-scale", "0.01",
                     "--k-max", "5", "--out", str(out)])
        assert code == EXIT_OK
        assert _fidelity_line(capsys.readouterr().out) == 0.0
        text = out.read_text()
        assert "# fidelity 0\n" in text
        assert "# score_flags zero_estimate\n" in text
        assert "iteration_cap" in text

    def test_solver_flags_reach_the_result(self, tmp_path, psi2_file):
        out = tmp_path / "rho_hat.txt"
        assert main(["reconstruct", "--state", str(psi2_file), "--eta", "1.0", "--lam", "0",
                     "--no-orthonormalize", "--delta", "0.5", "--estimate", "rho_plus_s",
                     "--out", str(out)]) == EXIT_OK
        text = out.read_text()
        assert "# config.lam None\n" in text
        assert "# config.orthonormalize False\n" in text
        assert "# config.estimate rho_plus_s\n" in text
        assert "# config.lambda 0.5\n" in text

    def test_pauli_mode_rejects_spectral_noise(self, tmp_path, psi2_file):
        code = main(["reconstruct", "--state", str(psi2_file), "--mode", "pauli", "--eta", "0.5",
                     "--noise", "spectral_gaussian", "--sigma", "0.01", "--out", str(tmp_path / "x.txt")])
        assert code == EXIT_RUNTIME

    def test_reconstruct_needs_input(self, tmp_path):
        assert main(["reconstruct", "--out", str(tmp_path / "x.txt")]) == EXIT_USAGE

    def test_invalid_rate_is_runtime_error(self, tmp_path, psi2_file):
        code = main(["reconstruct", "--state", str(psi2_file), "--eta", "1.5", "--out", str(tmp_path / "x.txt")])
        assert code == EXIT_RUNTIME


class TestSweepAndReport:
    def _sweep(self, out_dir, *extra):
        return main(["sweep", "--case", "C", "--n", "2", "--eta", "1.0", "--trials", "2",
                     "--out-dir", str(out_dir), *extra])

    def test_sweep_outputs(self, tmp_path, capsys):
        assert self._sweep(tmp_path) == EXIT_OK
        stem = tmp_path / "sweep_C_n2"
        for suffix in ("_records.csv", "_summary.csv", "_errorbars.csv", ".json"):
            assert os.path.exists(f"{stem}{suffix}")
        records = read_records_csv(f"{stem}_records.csv")
        assert len(records) == 2
        assert all(r.fidelity >= 0.9999 for r in records)
        summary_lines = capsys.readouterr().out.strip().splitlines()
        assert len(summary_lines) == 1
        assert summary_lines[0].split()[0] == "1"
        document = json.loads((tmp_path / "sweep_C_n2.json").read_text())
        assert document["schema_version"] == "1"

    def test_sweep_reruns_are_byte_identical(self, tmp_path):
        records = tmp_path / "sweep_C_n2_records.csv"
        assert self._sweep(tmp_path) == EXIT_OK
        first = records.read_bytes()
        assert self._sweep(tmp_path) == EXIT_OK
        assert records.read_bytes() == first

    def test_config_file(self, tmp_path):
        config = tmp_path / "sweep.conf"
        config.write_text("# small sweep\ntrials = 3\neta = 0.5,1.0\nk-max = 20\n")
        assert main(["--config", str(config), "sweep", "--case", "C", "--n", "2",
                     "--out-dir", str(tmp_path)]) == EXIT_OK
        records = read_records_csv(tmp_path / "sweep_C_n2_records.csv")
        assert len(records) == 6
        assert all(r.iterations <= 20 for r in records)

    def test_command_line_beats_config(self, tmp_path):
        config = tmp_path / "sweep.conf"
        config.write_text("trials = 3\neta = 1.0\n")
        assert main(["--config", str(config), "sweep", "--case", "C", "--n", "2", "--trials", "1",
                     "--out-dir", str(tmp_path)]) == EXIT_OK
        assert len(read_records_csv(tmp_path / "sweep_C_n2_records.csv")) == 1

    def test_bad_config_key(self, tmp_path):
        config = tmp_path / "bad.conf"
        config.write_text("nonsense = 1\n")
        assert main(["--config", str(config), "sweep", "--case", "C", "--n", "2"]) == EXIT_USAGE

    def test_invalid_rate_list(self, tmp_path):
        assert self._sweep(tmp_path, "--eta", "0.5,abc") == EXIT_USAGE

    def test_report(self, tmp_path):
        assert self._sweep(tmp_path) == EXIT_OK
        summary, errorbars = tmp_path / "report.csv", tmp_path / "bars.csv"
        assert main(["report", "--records", str(tmp_path / "sweep_C_n2_records.csv"), "--out", str(summary),
                     "--errorbar", str(errorbars)]) == EXIT_OK
        rows = [line for line in summary.read_text().splitlines() if not line.startswith("#")]
        assert rows[0] == "case,n,eta,f_avg,zeta,success_prob,threshold"
        assert rows[1].startswith("C,2,1,")
        assert errorbars.exists()

    def test_report_missing_records(self, tmp_path):
        code = main(["report", "--records", str(tmp_path / "none.csv"), "--out", str(tmp_path / "r.csv")])
        assert code == EXIT_RUNTIME


class TestCompare:
    def test_compare_document(self, tmp_path, capsys):
        out = tmp_path / "compare.json"
        assert main(["compare", "--n", "2", "--out", str(out)]) == EXIT_OK
        document = json.loads(out.read_text())
        assert document["schema_version"] == "1"
        assert document["state"] == "psi2"
        assert document["qst_fidelity"] >= 0.999
        assert document["proposed_fidelity"] >= 0.999
        assert document["reference"]["proposed_fidelity"] == 0.9999
        assert capsys.readouterr().out.startswith("qst ")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
