"""
Tests for FP-ADMM, the least-squares baseline and QST inversion
"""

import os
import sys

import numpy as np
import pytest

sys.path.append(os.path.join(os.path.dirname(__file__), 'pythonScript'))

from cs_nmr_errors import DegenerateInputError, InvalidArgumentError
from monte_carlo_harness import score_estimate
from nmr_simulator import build_scheme, measure_groups
from quantum_core import (all_pauli_strings, expectation, fidelity, outer_product, preset_state,
                          random_pure_state, realize_pauli, vec)
from sensing import (SamplingProblem, assemble_from_groups, assemble_from_paulis, pauli_values_from_groups,
                     sample_paulis)
from solvers import (Estimate, PostProcess, SolverConfig, fp_admm_solve, ls_solve, orthonormal_rows, psd_project,
                     qst_invert, soft_threshold, svt, write_result)


def full_pauli_problem(rho):
    return assemble_from_paulis(all_pauli_strings(rho.n), rho)


class TestProximalOperators:
    def test_soft_threshold_real(self):
        np.testing.assert_allclose(soft_threshold(np.array([3.0, -0.5, -2.0]), 1.0), [2.0, 0.0, -1.0])

    def test_soft_threshold_complex_keeps_phase(self):
        shrunk = soft_threshold(np.array([3 + 4j, 0.1j]), 1.0)
        assert shrunk[0] == pytest.approx(2.4 + 3.2j)
        assert shrunk[1] == 0

    def test_svt(self):
        np.testing.assert_allclose(svt(np.diag([3.0, 1.0]), 2.0), np.diag([1.0, 0.0]), atol=1e-14)
        m = np.random.default_rng(1).standard_normal((4, 4))
        np.testing.assert_allclose(svt(m, 0.0), m, atol=1e-12)

    def test_svt_is_nuclear_norm_prox(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        tau = 0.3
        out = svt(x, tau)
        u, s, vh = np.linalg.svd(x)
        np.testing.assert_allclose(out, (u * np.maximum(s - tau, 0.0)) @ vh, atol=1e-12)

        def objective(z):
            return 0.5 * np.linalg.norm(z - x) ** 2 + tau * np.linalg.norm(z, "nuc")

        best = objective(out)
        for _ in range(20):
            step = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
            assert objective(out + 1e-3 * step) >= best - 1e-12
        shrunk = np.linalg.svd(out, compute_uv=False)
        assert np.all(shrunk <= np.maximum(s - tau, 0.0) + 1e-12)

    def test_negative_threshold(self):
        with pytest.raises(InvalidArgumentError):
            svt(np.eye(2), -1.0)
        with pytest.raises(InvalidArgumentError):
            soft_threshold(np.eye(2), -1.0)

    def test_psd_project(self):
        projected = psd_project(np.diag([1.2, -0.2]))
        np.testing.assert_allclose(projected.entries, np.diag([1.0, 0.0]), atol=1e-14)
        assert projected.physical
        with pytest.raises(DegenerateInputError):
            psd_project(-np.eye(2))


class TestConfig:
    def test_defaults(self):
        config = SolverConfig()
        assert config.k_max == 30
        assert config.delta == 1.0
        assert config.lambda_for(16) == 1.0
        assert config.estimate is Estimate.RHO
        assert config.orthonormalize
        assert SolverConfig(lam=None).lambda_for(16) == pytest.approx(0.25)
        assert SolverConfig(lam=0.3).lambda_for(16) == 0.3
        assert config.echo()["post_process"] == "trace_normalize"

    @pytest.mark.parametrize("kwargs", [{"delta": -1.0}, {"lam": 0.0}, {"mu_scale": 0.0}, {"epsilon1": 0.0},
                                        {"k_max": 0}, {"y_sign": 2}])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            SolverConfig(**kwargs)


class TestOrthonormalRows:
    def test_rows_span_the_same_space(self):
        scheme = build_scheme(2)
        rho = outer_product(random_pure_state(2, 9))
        problem = assemble_from_groups(scheme, measure_groups(rho, scheme), [1, 2, 3])
        rows, targets = orthonormal_rows(problem.a_matrix, problem.y_vector)
        np.testing.assert_allclose(rows @ rows.conj().T, np.eye(rows.shape[0]), atol=1e-12)
        assert rows.shape[0] == np.linalg.matrix_rank(problem.a_matrix)
        np.testing.assert_allclose(rows @ vec(rho.entries), targets, atol=1e-12)

    def test_zero_matrix(self):
        with pytest.raises(DegenerateInputError):
            orthonormal_rows(np.zeros((2, 4)), np.ones(2))


class TestFPADMM:
    def test_basis_state_recovered_from_all_paulis(self):
        rho = outer_product(preset_state("psi2"))
        result = fp_admm_solve(full_pauli_problem(rho))
        assert result.converged
        assert result.iterations == 2
        assert fidelity(result.rho_hat, rho) >= 0.999999
        assert result.flags == ()

    def test_three_qubit_superposition_recovered_from_all_paulis(self):
        rho = outer_product(preset_state("psi3"))
        result = fp_admm_solve(full_pauli_problem(rho))
        assert result.converged
        assert result.iterations == 2
        assert fidelity(result.rho_hat, rho) >= 0.999999

    def test_all_groups_recover_basis_state(self):
        scheme = build_scheme(2)
        rho = outer_product(preset_state("psi2"))
        problem = assemble_from_groups(scheme, measure_groups(rho, scheme), range(1, scheme.v + 1))
        result = fp_admm_solve(problem)
        assert fidelity(result.rho_hat, rho) >= 0.999

    def test_complete_data_converges_in_two_iterations(self):
        rho = outer_product(random_pure_state(3, 12))
        scheme = build_scheme(3)
        problem = assemble_from_groups(scheme, measure_groups(rho, scheme), range(1, scheme.v + 1))
        result = fp_admm_solve(problem)
        assert result.converged
        assert result.iterations == 2
        assert fidelity(result.rho_hat, rho) >= 0.999999
        assert int(result.metadata["rows"]) == 64

    def test_duplicated_rows_leave_fidelity_unchanged(self):
        scheme = build_scheme(3)
        rho = outer_product(preset_state("psi3"))
        problem = assemble_from_groups(scheme, measure_groups(rho, scheme), range(1, 16, 2))
        base = fp_admm_solve(problem)
        doubled = fp_admm_solve(problem.with_duplicated_rows(range(40)))
        assert abs(fidelity(doubled.rho_hat, rho) - fidelity(base.rho_hat, rho)) < 1e-6

    @pytest.mark.parametrize("scale", [0.5, 2.0])
    def test_scaled_rows_give_the_same_iterates(self, scale):
        scheme = build_scheme(3)
        rho = outer_product(random_pure_state(3, 6))
        problem = assemble_from_groups(scheme, measure_groups(rho, scheme), [2, 5, 8, 11, 14])
        scaled = SamplingProblem(a_matrix=scale * problem.a_matrix, y_vector=scale * problem.y_vector,
                                 row_meta=problem.row_meta, d=problem.d)
        iterates = {}

        def record(key):
            iterates[key] = []
            return lambda state: iterates[key].append(state.rho.copy())

        base = fp_admm_solve(problem, callback=record("base"))
        other = fp_admm_solve(scaled, callback=record("scaled"))
        assert len(iterates["base"]) == len(iterates["scaled"])
        deviation = max(np.max(np.abs(a - b)) for a, b in zip(iterates["base"], iterates["scaled"]))
        assert deviation <= 1e-9
        assert fidelity(other.rho_hat, rho) == pytest.approx(fidelity(base.rho_hat, rho), abs=1e-9)

    def test_raw_rows_option(self):
        rho = outer_product(preset_state("psi3"))
        result = fp_admm_solve(full_pauli_problem(rho), SolverConfig(orthonormalize=False))
        assert result.converged
        assert result.iterations == 2
        assert result.metadata["rows"] == "64"

    def test_iterates_stay_hermitian(self):
        rho = outer_product(random_pure_state(3, 5))
        scheme = build_scheme(3)
        problem = assemble_from_groups(scheme, measure_groups(rho, scheme), [1, 4, 7, 9, 12])
        asymmetry = []

        def watch(state):
            asymmetry.append(np.max(np.abs(state.rho - state.rho.conj().T)))

        result = fp_admm_solve(problem, callback=watch)
        assert len(asymmetry) == result.iterations
        assert max(asymmetry) <= 1e-13
        assert np.max(np.abs(result.rho_hat.entries - result.rho_hat.entries.conj().T)) <= 1e-12

    def test_iteration_cap(self):
        rho = outer_product(preset_state("psi3"))
        result = fp_admm_solve(full_pauli_problem(rho), SolverConfig(k_max=1))
        assert result.iterations == 1
        assert not result.converged
        assert "iteration_cap" in result.flags
        assert len(result.residual_history) == 1

    def test_zero_observations(self):
        problem = assemble_from_paulis(["XX", "YZ"], [0.0, 0.0], include_trace_row=False)
        result = fp_admm_solve(problem)
        assert result.degenerate
        assert result.iterations == 0
        assert not np.any(result.rho_hat.entries)
        assert not result.rho_hat.normalized

    def test_deterministic(self):
        rho = outer_product(random_pure_state(2, 3))
        scheme = build_scheme(2)
        problem = assemble_from_groups(scheme, measure_groups(rho, scheme), [2, 3, 5])
        first = fp_admm_solve(problem)
        second = fp_admm_solve(problem)
        assert np.array_equal(first.rho_hat.entries, second.rho_hat.entries)
        assert first.residual_history == second.residual_history

    def test_estimate_and_post_process_options(self):
        rho = outer_product(preset_state("psi2"))
        problem = full_pauli_problem(rho)
        raw = fp_admm_solve(problem, SolverConfig(post_process=PostProcess.NONE))
        assert np.trace(raw.rho_hat.entries).real == pytest.approx(1.0)
        projected = fp_admm_solve(problem, SolverConfig(post_process="psd_project"))
        assert projected.rho_hat.physical
        combined = fp_admm_solve(problem, SolverConfig(estimate=Estimate.RHO_PLUS_S, post_process="none"))
        np.testing.assert_allclose(combined.rho_hat.entries, rho.entries, atol=1e-12)
        assert combined.converged

    def test_metadata_echo(self):
        result = fp_admm_solve(full_pauli_problem(outer_product(preset_state("psi2"))))
        assert float(result.metadata["step"]) == pytest.approx(1.0)
        assert float(result.metadata["mu"]) == pytest.approx(2.0)
        assert float(result.metadata["lambda"]) == 1.0
        assert result.metadata["rows"] == "16"
        assert result.metadata["orthonormalize"] == "True"


class TestBaselines:
    def test_least_squares_full_data(self):
        rho = outer_product(preset_state("psi3"))
        result = ls_solve(full_pauli_problem(rho))
        assert result.method == "ls"
        assert fidelity(result.rho_hat, rho) >= 0.9999

    def test_least_squares_all_groups(self):
        scheme = build_scheme(2)
        rho = outer_product(random_pure_state(2, 17))
        problem = assemble_from_groups(scheme, measure_groups(rho, scheme), range(1, scheme.v + 1))
        assert fidelity(ls_solve(problem).rho_hat, rho) >= 0.9999

    def test_least_squares_trails_fpadmm_when_undersampled(self):
        ls_scores, admm_scores = [], []
        for seed in range(100):
            rho = outer_product(random_pure_state(3, seed))
            problem = assemble_from_paulis(sample_paulis(3, 8, seed), rho)
            ls_scores.append(score_estimate(ls_solve(problem), rho)[0])
            admm_scores.append(score_estimate(fp_admm_solve(problem), rho)[0])
        assert np.mean(ls_scores) < np.mean(admm_scores)

    def test_least_squares_ignores_duplicated_rows(self):
        scheme = build_scheme(3)
        rho = outer_product(preset_state("psi3"))
        problem = assemble_from_groups(scheme, measure_groups(rho, scheme), [1, 4, 6, 9])
        doubled = problem.with_duplicated_rows(range(0, 32, 3))
        np.testing.assert_allclose(ls_solve(doubled).rho_hat.entries, ls_solve(problem).rho_hat.entries,
                                   atol=1e-8)

    def test_qst_inverts_exact_values(self):
        rho = outer_product(random_pure_state(2, 4))
        values = {p: expectation(realize_pauli(p), rho) for p in all_pauli_strings(2)}
        np.testing.assert_allclose(qst_invert(values).entries, rho.entries, atol=1e-12)

    def test_qst_from_group_readouts(self):
        scheme = build_scheme(3)
        rho = outer_product(preset_state("psi3"))
        estimate = qst_invert(pauli_values_from_groups(scheme, measure_groups(rho, scheme)))
        assert fidelity(estimate, rho) >= 0.9999

    def test_qst_reports_missing_strings(self):
        values = {p.labels: 0.0 for p in all_pauli_strings(2) if p.labels != "XZ"}
        with pytest.raises(InvalidArgumentError, match="XZ"):
            qst_invert(values)


class TestResultFile:
    def test_metadata_block(self, tmp_path):
        result = fp_admm_solve(full_pauli_problem(outer_product(preset_state("psi2"))))
        path = tmp_path / "rho.txt"
        write_result(path, result, header=["cs-nmr reconstruct"])
        text = path.read_text()
        assert text.startswith("# cs-nmr reconstruct\n# method fpadmm\n# iterations 2\n")
        assert "wall_time" not in text
        assert "# config.k_max 30\n" in text
        write_result(path, result, include_timing=True)
        assert "# wall_time " in path.read_text()


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
