"""
CS-NMR Reconstruction System - Main Integration Module
Wires state preparation, simulated acquisition, sampling and reconstruction
"""

import logging
from typing import Dict, Optional, Union

import numpy as np

from cs_nmr_errors import CSNMRError, InvalidArgumentError
from nmr_simulator import (DEFAULT_SCHEME, MeasurementPath, MeasurementRecord, NoiseSpec, ReadoutScheme,
                           SpectrumModel, build_scheme, measure_groups)
from quantum_core import DensityMatrix, PauliString, fidelity, outer_product, preset_state, random_pure_state
from sensing import (PauliExpectations, SamplingMode, SamplingPlan, SamplingProblem, assemble_from_groups,
                     assemble_from_paulis, pauli_values_from_groups, sample_groups, sample_paulis)
from solvers import ReconstructionResult, SolverConfig, fp_admm_solve, ls_solve, qst_invert

logger = logging.getLogger(__name__)

SOLVERS = ("fpadmm", "ls", "qst")


class CSNMRReconstructionSystem:
    def __init__(self, n: int, scheme: Optional[ReadoutScheme] = None, scheme_seed: int = 1,
                 solver_config: Optional[SolverConfig] = None,
                 spectral_params: Optional[SpectrumModel] = None):
        """Initialize the reconstruction pipeline for n qubits"""
        if scheme is not None and scheme.n != n:
            raise InvalidArgumentError(f"scheme has {scheme.n} qubits, system has {n}")
        self.n = n
        self.scheme = scheme or build_scheme(n, DEFAULT_SCHEME, seed=scheme_seed)
        self.solver_config = solver_config or SolverConfig()
        self.spectral_params = spectral_params

        # pipeline state
        self.state: Optional[DensityMatrix] = None
        self.record: Optional[MeasurementRecord] = None
        self.problem: Optional[SamplingProblem] = None
        self.result: Optional[ReconstructionResult] = None

    def prepare_state(self, preset: Optional[str] = None, seed: Optional[int] = None,
                      rho: Optional[DensityMatrix] = None) -> DensityMatrix:
        """Set the target state from a preset, a seeded random pure state or a given matrix"""
        if rho is None:
            if preset is not None:
                rho = outer_product(preset_state(preset))
            elif seed is not None:
                rho = outer_product(random_pure_state(self.n, seed))
            else:
                raise InvalidArgumentError("need a preset name, a seed or a density matrix")
        if rho.n != self.n:
            raise InvalidArgumentError(f"state has {rho.n} qubits, system has {self.n}")
        self.state = rho
        self.record = self.problem = self.result = None
        return rho

    def acquire(self, path: Union[MeasurementPath, str] = MeasurementPath.IDEAL,
                noise: Optional[NoiseSpec] = None) -> MeasurementRecord:
        """Simulate every observable group of the scheme on the current state"""
        self._require_state()
        self.record = measure_groups(self.state, self.scheme, path, noise, self.spectral_params)
        for warning in self.record.warnings:
            logger.warning(warning)
        return self.record

    def sample(self, eta: float, seed: int, mode: Union[SamplingMode, str] = SamplingMode.GROUPS,
               noise: Optional[NoiseSpec] = None, include_trace_row: bool = True) -> SamplingProblem:
        """Build the sensing problem for a sampling rate"""
        mode = SamplingMode(mode)
        if mode is SamplingMode.GROUPS:
            if self.record is None:
                self.acquire(noise=noise)
            plan = SamplingPlan.for_groups(self.scheme.v, eta, seed, include_trace_row)
            indices = sample_groups(self.scheme.v, plan.g, seed)
            self.problem = assemble_from_groups(self.scheme, self.record, indices, include_trace_row, plan)
        else:
            self._require_state()
            plan = SamplingPlan.for_paulis(self.n, eta, seed, include_trace_row)
            paulis = sample_paulis(self.n, plan.m, seed, include_identity=True)
            self.problem = assemble_from_paulis(paulis, self.state, noise, include_trace_row, plan)
        return self.problem

    def pauli_values(self, problem: Optional[SamplingProblem] = None) -> PauliExpectations:
        """Pauli expectations from complete Pauli rows or from a full set of measured groups"""
        problem = problem or self.problem
        if problem is None:
            if self.record is None:
                raise InvalidArgumentError("nothing measured yet")
            return pauli_values_from_groups(self.scheme, self.record)
        scale = np.sqrt(problem.d)
        pauli_rows = {m.label: y * scale for m, y in zip(problem.row_meta, problem.y_vector) if m.kind == "pauli"}
        if pauli_rows:
            values = {PauliString(label): float(v) for label, v in pauli_rows.items()}
            values.setdefault(PauliString("I" * self.n), 1.0)
            return PauliExpectations(values)
        group_values: Dict[int, list] = {}
        for meta, y in zip(problem.row_meta, problem.y_vector):
            if meta.kind == "group":
                group_values.setdefault(meta.group_id, []).append(y * scale)
        return pauli_values_from_groups(self.scheme, {k: np.array(v) for k, v in group_values.items()})

    def reconstruct(self, solver: str = "fpadmm", problem: Optional[SamplingProblem] = None) -> ReconstructionResult:
        """Estimate the state with the chosen solver"""
        if solver not in SOLVERS:
            raise InvalidArgumentError(f"unknown solver {solver!r}; expected one of {', '.join(SOLVERS)}")
        problem = problem or self.problem
        if solver == "qst":
            rho_hat = qst_invert(self.pauli_values(problem))
            self.result = ReconstructionResult(rho_hat=rho_hat, iterations=0, final_residual=0.0,
                                               converged=True, wall_time=0.0, method="qst")
        else:
            if problem is None:
                raise InvalidArgumentError("no sampling problem to solve")
            if solver == "ls":
                self.result = ls_solve(problem)
            else:
                self.result = fp_admm_solve(problem, self.solver_config)
        return self.result

    def run_pipeline(self, eta: float, seed: int, solver: str = "fpadmm",
                     mode: Union[SamplingMode, str] = SamplingMode.GROUPS,
                     path: Union[MeasurementPath, str] = MeasurementPath.IDEAL,
                     noise: Optional[NoiseSpec] = None) -> Dict:
        """Acquire, sample and reconstruct the current state; errors come back as a dict"""
        try:
            self._require_state()
            if SamplingMode(mode) is SamplingMode.GROUPS:
                self.acquire(path, noise)
            self.sample(eta, seed, mode, noise)
            result = self.reconstruct(solver)
            score = fidelity(result.rho_hat, self.state) if np.any(result.rho_hat.entries) else 0.0
        except CSNMRError as error:
            logger.error("pipeline failed: %s", error)
            return {"error": str(error)}
        logger.info("%s reconstruction at eta=%.4f: fidelity %.6f", solver, eta, score)
        return {
            "solver": solver,
            "eta": eta,
            "rows": self.problem.rows,
            "fidelity": score,
            "iterations": result.iterations,
            "converged": result.converged,
            "final_residual": result.final_residual,
            "flags": list(result.flags),
        }

    def get_system_status(self) -> Dict:
        """Summary of the pipeline state"""
        return {
            "n": self.n,
            "scheme": self.scheme.scheme_name,
            "groups": self.scheme.v,
            "scheme_complete": self.scheme.is_complete,
            "state_prepared": self.state is not None,
            "measured": self.record is not None,
            "problem_rows": self.problem.rows if self.problem is not None else 0,
            "reconstructed": self.result is not None,
        }

    def _require_state(self):
        if self.state is None:
            raise InvalidArgumentError("no target state prepared")
