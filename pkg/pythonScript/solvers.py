"""
Reconstruction engines
FP-ADMM nuclear-norm recovery, a least-squares baseline and direct QST inversion
"""

import logging
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from cs_nmr_errors import DegenerateInputError, InvalidArgumentError
from quantum_core import (DensityMatrix, PauliString, all_pauli_strings, density_matrix_lines,
                          hermitian_part, mat, qubit_count, realize_pauli, vec)
from sensing import SamplingProblem

logger = logging.getLogger(__name__)

LS_RCOND = 1e-10
ROW_RCOND = 1e-10
TRACE_FLOOR = 1e-12


class PostProcess(Enum):
    NONE = "none"
    TRACE_NORMALIZE = "trace_normalize"
    PSD_PROJECT = "psd_project"


class Estimate(Enum):
    RHO = "rho"
    RHO_PLUS_S = "rho_plus_s"


@dataclass(frozen=True)
class SolverConfig:
    """
    FP-ADMM hyperparameters.

    mu = mu_scale / ||y||, so the singular value threshold delta/mu is ||y|| * delta / mu_scale.
    lam=None means 1/sqrt(d). orthonormalize iterates on an orthonormal basis of the row space.
    """
    delta: float = 1.0
    lam: Optional[float] = 1.0
    mu_scale: float = 2.0
    epsilon1: float = 1e-7
    k_max: int = 30
    post_process: PostProcess = PostProcess.TRACE_NORMALIZE
    y_sign: int = 1
    estimate: Estimate = Estimate.RHO
    orthonormalize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "post_process", PostProcess(self.post_process))
        object.__setattr__(self, "estimate", Estimate(self.estimate))
        if not self.delta >= 0:
            raise InvalidArgumentError(f"step size delta must be >= 0, got {self.delta}")
        if self.lam is not None and not self.lam > 0:
            raise InvalidArgumentError(f"sparsity weight must be > 0, got {self.lam}")
        if not self.mu_scale > 0:
            raise InvalidArgumentError(f"mu scale must be > 0, got {self.mu_scale}")
        if not self.epsilon1 > 0:
            raise InvalidArgumentError(f"epsilon1 must be > 0, got {self.epsilon1}")
        if self.k_max < 1:
            raise InvalidArgumentError(f"k_max must be >= 1, got {self.k_max}")
        if self.y_sign not in (1, -1):
            raise InvalidArgumentError(f"y_sign must be +1 or -1, got {self.y_sign}")

    def lambda_for(self, d: int) -> float:
        return self.lam if self.lam is not None else 1.0 / np.sqrt(d)

    def echo(self) -> Dict[str, str]:
        return {key: value.value if isinstance(value, Enum) else str(value)
                for key, value in asdict(self).items()}


@dataclass
class SolverState:
    rho1: np.ndarray
    rho: np.ndarray
    s_mat: np.ndarray
    y_mult: np.ndarray
    k: int = 0
    residual_history: List[float] = field(default_factory=list)


@dataclass
class ReconstructionResult:
    rho_hat: DensityMatrix
    iterations: int
    final_residual: float
    converged: bool
    wall_time: float
    method: str = "fpadmm"
    residual_history: Tuple[float, ...] = ()
    flags: Tuple[str, ...] = ()
    metadata: Dict[str, str] = field(default_factory=dict)

    @property
    def degenerate(self) -> bool:
        return "degenerate_input" in self.flags


def soft_threshold(x, tau: float):
    """Entrywise shrinkage; complex entries keep their phase"""
    if tau < 0:
        raise InvalidArgumentError(f"threshold must be >= 0, got {tau}")
    x = np.asarray(x)
    if np.iscomplexobj(x):
        magnitude = np.abs(x)
        safe = np.where(magnitude > 0, magnitude, 1.0)
        return x * np.where(magnitude > tau, 1.0 - tau / safe, 0.0)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def svt(x: np.ndarray, tau: float) -> np.ndarray:
    """Singular value contraction U S_tau(Sigma) V^dagger"""
    if tau < 0:
        raise InvalidArgumentError(f"threshold must be >= 0, got {tau}")
    u, s, vh = linalg.svd(np.asarray(x, dtype=complex), full_matrices=False)
    return (u * soft_threshold(s, tau)) @ vh


def psd_project(rho: Union[DensityMatrix, np.ndarray]) -> DensityMatrix:
    """Clip negative eigenvalues and renormalize to unit trace"""
    matrix = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    eigenvalues, eigenvectors = linalg.eigh(hermitian_part(matrix))
    clipped = np.clip(eigenvalues, 0.0, None)
    total = clipped.sum()
    if total <= 0:
        raise DegenerateInputError("no positive eigenvalue to project onto")
    projected = (eigenvectors * (clipped / total)) @ eigenvectors.conj().T
    return DensityMatrix(n=qubit_count(matrix.shape[0]), entries=hermitian_part(projected),
                         rank_hint=int(np.count_nonzero(clipped)), normalized=True, physical=True)


def _finish(estimate: np.ndarray, post_process: PostProcess) -> Tuple[DensityMatrix, List[str]]:
    flags: List[str] = []
    estimate = hermitian_part(estimate)
    if post_process is PostProcess.PSD_PROJECT:
        try:
            return psd_project(estimate), flags
        except DegenerateInputError:
            flags.append("psd_projection_failed")
    elif post_process is PostProcess.TRACE_NORMALIZE:
        trace = np.trace(estimate).real
        if trace > TRACE_FLOOR:
            estimate = estimate / trace
        else:
            flags.append("nonpositive_trace")
    return DensityMatrix.from_entries(estimate), flags


def orthonormal_rows(a: np.ndarray, y: np.ndarray, rcond: float = ROW_RCOND) -> Tuple[np.ndarray, np.ndarray]:
    """
    Orthonormal basis of the row space of A with the observations mapped onto it.

    With A = U Sigma V^dagger cut at the numerical rank r, the rows become V_r^dagger and the
    observations Sigma_r^-1 U_r^dagger y. A consistent system keeps its solution set. Duplicated,
    dependent or rescaled rows change the result only by a unitary change of row basis, which
    the FP-ADMM iteration does not see.
    """
    u, s, vh = linalg.svd(np.asarray(a, dtype=complex), full_matrices=False)
    if s.size == 0 or s[0] == 0:
        raise DegenerateInputError("sampling matrix has no nonzero singular value")
    rank = int(np.count_nonzero(s > rcond * s[0]))
    return vh[:rank], (u[:, :rank].conj().T @ np.asarray(y, dtype=complex)) / s[:rank]


def _zero_fixed_point(d: int, started: float, metadata: Dict[str, str]) -> ReconstructionResult:
    logger.info("FP-ADMM: zero observation vector, returning the zero fixed point")
    return ReconstructionResult(
        rho_hat=DensityMatrix(n=qubit_count(d), entries=np.zeros((d, d), dtype=complex), rank_hint=0,
                              normalized=False),
        iterations=0, final_residual=0.0, converged=True, wall_time=time.perf_counter() - started,
        method="fpadmm", flags=("degenerate_input",), metadata=metadata)


def fp_admm_solve(problem: SamplingProblem, config: Optional[SolverConfig] = None,
                  callback: Optional[Callable[[SolverState], None]] = None) -> ReconstructionResult:
    """
    Fixed-point ADMM for min ||rho||_* + lam ||S||_1 subject to A vec(rho + S) = y.

    Iterates the low-rank update (singular value contraction), Hermitian symmetrization,
    the sparse update (soft threshold) and the multiplier update from zero initial values.
    By default the iteration runs on orthonormal_rows(A, y), where A^dagger A is a projector
    and the verbatim step delta = 1 is stable; the relative residual is measured there too.
    """
    config = config or SolverConfig()
    started = time.perf_counter()
    d = problem.d
    if problem.rows == 0:
        raise InvalidArgumentError("cannot solve an empty problem")

    metadata = config.echo()
    if not np.any(problem.y_vector):
        return _zero_fixed_point(d, started, metadata)
    a, y = problem.a_matrix, problem.y_vector.astype(complex)
    if config.orthonormalize:
        a, y = orthonormal_rows(a, y)
    y_norm = float(np.linalg.norm(y))
    if y_norm == 0.0:
        return _zero_fixed_point(d, started, metadata)

    a_h = a.conj().T
    step = config.delta
    mu = config.mu_scale / y_norm
    lam = config.lambda_for(d)
    contraction = np.eye(d * d, dtype=complex) - step * (a_h @ a)
    metadata.update({"rows": str(a.shape[0]), "step": f"{step:.17g}", "mu": f"{mu:.17g}",
                     "lambda": f"{lam:.17g}"})

    state = SolverState(rho1=np.zeros((d, d), dtype=complex), rho=np.zeros((d, d), dtype=complex),
                        s_mat=np.zeros((d, d), dtype=complex), y_mult=np.zeros(a.shape[0], dtype=complex))
    converged = False
    while state.k < config.k_max:
        shifted = y - state.y_mult / mu
        x1 = contraction @ vec(state.rho1) + step * (a_h @ (shifted - a @ vec(state.s_mat)))
        state.rho1 = svt(mat(x1), step / mu)
        state.rho = (state.rho1 + state.rho1.conj().T) / 2
        x2 = contraction @ vec(state.s_mat) + step * (a_h @ (shifted - a @ vec(state.rho)))
        state.s_mat = soft_threshold(mat(x2), step * lam / mu)
        mismatch = a @ vec(state.rho + state.s_mat) - y
        state.y_mult = state.y_mult + config.y_sign * mu * mismatch
        state.k += 1
        residual = float(np.linalg.norm(mismatch)) / y_norm
        state.residual_history.append(residual)
        logger.debug("FP-ADMM iteration %d: relative residual %.3e", state.k, residual)
        if callback is not None:
            callback(state)
        if residual < config.epsilon1:
            converged = True
            break

    if config.estimate is Estimate.RHO_PLUS_S:
        estimate = state.rho + state.s_mat
    else:
        estimate = state.rho
    rho_hat, flags = _finish(estimate, config.post_process)
    if not converged:
        flags.append("iteration_cap")
    elapsed = time.perf_counter() - started
    logger.info("FP-ADMM finished after %d iterations (residual %.3e, converged=%s)",
                state.k, state.residual_history[-1], converged)
    return ReconstructionResult(rho_hat=rho_hat, iterations=state.k, final_residual=state.residual_history[-1],
                                converged=converged, wall_time=elapsed, method="fpadmm",
                                residual_history=tuple(state.residual_history), flags=tuple(flags),
                                metadata=metadata)


def ls_solve(problem: SamplingProblem) -> ReconstructionResult:
    """Minimum-norm least squares with truncated pseudo-inverse, Hermitized and trace-normalized"""
    if problem.rows == 0:
        raise InvalidArgumentError("cannot solve an empty problem")
    started = time.perf_counter()
    y = problem.y_vector.astype(complex)
    solution, _, rank, _ = linalg.lstsq(problem.a_matrix, y, cond=LS_RCOND)
    rho_hat, flags = _finish(mat(solution), PostProcess.TRACE_NORMALIZE)
    y_norm = np.linalg.norm(y)
    residual = float(np.linalg.norm(problem.a_matrix @ solution - y) / y_norm) if y_norm > 0 else 0.0
    logger.info("LS baseline: effective rank %d of %d, residual %.3e", rank, problem.d ** 2, residual)
    return ReconstructionResult(rho_hat=rho_hat, iterations=1, final_residual=residual, converged=True,
                                wall_time=time.perf_counter() - started, method="ls",
                                residual_history=(residual,), flags=tuple(flags),
                                metadata={"rcond": f"{LS_RCOND:g}", "rank": str(rank)})


def qst_invert(pauli_values: Mapping) -> DensityMatrix:
    """rho = (1/d) sum_m <M_m> M_m over a complete set of Pauli expectations"""
    values = {(key if isinstance(key, PauliString) else PauliString(key)): float(value)
              for key, value in pauli_values.items()}
    if not values:
        raise InvalidArgumentError("no Pauli values supplied")
    n = next(iter(values)).n
    strings = all_pauli_strings(n)
    missing = [p.labels for p in strings if p not in values]
    if missing:
        raise InvalidArgumentError(f"missing Pauli values for: {', '.join(missing)}")
    d = 2 ** n
    rho = sum(values[p] * realize_pauli(p) for p in strings) / d
    return DensityMatrix.from_entries(rho)


def write_result(path: Union[str, Path], result: ReconstructionResult, header: Sequence[str] = (),
                 include_timing: bool = False):
    """Metadata block followed by the estimate in density-matrix format"""
    lines = list(header)
    lines += [f"method {result.method}", f"iterations {result.iterations}",
              f"converged {str(result.converged).lower()}", f"final_residual {result.final_residual:.17g}"]
    if include_timing:
        lines.append(f"wall_time {result.wall_time:.6f}")
    if result.flags:
        lines.append(f"flags {','.join(result.flags)}")
    lines += [f"config.{key} {value}" for key, value in sorted(result.metadata.items())]
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for line in lines:
            handle.write(f"# {line}\n")
        for line in density_matrix_lines(result.rho_hat):
            handle.write(line + "\n")
