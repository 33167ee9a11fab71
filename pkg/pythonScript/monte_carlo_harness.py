"""
Monte Carlo experiment harness
Fidelity-vs-sampling-rate sweeps for the three reconstruction cases, aggregate
statistics and method comparison, with CSV/JSON output
"""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from cs_nmr_errors import DegenerateInputError, FidelityRangeError, InvalidArgumentError
from nmr_simulator import (DEFAULT_SCHEME, MeasurementPath, NoiseMode, NoiseSpec, ReadoutScheme, SpectrumModel,
                           build_scheme, canonical_group_count, measure_groups)
from quantum_core import (DensityMatrix, PRESET_STATES, fidelity, outer_product, preset_state,
                          random_pure_state)
from sensing import (SamplingPlan, assemble_from_groups, assemble_from_paulis,
                     pauli_values_from_groups, sample_groups, sample_paulis)
from solvers import ReconstructionResult, SolverConfig, fp_admm_solve, ls_solve, qst_invert

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
DEFAULT_TRIALS = 100
DEFAULT_THRESHOLD = 0.95
RANDOM_STATE = "random"
SEED_MASK = (1 << 63) - 1

# experimental reference values from spectrometer data; trend comparison only
REFERENCE_LEAST_RATES = {2: 1.0, 3: 0.75, 4: 0.5}
REFERENCE_SAMPLED_GROUPS = {2: 6, 3: 12, 4: 22}
REFERENCE_ZETA_AT_HALF = {2: 0.33, 3: 0.17, 4: 0.07}
REFERENCE_SUCCESS = {2: 1.00, 3: 0.92, 4: 0.97}
REFERENCE_TABLE = {2: (0.9942, 0.9999), 3: (0.9838, 0.9896), 4: (0.9606, 0.9679)}
REFERENCE_LS_MAX = {2: 0.87, 3: 0.93, 4: 0.93}

RECORD_COLUMNS = ["case", "n", "eta", "trial", "seed", "fidelity", "iterations", "residual", "converged",
                  "flags", "random_state"]
SUMMARY_COLUMNS = ["case", "n", "eta", "f_avg", "zeta", "success_prob", "threshold"]
ERRORBAR_COLUMNS = ["case", "n", "eta", "f_avg", "lower", "upper"]


class ReconstructionCase(Enum):
    A = "A"  # group sampling, FP-ADMM
    B = "B"  # group sampling, least squares
    C = "C"  # Pauli sampling, FP-ADMM

    @property
    def uses_groups(self) -> bool:
        return self is not ReconstructionCase.C

    @property
    def solver(self) -> str:
        return "ls" if self is ReconstructionCase.B else "fpadmm"


def default_state(n: int) -> str:
    name = f"psi{n}"
    return name if name in PRESET_STATES else RANDOM_STATE


def default_eta_grid(case: Union[ReconstructionCase, str], n: int) -> Tuple[float, ...]:
    """Group grids step by 1/v (1/22 for four qubits); Pauli grids step by 0.1"""
    case = ReconstructionCase(case)
    if case.uses_groups:
        steps = 22 if n == 4 else canonical_group_count(n)
        return tuple(k / steps for k in range(1, steps + 1))
    return tuple(round(0.1 * k, 10) for k in range(1, 11))


@dataclass(frozen=True)
class SweepConfig:
    case: ReconstructionCase
    n: int
    state: Optional[str] = None
    eta_values: Optional[Tuple[float, ...]] = None
    trials: int = DEFAULT_TRIALS
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    measurement_path: MeasurementPath = MeasurementPath.IDEAL
    base_seed: int = 0
    scheme_seed: int = 1
    threshold: float = DEFAULT_THRESHOLD
    jobs: int = 1
    solver_config: SolverConfig = field(default_factory=SolverConfig)
    spectral_params: Optional[SpectrumModel] = None

    def __post_init__(self):
        object.__setattr__(self, "case", ReconstructionCase(self.case))
        object.__setattr__(self, "measurement_path", MeasurementPath(self.measurement_path))
        if self.n < 1:
            raise InvalidArgumentError(f"qubit count must be positive, got {self.n}")
        state = self.state or default_state(self.n)
        if state != RANDOM_STATE:
            if preset_state(state).n != self.n:
                raise InvalidArgumentError(f"preset {state} does not have {self.n} qubits")
        object.__setattr__(self, "state", state)
        etas = tuple(float(e) for e in (self.eta_values or default_eta_grid(self.case, self.n)))
        if not etas or any(not 0.0 <= e <= 1.0 for e in etas):
            raise InvalidArgumentError(f"sampling rates must lie in [0, 1]: {etas}")
        if any(b <= a for a, b in zip(etas, etas[1:])):
            raise InvalidArgumentError(f"sampling rates must be strictly increasing: {etas}")
        object.__setattr__(self, "eta_values", etas)
        if self.trials < 1:
            raise InvalidArgumentError(f"trial count must be >= 1, got {self.trials}")
        if not 0.0 <= self.threshold <= 1.0:
            raise InvalidArgumentError(f"success threshold {self.threshold} outside [0, 1]")
        if not self.case.uses_groups and self.noise.active and self.noise.mode is not NoiseMode.VALUE_GAUSSIAN:
            raise InvalidArgumentError(f"case {self.case.value} samples Pauli values directly; "
                                       f"{self.noise.mode.value} noise needs the group acquisition")

    @property
    def random_state(self) -> bool:
        return self.state == RANDOM_STATE

    def echo(self) -> Dict[str, str]:
        echo = {
            "case": self.case.value, "n": str(self.n), "state": self.state,
            "eta_values": ",".join(f"{e:.17g}" for e in self.eta_values),
            "trials": str(self.trials), "noise_mode": self.noise.mode.value,
            "noise_sigma": f"{self.noise.sigma:.17g}", "path": self.measurement_path.value,
            "base_seed": str(self.base_seed), "scheme_seed": str(self.scheme_seed),
            "threshold": f"{self.threshold:.17g}",
        }
        echo.update({f"solver.{k}": v for k, v in self.solver_config.echo().items()})
        return echo


@dataclass(frozen=True)
class TrialRecord:
    case: str
    n: int
    eta: float
    trial: int
    seed: int
    fidelity: float
    iterations: int
    residual: float
    converged: bool
    flags: str = ""
    random_state: bool = False


@dataclass(frozen=True)
class SummaryRow:
    case: str
    n: int
    eta: float
    f_avg: float
    zeta: float
    success_prob: float
    threshold: float = DEFAULT_THRESHOLD


@dataclass
class SweepResult:
    config: SweepConfig
    records: List[TrialRecord]
    summary: List[SummaryRow]


@dataclass
class ComparisonResult:
    n: int
    state: str
    eta_g: float
    g: int
    v: int
    qst_fidelity: float
    proposed_fidelity: float
    qst_rho: DensityMatrix
    proposed_rho: DensityMatrix
    reconstruction: ReconstructionResult
    reference: Optional[Tuple[float, float]] = None


def trial_seed(base_seed: int, case: Union[ReconstructionCase, str], n: int, eta: float, trial_index: int) -> int:
    """Per-trial seed; stable when the eta grid changes"""
    rate = Fraction(eta).limit_denominator(10 ** 6)
    key = f"{base_seed}|{ReconstructionCase(case).value}|{n}|{rate.numerator}/{rate.denominator}|{trial_index}"
    digest = hashlib.blake2b(key.encode("ascii"), digest_size=8).digest()
    return int.from_bytes(digest, "big") & SEED_MASK


@lru_cache(maxsize=16)
def _scheme(n: int, scheme_seed: int) -> ReadoutScheme:
    return build_scheme(n, DEFAULT_SCHEME, seed=scheme_seed)


def _target_state(config: SweepConfig, state_seed: int) -> DensityMatrix:
    if config.random_state:
        return outer_product(random_pure_state(config.n, state_seed))
    return outer_product(preset_state(config.state))


def score_estimate(result: ReconstructionResult, rho: DensityMatrix) -> Tuple[float, List[str]]:
    """Fidelity against the target; zero or degenerate estimates score 0 with a flag"""
    flags = list(result.flags)
    if not np.any(result.rho_hat.entries):
        flags.append("zero_estimate")
        return 0.0, flags
    try:
        return fidelity(result.rho_hat, rho), flags
    except FidelityRangeError as error:
        flags.append("fidelity_out_of_range")
        return min(max(error.value, 0.0), 1.0), flags
    except DegenerateInputError:
        flags.append("degenerate_fidelity")
        return 0.0, flags


def run_trial(config: SweepConfig, eta: float, trial_index: int) -> TrialRecord:
    """One seeded reconstruction of the configured state at a sampling rate"""
    seed = trial_seed(config.base_seed, config.case, config.n, eta, trial_index)
    sampling_seed, noise_seed, state_seed = (int(s) for s in np.random.SeedSequence(seed).generate_state(3))
    rho = _target_state(config, state_seed)
    noise = config.noise.with_seed(noise_seed)

    if config.case.uses_groups:
        scheme = _scheme(config.n, config.scheme_seed)
        record = measure_groups(rho, scheme, config.measurement_path, noise, config.spectral_params)
        plan = SamplingPlan.for_groups(scheme.v, eta, sampling_seed)
        indices = sample_groups(scheme.v, plan.g, sampling_seed)
        problem = assemble_from_groups(scheme, record, indices, plan=plan)
    else:
        plan = SamplingPlan.for_paulis(config.n, eta, sampling_seed)
        paulis = sample_paulis(config.n, plan.m, sampling_seed, include_identity=True)
        problem = assemble_from_paulis(paulis, rho, noise, plan=plan)

    if config.case.solver == "ls":
        result = ls_solve(problem)
    else:
        result = fp_admm_solve(problem, config.solver_config)
    value, flags = score_estimate(result, rho)
    converged = result.converged and not result.degenerate
    return TrialRecord(case=config.case.value, n=config.n, eta=float(eta), trial=trial_index, seed=seed,
                       fidelity=value, iterations=result.iterations, residual=result.final_residual,
                       converged=converged, flags=";".join(flags), random_state=config.random_state)


def zeta(fidelities: Sequence[float]) -> float:
    """Root-mean-square deviation of trial fidelities from their mean"""
    values = np.asarray(fidelities, dtype=float)
    if values.size == 0:
        raise InvalidArgumentError("zeta needs at least one fidelity")
    return float(np.sqrt(np.mean((values - values.mean()) ** 2)))


def success_probability(fidelities: Sequence[float], threshold: float = DEFAULT_THRESHOLD) -> float:
    values = np.asarray(fidelities, dtype=float)
    if values.size == 0:
        raise InvalidArgumentError("success probability needs at least one fidelity")
    if not 0.0 <= threshold <= 1.0:
        raise InvalidArgumentError(f"threshold {threshold} outside [0, 1]")
    return float(np.mean(values >= threshold))


def records_frame(records: Sequence[TrialRecord]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in records], columns=RECORD_COLUMNS)


def summarize(records: Sequence[TrialRecord], threshold: float = DEFAULT_THRESHOLD) -> List[SummaryRow]:
    """Aggregate records per (case, n, eta)"""
    frame = records_frame(records)
    rows = []
    for (case, n, eta), group in frame.groupby(["case", "n", "eta"], sort=True):
        fidelities = group["fidelity"].to_numpy()
        rows.append(SummaryRow(case=str(case), n=int(n), eta=float(eta), f_avg=float(fidelities.mean()),
                               zeta=zeta(fidelities), success_prob=success_probability(fidelities, threshold),
                               threshold=threshold))
    return rows


def run_sweep(config: SweepConfig) -> SweepResult:
    """All trials at every sampling rate; output order is (eta, trial) regardless of jobs"""
    tasks = [(eta, t) for eta in config.eta_values for t in range(config.trials)]
    logger.info("sweep case %s n=%d: %d rates x %d trials", config.case.value, config.n,
                len(config.eta_values), config.trials)
    records = Parallel(n_jobs=config.jobs)(delayed(run_trial)(config, eta, t) for eta, t in tasks)
    records = sorted(records, key=lambda r: (r.eta, r.trial))
    summary = summarize(records, config.threshold)
    for row in summary:
        logger.info("eta=%.4f f_avg=%.4f zeta=%.4f success=%.2f", row.eta, row.f_avg, row.zeta, row.success_prob)
    return SweepResult(config=config, records=records, summary=summary)


def least_sampling_rate(summary: Sequence[SummaryRow], zeta_max: float = 0.1,
                        f_min: float = DEFAULT_THRESHOLD) -> Optional[float]:
    """Smallest rate from which every larger rate keeps f_avg >= f_min and zeta <= zeta_max"""
    least = None
    for row in sorted(summary, key=lambda r: r.eta, reverse=True):
        if row.f_avg >= f_min and row.zeta <= zeta_max:
            least = row.eta
        else:
            break
    return least


def compare_methods(n: int, state: Optional[str] = None, eta_g: Optional[float] = None,
                    noise: Optional[NoiseSpec] = None, seed: int = 0, scheme_seed: int = 1,
                    solver_config: Optional[SolverConfig] = None,
                    path: MeasurementPath = MeasurementPath.IDEAL,
                    spectral_params: Optional[SpectrumModel] = None) -> ComparisonResult:
    """Full-data QST against the compressive pipeline on one simulated acquisition"""
    state = state or default_state(n)
    if eta_g is None:
        eta_g = REFERENCE_LEAST_RATES.get(n, 1.0)
    noise = noise or NoiseSpec()
    sampling_seed, noise_seed, state_seed = (int(s) for s in np.random.SeedSequence(seed).generate_state(3))
    if state == RANDOM_STATE:
        rho = outer_product(random_pure_state(n, state_seed))
    else:
        rho = outer_product(preset_state(state))
        if rho.n != n:
            raise InvalidArgumentError(f"preset {state} does not have {n} qubits")

    scheme = _scheme(n, scheme_seed)
    record = measure_groups(rho, scheme, path, noise.with_seed(noise_seed), spectral_params)
    qst_rho = qst_invert(pauli_values_from_groups(scheme, record))

    plan = SamplingPlan.for_groups(scheme.v, eta_g, sampling_seed)
    indices = sample_groups(scheme.v, plan.g, sampling_seed)
    problem = assemble_from_groups(scheme, record, indices, plan=plan)
    result = fp_admm_solve(problem, solver_config or SolverConfig())
    proposed, _ = score_estimate(result, rho)
    try:
        qst_value = fidelity(qst_rho, rho)
    except FidelityRangeError as error:
        qst_value = min(max(error.value, 0.0), 1.0)
    reference = REFERENCE_TABLE.get(n) if state == default_state(n) and state != RANDOM_STATE else None
    return ComparisonResult(n=n, state=state, eta_g=eta_g, g=plan.g, v=scheme.v, qst_fidelity=qst_value,
                            proposed_fidelity=proposed, qst_rho=qst_rho, proposed_rho=result.rho_hat,
                            reconstruction=result, reference=reference)


# output files

def _write_frame(path: Union[str, Path], frame: pd.DataFrame, header: Sequence[str], float_format: str):
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for line in header:
            handle.write(f"# {line}\n")
        frame.to_csv(handle, index=False, float_format=float_format, lineterminator="\n")


def echo_lines(echo: Dict[str, str]) -> List[str]:
    return [f"{key}={value}" for key, value in echo.items()]


def write_records_csv(path: Union[str, Path], records: Sequence[TrialRecord], header: Sequence[str] = ()):
    _write_frame(path, records_frame(records), header, "%.17g")


def write_summary_csv(path: Union[str, Path], summary: Sequence[SummaryRow], header: Sequence[str] = ()):
    frame = pd.DataFrame([asdict(row) for row in summary], columns=SUMMARY_COLUMNS)
    _write_frame(path, frame, header, "%.6g")


def write_errorbar_csv(path: Union[str, Path], summary: Sequence[SummaryRow], header: Sequence[str] = ()):
    """Plot-ready f_avg +/- zeta"""
    frame = pd.DataFrame([{"case": r.case, "n": r.n, "eta": r.eta, "f_avg": r.f_avg,
                           "lower": r.f_avg - r.zeta, "upper": r.f_avg + r.zeta} for r in summary],
                         columns=ERRORBAR_COLUMNS)
    _write_frame(path, frame, header, "%.6g")


def sweep_document(result: SweepResult) -> Dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config": result.config.echo(),
        "records": [asdict(r) for r in result.records],
        "summary": [asdict(r) for r in result.summary],
        "least_sampling_rate": least_sampling_rate(result.summary),
    }


def write_sweep_json(path: Union[str, Path], result: SweepResult):
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(sweep_document(result), handle, indent=2, sort_keys=True)
        handle.write("\n")


def comparison_document(comparison: ComparisonResult, echo: Optional[Dict[str, str]] = None) -> Dict:
    document = {
        "schema_version": SCHEMA_VERSION,
        "config": echo or {},
        "n": comparison.n,
        "state": comparison.state,
        "eta_g": comparison.eta_g,
        "sampled_groups": comparison.g,
        "total_groups": comparison.v,
        "qst_fidelity": comparison.qst_fidelity,
        "proposed_fidelity": comparison.proposed_fidelity,
        "iterations": comparison.reconstruction.iterations,
        "converged": comparison.reconstruction.converged,
        "qst_rho": _matrix_document(comparison.qst_rho),
        "proposed_rho": _matrix_document(comparison.proposed_rho),
    }
    if comparison.reference is not None:
        document["reference"] = {"qst_fidelity": comparison.reference[0],
                                 "proposed_fidelity": comparison.reference[1],
                                 "least_rate": REFERENCE_LEAST_RATES.get(comparison.n)}
    return document


def _matrix_document(rho: DensityMatrix) -> Dict[str, List[List[float]]]:
    return {"re": rho.entries.real.tolist(), "im": rho.entries.imag.tolist()}


def write_comparison_json(path: Union[str, Path], comparison: ComparisonResult,
                          echo: Optional[Dict[str, str]] = None):
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(comparison_document(comparison, echo), handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_records_csv(path: Union[str, Path]) -> List[TrialRecord]:
    frame = pd.read_csv(path, comment="#", keep_default_na=False)
    missing = [c for c in RECORD_COLUMNS[:9] if c not in frame.columns]
    if missing:
        raise InvalidArgumentError(f"{path}: records file lacks columns {', '.join(missing)}")
    records = []
    for row in frame.to_dict("records"):
        records.append(TrialRecord(
            case=str(row["case"]), n=int(row["n"]), eta=float(row["eta"]), trial=int(row["trial"]),
            seed=int(row["seed"]), fidelity=float(row["fidelity"]), iterations=int(row["iterations"]),
            residual=float(row["residual"]), converged=_as_bool(row["converged"]),
            flags=str(row.get("flags", "") or ""), random_state=_as_bool(row.get("random_state", False))))
    return records


def _as_bool(value) -> bool:
    if isinstance(value, str):
        return value.strip().lower() == "true"
    return bool(value)
