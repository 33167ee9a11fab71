"""
Compressive-sensing problem assembly
Sampling of observable groups or Pauli operators and the (A, y) pair they define
"""

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from cs_nmr_errors import InvalidArgumentError, RankDeficiencyError
from nmr_simulator import MeasurementRecord, NoiseMode, NoiseSpec, ReadoutScheme, RANK_RTOL
from quantum_core import (DensityMatrix, HERMITIAN_TOL, PauliString, all_pauli_strings, as_matrix,
                          qubit_count, realize_pauli, vec)

logger = logging.getLogger(__name__)

GroupValues = Union[MeasurementRecord, Dict[int, Sequence[float]]]


class SamplingMode(Enum):
    GROUPS = "groups"
    PAULI = "pauli"


def eta_to_count(eta: float, total: int) -> int:
    """Sampled count for a sampling rate, at least one"""
    if not 0.0 <= eta <= 1.0:
        raise InvalidArgumentError(f"sampling rate {eta} outside [0, 1]")
    return min(total, max(1, int(math.floor(eta * total + 0.5 + 1e-9))))


@dataclass(frozen=True)
class SamplingPlan:
    mode: SamplingMode
    v: int = 0
    g: int = 0
    d_sq: int = 0
    m: int = 0
    seed: int = 0
    include_trace_row: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", SamplingMode(self.mode))
        if not 0 <= self.g <= self.v:
            raise InvalidArgumentError(f"sampled group count {self.g} outside [0, {self.v}]")
        if not 0 <= self.m <= self.d_sq:
            raise InvalidArgumentError(f"sampled operator count {self.m} outside [0, {self.d_sq}]")

    @property
    def eta_g(self) -> float:
        return self.g / self.v if self.v else 0.0

    @property
    def eta_m(self) -> float:
        return self.m / self.d_sq if self.d_sq else 0.0

    @property
    def eta(self) -> float:
        return self.eta_g if self.mode is SamplingMode.GROUPS else self.eta_m

    @classmethod
    def for_groups(cls, v: int, eta: float, seed: int, include_trace_row: bool = True) -> "SamplingPlan":
        return cls(SamplingMode.GROUPS, v=v, g=eta_to_count(eta, v), seed=seed,
                   include_trace_row=include_trace_row)

    @classmethod
    def for_paulis(cls, n: int, eta: float, seed: int, include_trace_row: bool = True) -> "SamplingPlan":
        d_sq = 4 ** n
        return cls(SamplingMode.PAULI, d_sq=d_sq, m=eta_to_count(eta, d_sq), seed=seed,
                   include_trace_row=include_trace_row)


@dataclass(frozen=True)
class RowMeta:
    kind: str
    group_id: Optional[int] = None
    observable_index: Optional[int] = None
    label: Optional[str] = None
    norm: float = 1.0

    def __str__(self) -> str:
        if self.kind == "group":
            return f"group {self.group_id} {self.observable_index} norm {self.norm:.17g}"
        if self.kind == "pauli":
            return f"pauli {self.label} norm {self.norm:.17g}"
        return f"trace norm {self.norm:.17g}"

    @classmethod
    def parse(cls, text: str) -> "RowMeta":
        tokens = text.split()
        norm = float(tokens[tokens.index("norm") + 1]) if "norm" in tokens else 1.0
        if tokens[0] == "group":
            return cls("group", group_id=int(tokens[1]), observable_index=int(tokens[2]), norm=norm)
        if tokens[0] == "pauli":
            return cls("pauli", label=tokens[1], norm=norm)
        if tokens[0] == "trace":
            return cls("trace", norm=norm)
        raise InvalidArgumentError(f"unknown row kind {tokens[0]!r}")


@dataclass(frozen=True, eq=False)
class SamplingProblem:
    a_matrix: np.ndarray
    y_vector: np.ndarray
    row_meta: Tuple[RowMeta, ...]
    d: int
    plan: Optional[SamplingPlan] = None

    def __post_init__(self):
        a_matrix = np.array(self.a_matrix, dtype=complex)
        y_vector = np.array(self.y_vector, dtype=float)
        if a_matrix.ndim != 2 or a_matrix.shape[1] != self.d ** 2:
            raise InvalidArgumentError(f"sampling matrix must have {self.d ** 2} columns, got {a_matrix.shape}")
        if y_vector.shape != (a_matrix.shape[0],):
            raise InvalidArgumentError("sampling vector length does not match the row count")
        if len(self.row_meta) != a_matrix.shape[0]:
            raise InvalidArgumentError("row metadata does not match the row count")
        a_matrix.setflags(write=False)
        y_vector.setflags(write=False)
        object.__setattr__(self, "a_matrix", a_matrix)
        object.__setattr__(self, "y_vector", y_vector)
        object.__setattr__(self, "row_meta", tuple(self.row_meta))

    @property
    def rows(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def n(self) -> int:
        return qubit_count(self.d)

    def consistency(self, rho: Union[DensityMatrix, np.ndarray]) -> float:
        """||A vec(rho) - y|| for a candidate state"""
        return float(np.linalg.norm(self.a_matrix @ vec(as_matrix(rho)) - self.y_vector))

    def with_duplicated_rows(self, indices: Sequence[int]) -> "SamplingProblem":
        indices = list(indices)
        return SamplingProblem(
            a_matrix=np.vstack([self.a_matrix, self.a_matrix[indices]]),
            y_vector=np.concatenate([self.y_vector, self.y_vector[indices]]),
            row_meta=self.row_meta + tuple(self.row_meta[i] for i in indices),
            d=self.d, plan=self.plan)


def _trace_row(d: int) -> Tuple[np.ndarray, float, RowMeta]:
    row = vec(np.eye(d, dtype=complex)).conj() / np.sqrt(d)
    return row, 1.0 / np.sqrt(d), RowMeta("trace", norm=float(np.linalg.norm(row)))


# group sampling

def sample_groups(v: int, g: int, seed: int) -> List[int]:
    """Seeded uniform g-subset of group ids 1..v, ascending"""
    if v < 1 or not 0 < g <= v:
        raise InvalidArgumentError(f"cannot sample {g} of {v} groups")
    rng = np.random.default_rng(seed)
    return sorted(int(i) + 1 for i in rng.choice(v, size=g, replace=False))


def _values_for(values: GroupValues, group_id: int) -> np.ndarray:
    if isinstance(values, MeasurementRecord):
        values = values.values
    if group_id not in values:
        raise InvalidArgumentError(f"no measured values for sampled group {group_id}")
    return np.asarray(values[group_id], dtype=float)


def assemble_from_groups(scheme: ReadoutScheme, values: GroupValues, indices: Sequence[int],
                         include_trace_row: bool = True,
                         plan: Optional[SamplingPlan] = None) -> SamplingProblem:
    d = scheme.d
    root_d = np.sqrt(d)
    rows, targets, meta = [], [], []
    for group_id in sorted(indices):
        group = scheme.group(group_id)
        measured = _values_for(values, group_id)
        if measured.shape != (d,):
            raise InvalidArgumentError(f"group {group_id} needs {d} values, got {measured.shape[0]}")
        for j, (observable, value) in enumerate(zip(group.observables, measured), start=1):
            row = vec(observable).conj() / root_d
            rows.append(row)
            targets.append(value / root_d)
            meta.append(RowMeta("group", group_id=group_id, observable_index=j,
                                norm=float(np.linalg.norm(row))))
    if include_trace_row:
        row, target, row_meta = _trace_row(d)
        rows.append(row)
        targets.append(target)
        meta.append(row_meta)
    if not rows:
        raise InvalidArgumentError("no rows to assemble")
    return SamplingProblem(a_matrix=np.array(rows), y_vector=np.array(targets), row_meta=tuple(meta),
                           d=d, plan=plan)


# Pauli sampling

def sample_paulis(n: int, m: int, seed: int, include_identity: bool = True) -> List[PauliString]:
    """Seeded uniform m-subset of Pauli strings, in lexicographic order"""
    pool = all_pauli_strings(n)
    if not include_identity:
        pool = [p for p in pool if not p.is_identity]
    if not 0 < m <= len(pool):
        raise InvalidArgumentError(f"cannot sample {m} of {len(pool)} Pauli strings")
    rng = np.random.default_rng(seed)
    chosen = sorted(int(i) for i in rng.choice(len(pool), size=m, replace=False))
    return [pool[i] for i in chosen]


def assemble_from_paulis(paulis: Sequence[Union[PauliString, str]],
                         rho_or_values: Union[DensityMatrix, np.ndarray, Sequence[float]],
                         noise: Optional[NoiseSpec] = None, include_trace_row: bool = True,
                         plan: Optional[SamplingPlan] = None) -> SamplingProblem:
    """
    One orthonormal row per Pauli string. The trace row is appended only when the
    identity string is not already sampled.
    """
    paulis = [p if isinstance(p, PauliString) else PauliString(p) for p in paulis]
    if not paulis:
        raise InvalidArgumentError("no Pauli strings to assemble")
    n = paulis[0].n
    if any(p.n != n for p in paulis):
        raise InvalidArgumentError("Pauli strings of mixed length")
    d = 2 ** n
    root_d = np.sqrt(d)
    matrices = [realize_pauli(p) for p in paulis]

    supplied = np.asarray(as_matrix(rho_or_values) if isinstance(rho_or_values, DensityMatrix) else rho_or_values)
    if supplied.ndim == 2:
        if supplied.shape != (d, d):
            raise InvalidArgumentError(f"state dimension {supplied.shape[0]} does not match {n}-qubit Pauli strings")
        values = np.array([np.einsum("ij,ji->", p, supplied).real for p in matrices])
    else:
        values = np.asarray(supplied, dtype=float)
        if values.shape != (len(paulis),):
            raise InvalidArgumentError(f"expected {len(paulis)} Pauli values, got {values.shape}")

    noise = noise or NoiseSpec()
    if noise.active and noise.mode is not NoiseMode.VALUE_GAUSSIAN:
        raise InvalidArgumentError(f"{noise.mode.value} noise needs a spectrum; Pauli sampling takes value_gaussian")
    if noise.active:
        values = values + np.random.default_rng(noise.seed).normal(0.0, noise.sigma, size=values.shape)

    rows = [vec(p).conj() / root_d for p in matrices]
    targets = list(values / root_d)
    meta = [RowMeta("pauli", label=p.labels, norm=1.0) for p in paulis]
    if include_trace_row and not any(p.is_identity for p in paulis):
        row, target, row_meta = _trace_row(d)
        rows.append(row)
        targets.append(target)
        meta.append(row_meta)
    return SamplingProblem(a_matrix=np.array(rows), y_vector=np.array(targets), row_meta=tuple(meta),
                           d=d, plan=plan)


# Pauli decomposition

@lru_cache(maxsize=8)
def pauli_basis(n: int) -> np.ndarray:
    basis = np.stack([realize_pauli(p) for p in all_pauli_strings(n)])
    basis.setflags(write=False)
    return basis


def pauli_decompose(o: np.ndarray) -> np.ndarray:
    """Real coefficients c_P = Tr(P o) / d over all Pauli strings, lexicographic order"""
    o = np.asarray(o, dtype=complex)
    if np.max(np.abs(o - o.conj().T)) > HERMITIAN_TOL:
        raise InvalidArgumentError("cannot decompose a non-Hermitian operator")
    d = o.shape[0]
    coefficients = np.einsum("pij,ji->p", pauli_basis(qubit_count(d)), o) / d
    return coefficients.real


class PauliExpectations(Mapping):
    """Recovered Pauli expectation values, keyed by PauliString"""

    def __init__(self, values: Dict[PauliString, float], residual: float = 0.0):
        self._values = dict(values)
        self.residual = residual

    def __getitem__(self, key: Union[PauliString, str]) -> float:
        if not isinstance(key, PauliString):
            key = PauliString(key)
        return self._values[key]

    def __iter__(self) -> Iterator[PauliString]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)


def pauli_values_from_groups(scheme: ReadoutScheme, values: GroupValues) -> PauliExpectations:
    """Least-squares Pauli expectations from every measured group, with <I..I> = 1 imposed"""
    strings = all_pauli_strings(scheme.n)
    coefficients, rhs = [], []
    for group in scheme.groups:
        measured = _values_for(values, group.group_id)
        for observable, value in zip(group.observables, measured):
            c = pauli_decompose(observable)
            coefficients.append(c[1:])
            rhs.append(value - c[0])
    system = np.array(coefficients)
    unknowns = len(strings) - 1
    singular_values = linalg.svdvals(system)
    rank = int(np.sum(singular_values > RANK_RTOL * singular_values[0])) if singular_values[0] > 0 else 0
    if rank < unknowns:
        raise RankDeficiencyError(unknowns - rank)
    solution, _, _, _ = linalg.lstsq(system, np.array(rhs), cond=1e-10)
    residual = float(np.linalg.norm(system @ solution - np.array(rhs)))
    logger.debug("Pauli values from %d groups: residual %.3e", scheme.v, residual)
    recovered = {strings[0]: 1.0}
    recovered.update({p: float(x) for p, x in zip(strings[1:], solution)})
    return PauliExpectations(recovered, residual)


# problem dumps

def write_problem(path: Union[str, Path], problem: SamplingProblem, header: Sequence[str] = ()):
    plan = problem.plan
    lines = [
        f"mode {plan.mode.value if plan else 'unknown'}",
        f"n {problem.n}",
        f"d {problem.d}",
        f"M {problem.rows}",
        f"eta {plan.eta if plan else 0.0:.17g}",
        f"seed {plan.seed if plan else 0}",
        f"include_trace_row {str(any(m.kind == 'trace' for m in problem.row_meta)).lower()}",
    ]
    for row, target, meta in zip(problem.a_matrix, problem.y_vector, problem.row_meta):
        entries = " ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row)
        lines.append(f"{meta} | {entries} | {target:.17g}")
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for line in header:
            handle.write(f"# {line}\n")
        for line in lines:
            handle.write(line + "\n")


def read_problem(path: Union[str, Path]) -> SamplingProblem:
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line.strip() for line in handle if line.strip() and not line.startswith("#")]
    header = dict(line.split(None, 1) for line in lines[:7])
    try:
        d, rows_expected = int(header["d"]), int(header["M"])
    except KeyError as missing:
        raise InvalidArgumentError(f"{path}: problem header lacks {missing}") from None
    rows, targets, meta = [], [], []
    for line in lines[7:]:
        meta_text, entries, target = (part.strip() for part in line.split("|"))
        numbers = np.array([float(token) for token in entries.split()])
        rows.append(numbers[0::2] + 1j * numbers[1::2])
        targets.append(float(target))
        meta.append(RowMeta.parse(meta_text))
    if len(rows) != rows_expected:
        raise InvalidArgumentError(f"{path}: header announces {rows_expected} rows, found {len(rows)}")
    plan = None
    if header.get("mode") in ("groups", "pauli"):
        plan = SamplingPlan(SamplingMode(header["mode"]), seed=int(header["seed"]),
                            include_trace_row=header.get("include_trace_row") == "true")
    return SamplingProblem(a_matrix=np.array(rows), y_vector=np.array(targets), row_meta=tuple(meta),
                           d=d, plan=plan)
