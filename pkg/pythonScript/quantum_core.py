"""
Quantum state and matrix algebra for CS-NMR reconstruction
State vectors, density matrices, Pauli strings, vectorization and fidelity
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache, reduce
from itertools import product
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
from scipy import linalg

from cs_nmr_errors import DegenerateInputError, FidelityRangeError, InvalidArgumentError

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-10
NORM_TOL = 1e-12
TRACE_IMAG_TOL = 1e-12
PSD_TOL = 1e-8
FIDELITY_CLAMP_TOL = 1e-9

PAULI_LABELS = "IXYZ"

PAULI_MATRICES = {
    "I": np.array([[1, 0], [0, 1]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

PRESET_STATES = ("psi2", "psi3", "psi4")

MatrixLike = Union["DensityMatrix", np.ndarray]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


def qubit_count(d: int) -> int:
    """Number of qubits for dimension d = 2**n"""
    n = int(d).bit_length() - 1
    if d < 2 or (1 << n) != d:
        raise InvalidArgumentError(f"dimension {d} is not a power of two >= 2")
    return n


@dataclass(frozen=True, eq=False)
class StateVector:
    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amplitudes = _frozen(np.ravel(self.amplitudes))
        if self.n < 1:
            raise InvalidArgumentError(f"qubit count must be positive, got {self.n}")
        if amplitudes.shape[0] != 2 ** self.n:
            raise InvalidArgumentError(
                f"state of {self.n} qubits needs {2 ** self.n} amplitudes, got {amplitudes.shape[0]}")
        norm = np.linalg.norm(amplitudes)
        if abs(norm - 1.0) > NORM_TOL:
            raise InvalidArgumentError(f"state vector norm {norm!r} is not 1")
        object.__setattr__(self, "amplitudes", amplitudes)

    @property
    def d(self) -> int:
        return 2 ** self.n


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    n: int
    entries: np.ndarray
    rank_hint: Optional[int] = None
    normalized: bool = True
    physical: bool = False

    def __post_init__(self):
        entries = _frozen(self.entries)
        d = 2 ** self.n
        if entries.shape != (d, d):
            raise InvalidArgumentError(f"density matrix of {self.n} qubits must be {d}x{d}, got {entries.shape}")
        asymmetry = np.max(np.abs(entries - entries.conj().T))
        if asymmetry > HERMITIAN_TOL:
            raise InvalidArgumentError(f"density matrix is not Hermitian (deviation {asymmetry:.3e})")
        trace = np.trace(entries)
        if abs(trace.imag) > TRACE_IMAG_TOL:
            raise InvalidArgumentError(f"density matrix trace has imaginary part {trace.imag:.3e}")
        if self.normalized and abs(trace.real - 1.0) > HERMITIAN_TOL:
            raise InvalidArgumentError(f"density matrix flagged normalized has trace {trace.real!r}")
        if self.physical:
            smallest = linalg.eigvalsh(entries)[0]
            if smallest < -PSD_TOL:
                raise InvalidArgumentError(f"density matrix flagged physical has eigenvalue {smallest:.3e}")
        if self.rank_hint is not None and not 0 <= self.rank_hint <= d:
            raise InvalidArgumentError(f"rank hint {self.rank_hint} outside [0, {d}]")
        object.__setattr__(self, "entries", entries)

    @property
    def d(self) -> int:
        return 2 ** self.n

    @classmethod
    def from_entries(cls, entries: np.ndarray, rank_hint: Optional[int] = None) -> "DensityMatrix":
        """Wrap a Hermitian matrix, inferring the normalized and physical flags"""
        entries = np.asarray(entries, dtype=complex)
        n = qubit_count(entries.shape[0])
        normalized = abs(np.trace(entries).real - 1.0) <= HERMITIAN_TOL
        physical = normalized and linalg.eigvalsh(hermitian_part(entries))[0] >= -PSD_TOL
        return cls(n=n, entries=entries, rank_hint=rank_hint, normalized=normalized, physical=physical)


@dataclass(frozen=True)
class PauliString:
    labels: str

    def __post_init__(self):
        labels = "".join(self.labels).upper()
        if not labels or any(label not in PAULI_LABELS for label in labels):
            raise InvalidArgumentError(f"invalid Pauli string {self.labels!r}")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def is_identity(self) -> bool:
        return set(self.labels) == {"I"}

    def __str__(self) -> str:
        return self.labels


def all_pauli_strings(n: int) -> List[PauliString]:
    """All 4**n Pauli strings in lexicographic IXYZ order"""
    if n < 1:
        raise InvalidArgumentError(f"qubit count must be positive, got {n}")
    return [PauliString("".join(labels)) for labels in product(PAULI_LABELS, repeat=n)]


def hermitian_part(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    return (m + m.conj().T) / 2


def as_matrix(m: MatrixLike) -> np.ndarray:
    if isinstance(m, DensityMatrix):
        return m.entries
    return np.asarray(m, dtype=complex)


def ket(bitstring: Union[str, Sequence[int]]) -> StateVector:
    """Computational basis state, leftmost bit most significant"""
    bits = [int(b) for b in bitstring]
    if not bits or any(b not in (0, 1) for b in bits):
        raise InvalidArgumentError(f"invalid bitstring {bitstring!r}")
    index = int("".join(str(b) for b in bits), 2)
    amplitudes = np.zeros(2 ** len(bits), dtype=complex)
    amplitudes[index] = 1.0
    return StateVector(n=len(bits), amplitudes=amplitudes)


def preset_state(name: str) -> StateVector:
    """The three target states psi2, psi3, psi4"""
    if name == "psi2":
        return ket("00")
    if name == "psi3":
        amplitudes = 0.8 * ket("000").amplitudes - 0.6 * ket("001").amplitudes
        return StateVector(n=3, amplitudes=amplitudes)
    if name == "psi4":
        amplitudes = (ket("0101").amplitudes + ket("1010").amplitudes) / np.sqrt(2)
        return StateVector(n=4, amplitudes=amplitudes)
    raise InvalidArgumentError(f"unknown preset state {name!r}; expected one of {', '.join(PRESET_STATES)}")


def outer_product(psi: StateVector) -> DensityMatrix:
    amplitudes = psi.amplitudes
    return DensityMatrix(n=psi.n, entries=np.outer(amplitudes, amplitudes.conj()),
                         rank_hint=1, normalized=True, physical=True)


def random_pure_state(n: int, seed: Union[int, np.random.SeedSequence]) -> StateVector:
    """Haar-random pure state from a normalized complex Gaussian vector"""
    if n < 1:
        raise InvalidArgumentError(f"qubit count must be positive, got {n}")
    rng = np.random.default_rng(seed)
    d = 2 ** n
    amplitudes = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return StateVector(n=n, amplitudes=amplitudes / np.linalg.norm(amplitudes))


@lru_cache(maxsize=512)
def _pauli_matrix(labels: str) -> np.ndarray:
    return _frozen(reduce(np.kron, [PAULI_MATRICES[label] for label in labels]))


def realize_pauli(p: Union[PauliString, str]) -> np.ndarray:
    """Kronecker product of the single-qubit factors in label order"""
    if not isinstance(p, PauliString):
        p = PauliString(p)
    return _pauli_matrix(p.labels)


def vec(m: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization"""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidArgumentError(f"vec expects a square matrix, got shape {m.shape}")
    return m.reshape(-1, order="F")


def mat(v: np.ndarray) -> np.ndarray:
    """Inverse of vec"""
    v = np.asarray(v)
    d = math.isqrt(v.shape[0]) if v.ndim == 1 else -1
    if d < 0 or d * d != v.shape[0]:
        raise InvalidArgumentError(f"mat expects a vector of square length, got shape {v.shape}")
    return v.reshape((d, d), order="F")


def expectation(o: np.ndarray, rho: MatrixLike) -> float:
    """Re Tr(o rho) for a Hermitian observable"""
    o = np.asarray(o, dtype=complex)
    rho = as_matrix(rho)
    if o.shape != rho.shape:
        raise InvalidArgumentError(f"observable shape {o.shape} does not match state shape {rho.shape}")
    if np.max(np.abs(o - o.conj().T)) > HERMITIAN_TOL:
        raise InvalidArgumentError("observable is not Hermitian")
    value = np.einsum("ij,ji->", o, rho)
    if abs(value.imag) > HERMITIAN_TOL:
        raise InvalidArgumentError(f"expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


def nuclear_norm(m: np.ndarray) -> float:
    return float(np.sum(linalg.svdvals(np.asarray(m, dtype=complex))))


def fidelity(rho_hat: MatrixLike, rho: MatrixLike) -> float:
    """Normalized overlap Tr(rho_hat rho^dagger) / sqrt(Tr(rho_hat^2) Tr(rho^2))"""
    a = as_matrix(rho_hat)
    b = as_matrix(rho)
    if a.shape != b.shape:
        raise InvalidArgumentError(f"cannot compare matrices of shapes {a.shape} and {b.shape}")
    purity = np.trace(a @ a).real * np.trace(b @ b).real
    if purity <= 0.0:
        raise DegenerateInputError("fidelity undefined for a zero matrix")
    value = float(np.vdot(b, a).real / np.sqrt(purity))
    if value < -FIDELITY_CLAMP_TOL or value > 1.0 + FIDELITY_CLAMP_TOL:
        raise FidelityRangeError(value)
    return min(max(value, 0.0), 1.0)


# plain-text state files

def _format_pairs(values: Iterable[complex]) -> str:
    return " ".join(f"{z.real:.17g} {z.imag:.17g}" for z in values)


def _data_lines(path: Union[str, Path]) -> List[str]:
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line.strip() for line in handle]
    return [line for line in lines if line and not line.startswith("#")]


def _parse_pairs(line: str) -> np.ndarray:
    numbers = [float(token) for token in line.split()]
    if len(numbers) % 2:
        raise InvalidArgumentError(f"odd number of values in line {line!r}")
    return np.array(numbers[0::2]) + 1j * np.array(numbers[1::2])


def _write_lines(path: Union[str, Path], lines: List[str], header: Sequence[str] = ()):
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for line in header:
            handle.write(f"# {line}\n")
        for line in lines:
            handle.write(line + "\n")


def write_state(path: Union[str, Path], psi: StateVector, header: Sequence[str] = ()):
    lines = [str(psi.n)] + [_format_pairs([a]) for a in psi.amplitudes]
    _write_lines(path, lines, header)


def read_state(path: Union[str, Path]) -> StateVector:
    lines = _data_lines(path)
    if not lines:
        raise InvalidArgumentError(f"{path}: empty state file")
    n = int(lines[0])
    amplitudes = np.concatenate([_parse_pairs(line) for line in lines[1:]]) if len(lines) > 1 else np.array([])
    return StateVector(n=n, amplitudes=amplitudes)


def write_density_matrix(path: Union[str, Path], rho: MatrixLike, header: Sequence[str] = ()):
    entries = as_matrix(rho)
    n = qubit_count(entries.shape[0])
    lines = [str(n)] + [_format_pairs(row) for row in entries]
    _write_lines(path, lines, header)


def density_matrix_lines(rho: MatrixLike) -> List[str]:
    entries = as_matrix(rho)
    return [str(qubit_count(entries.shape[0]))] + [_format_pairs(row) for row in entries]


def parse_density_matrix(lines: List[str]) -> np.ndarray:
    n = int(lines[0])
    d = 2 ** n
    rows = [_parse_pairs(line) for line in lines[1:1 + d]]
    if len(rows) != d or any(row.shape[0] != d for row in rows):
        raise InvalidArgumentError(f"expected {d} rows of {d} entries")
    return np.array(rows)


def read_density_matrix(path: Union[str, Path]) -> DensityMatrix:
    """Read a density matrix; a file holding a state vector is promoted to its projector"""
    lines = _data_lines(path)
    if not lines:
        raise InvalidArgumentError(f"{path}: empty density matrix file")
    if len(lines) > 1 and len(lines[1].split()) == 2:
        return outer_product(read_state(path))
    return DensityMatrix.from_entries(parse_density_matrix(lines))
