"""
Synthetic NMR measurement path
FID signals, Lorentzian spectra, peak-area readout and grouped observable schemes
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property, reduce
from itertools import combinations, product
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, linalg

from cs_nmr_errors import InvalidArgumentError
from quantum_core import (DensityMatrix, HERMITIAN_TOL, as_matrix, expectation,
                          parse_density_matrix, density_matrix_lines, vec)

logger = logging.getLogger(__name__)

DEFAULT_SCHEME = "single-quantum-default"
CUSTOM_SCHEME = "custom"

# quadrature intervals per integration window
DEFAULT_WINDOW_POINTS = 4096
# peak spacing of simulated spectra, in units of delta_omega
DEFAULT_SPACING_FACTOR = 8.0
WELL_SEPARATED_FACTOR = 4.0
RANK_RTOL = 1e-9

ROTATIONS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[1, -1j], [-1j, 1]], dtype=complex) / np.sqrt(2),
    "Y": np.array([[1, -1], [1, 1]], dtype=complex) / np.sqrt(2),
}

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PROJECTORS = {
    "0": np.array([[1, 0], [0, 0]], dtype=complex),
    "1": np.array([[0, 0], [0, 1]], dtype=complex),
}


class NoiseMode(Enum):
    NONE = "none"
    VALUE_GAUSSIAN = "value_gaussian"
    SPECTRAL_GAUSSIAN = "spectral_gaussian"


class MeasurementPath(Enum):
    IDEAL = "ideal"
    SPECTRAL = "spectral"


@dataclass(frozen=True)
class NoiseSpec:
    mode: NoiseMode = NoiseMode.NONE
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", NoiseMode(self.mode))
        if not self.sigma >= 0:
            raise InvalidArgumentError(f"noise sigma must be >= 0, got {self.sigma}")

    @property
    def active(self) -> bool:
        return self.mode is not NoiseMode.NONE and self.sigma > 0

    def with_seed(self, seed: int) -> "NoiseSpec":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class PeakSpec:
    omega: float
    amplitude: float
    observable_index: int

    def __post_init__(self):
        if not (math.isfinite(self.omega) and math.isfinite(self.amplitude)):
            raise InvalidArgumentError(f"peak parameters must be finite: {self}")


@dataclass(frozen=True)
class SpectrumModel:
    peaks: Tuple[PeakSpec, ...] = ()
    t2: float = 1.0
    m0: float = 1.0
    p0: float = 1.0
    delta_omega: float = 64.0
    min_separation: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "peaks", tuple(self.peaks))
        for name in ("t2", "m0", "p0", "delta_omega"):
            value = getattr(self, name)
            if not value > 0:
                raise InvalidArgumentError(f"{name} must be > 0, got {value}")
        gap = self._smallest_gap()
        if gap is not None:
            if self.min_separation is not None and gap < self.min_separation:
                raise InvalidArgumentError(
                    f"peaks {gap:g} rad/s apart violate min_separation {self.min_separation:g}")
            object.__setattr__(self, "min_separation", gap)

    def _smallest_gap(self) -> Optional[float]:
        gaps = [abs(p.omega - q.omega)
                for i, p in enumerate(self.peaks) for q in self.peaks[i + 1:]
                if p.observable_index != q.observable_index]
        return min(gaps) if gaps else None

    @property
    def well_separated(self) -> bool:
        if self.min_separation is None:
            return True
        return self.min_separation >= WELL_SEPARATED_FACTOR * self.delta_omega

    @property
    def linewidth(self) -> float:
        return 1.0 / self.t2


@dataclass(frozen=True)
class ReadoutDescriptor:
    observed_spin: int
    rotations: str

    def __str__(self) -> str:
        return f"spin {self.observed_spin} rotations {self.rotations}"


@dataclass(frozen=True, eq=False)
class ObservableGroup:
    group_id: int
    observables: Tuple[np.ndarray, ...]
    provenance: Optional[ReadoutDescriptor] = None

    def __post_init__(self):
        observables = []
        for matrix in self.observables:
            matrix = np.array(matrix, dtype=complex)
            matrix.setflags(write=False)
            observables.append(matrix)
        if not observables:
            raise InvalidArgumentError(f"group {self.group_id} has no observables")
        d = observables[0].shape[0]
        if len(observables) != d:
            raise InvalidArgumentError(f"group {self.group_id} needs {d} observables, got {len(observables)}")
        for j, matrix in enumerate(observables, start=1):
            if matrix.shape != (d, d):
                raise InvalidArgumentError(f"group {self.group_id} observable {j} has shape {matrix.shape}")
            if np.max(np.abs(matrix - matrix.conj().T)) > HERMITIAN_TOL:
                raise InvalidArgumentError(f"group {self.group_id} observable {j} is not Hermitian")
            if abs(np.trace(matrix)) > HERMITIAN_TOL:
                raise InvalidArgumentError(f"group {self.group_id} observable {j} is not traceless")
        object.__setattr__(self, "observables", tuple(observables))

    @property
    def d(self) -> int:
        return self.observables[0].shape[0]

    def content_key(self) -> bytes:
        return np.round(np.stack(self.observables), 12).tobytes()


@dataclass(frozen=True, eq=False)
class ReadoutScheme:
    n: int
    groups: Tuple[ObservableGroup, ...]
    scheme_name: str = DEFAULT_SCHEME
    seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        if not self.groups:
            raise InvalidArgumentError("a readout scheme needs at least one group")
        for group in self.groups:
            if group.d != self.d:
                raise InvalidArgumentError(f"group {group.group_id} has dimension {group.d}, expected {self.d}")
        ids = [group.group_id for group in self.groups]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("duplicate group ids in readout scheme")

    @property
    def d(self) -> int:
        return 2 ** self.n

    @property
    def v(self) -> int:
        return len(self.groups)

    @property
    def total_observables(self) -> int:
        return self.v * self.d

    def group(self, group_id: int) -> ObservableGroup:
        for group in self.groups:
            if group.group_id == group_id:
                return group
        raise InvalidArgumentError(f"no group with id {group_id}")

    @cached_property
    def is_complete(self) -> bool:
        return completeness_rank(self) == self.d ** 2


@dataclass
class MeasurementRecord:
    """Per-group observable values produced by one simulated acquisition"""
    values: Dict[int, np.ndarray]
    path: MeasurementPath = MeasurementPath.IDEAL
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    warnings: List[str] = field(default_factory=list)

    def group_values(self, group_id: int) -> np.ndarray:
        if group_id not in self.values:
            raise InvalidArgumentError(f"no measured values for group {group_id}")
        return self.values[group_id]


# time and frequency domain

def fid_signal(model: SpectrumModel, times: Sequence[float]) -> np.ndarray:
    """s(t) = sum_i M0 K_i exp(i Omega_i t) exp(-t / T2)"""
    times = np.asarray(times, dtype=float)
    if times.size and times.min() < 0:
        raise InvalidArgumentError("FID sample times must be non-negative")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise InvalidArgumentError("FID sample times must be strictly increasing")
    signal = np.zeros(times.shape, dtype=complex)
    decay = np.exp(-times / model.t2)
    for peak in model.peaks:
        signal += model.m0 * peak.amplitude * np.exp(1j * peak.omega * times) * decay
    return signal


def spectrum(model: SpectrumModel, omegas: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Absorption a(omega) and dispersion b(omega) of the Lorentzian lines"""
    omegas = np.asarray(omegas, dtype=float)
    rate = model.linewidth
    a = np.zeros(omegas.shape)
    b = np.zeros(omegas.shape)
    for peak in model.peaks:
        offset = omegas - peak.omega
        denominator = offset ** 2 + rate ** 2
        a += model.m0 * peak.amplitude * rate / denominator
        b += model.m0 * peak.amplitude * offset / denominator
    return a, b


def fourier_spectrum(model: SpectrumModel, omegas: Sequence[float],
                     times: Optional[Sequence[float]] = None) -> np.ndarray:
    """
    Numerical transform S(omega) = int_0^inf s(t) exp(-i omega t) dt of the FID.
    The real part is a(omega); the imaginary part is -b(omega).
    """
    omegas = np.asarray(omegas, dtype=float)
    if times is None:
        spread = max([abs(p.omega - w) for p in model.peaks for w in (omegas.min(), omegas.max())] + [1.0])
        step = min(model.t2 / 200.0, 0.05 / spread)
        times = np.arange(0.0, 40.0 * model.t2, step)
    times = np.asarray(times, dtype=float)
    signal = fid_signal(model, times)
    kernel = np.exp(-1j * np.outer(omegas, times))
    return integrate.trapezoid(kernel * signal[np.newaxis, :], times, axis=1)


def peak_area_factor(model: SpectrumModel) -> float:
    """Area of a unit-amplitude absorption line over the window, per M0"""
    return 2.0 * math.atan(model.delta_omega * model.t2)


def _window_grid(model: SpectrumModel, peak: PeakSpec, resolution: Optional[float]) -> np.ndarray:
    if resolution is None:
        resolution = 2.0 * model.delta_omega / DEFAULT_WINDOW_POINTS
    if not resolution > 0:
        raise InvalidArgumentError(f"quadrature resolution must be > 0, got {resolution}")
    if resolution >= model.delta_omega:
        raise InvalidArgumentError(
            f"quadrature resolution {resolution:g} must be finer than delta_omega {model.delta_omega:g}")
    intervals = int(math.ceil(2.0 * model.delta_omega / resolution - 1e-9))
    return np.linspace(peak.omega - model.delta_omega, peak.omega + model.delta_omega, intervals + 1)


def _integrate_window(model: SpectrumModel, peak: PeakSpec, resolution: Optional[float],
                      rng: Optional[np.random.Generator] = None, sigma: float = 0.0) -> float:
    omegas = _window_grid(model, peak, resolution)
    a, _ = spectrum(model, omegas)
    if rng is not None and sigma > 0:
        a = a + rng.normal(0.0, sigma, size=a.shape)
    return float(integrate.trapezoid(a, omegas)) / model.p0


def integrate_peak(model: SpectrumModel, peak: PeakSpec, resolution: Optional[float] = None) -> float:
    """Observable value (1/P0) * integral of a(omega) over [Omega - dw, Omega + dw]"""
    if peak not in model.peaks:
        raise InvalidArgumentError(f"peak {peak} is not part of the spectrum model")
    return _integrate_window(model, peak, resolution)


def calibrate_p0(model: SpectrumModel, peak: PeakSpec, reference_value: float = 1.0,
                 resolution: Optional[float] = None) -> float:
    """P0 from the integrated area of a reference peak with known expectation value"""
    if reference_value == 0:
        raise InvalidArgumentError("reference value must be nonzero")
    if peak not in model.peaks:
        raise InvalidArgumentError(f"peak {peak} is not part of the spectrum model")
    area = _integrate_window(replace(model, p0=1.0), peak, resolution)
    return area / reference_value


def encode_values(values: Sequence[float], template: SpectrumModel) -> SpectrumModel:
    """Spectrum whose peak areas integrate to the given observable values"""
    spacing = template.min_separation or DEFAULT_SPACING_FACTOR * template.delta_omega
    scale = template.p0 / (template.m0 * peak_area_factor(template))
    centre = (len(values) - 1) / 2.0
    peaks = tuple(PeakSpec(omega=(j - centre) * spacing, amplitude=scale * value, observable_index=j + 1)
                  for j, value in enumerate(values))
    return replace(template, peaks=peaks, min_separation=None)


# readout schemes

def canonical_group_count(n: int) -> int:
    return (3 ** n - 1) // 2 + n


def _observed_spin(mask: Tuple[int, ...], letters: Tuple[str, ...]) -> int:
    # never depends on the letter at the returned spin, so X/Y partners share it
    size = len(mask)
    if size <= 2:
        return mask[sum(mask) % size]
    pivot = sum(mask) % size
    step = 1 if letters[pivot] == "X" else 2
    return mask[(pivot + step) % size]


def _canonical_descriptors(n: int) -> List[ReadoutDescriptor]:
    """
    One group per transverse pattern plus one Y-rotated group per spin.

    A pattern is a set of spins carrying X or Y; its group reads the observed spin directly and
    turns the other pattern spins so their X or Y lands on the longitudinal axis. The observed spin
    is spread over the pattern so no single group carries most of the coherences.
    """
    descriptors = []
    for size in range(1, n + 1):
        for mask in combinations(range(n), size):
            for letters in product("XY", repeat=size):
                s = _observed_spin(mask, letters)
                if letters[mask.index(s)] != "X":
                    continue
                rotations = ["I"] * n
                for spin, letter in zip(mask, letters):
                    if spin != s:
                        rotations[spin] = "Y" if letter == "X" else "X"
                descriptors.append(ReadoutDescriptor(s, "".join(rotations)))
    for s in range(n):
        descriptors.append(ReadoutDescriptor(s, "I" * s + "Y" + "I" * (n - 1 - s)))
    return descriptors


def _all_descriptors(n: int) -> List[ReadoutDescriptor]:
    return [ReadoutDescriptor(s, "".join(rotations))
            for s in range(n) for rotations in product("IXY", repeat=n)]


def group_from_descriptor(n: int, descriptor: ReadoutDescriptor, group_id: int) -> ObservableGroup:
    """d observables R^dagger (sigma_a on the observed spin x projectors elsewhere) R"""
    s = descriptor.observed_spin
    if not 0 <= s < n or len(descriptor.rotations) != n or set(descriptor.rotations) - set(ROTATIONS):
        raise InvalidArgumentError(f"invalid readout descriptor {descriptor} for {n} qubits")
    rotation = reduce(np.kron, [ROTATIONS[label] for label in descriptor.rotations])
    observables = []
    for sigma in (SIGMA_X, SIGMA_Y):
        for pattern in product("01", repeat=n - 1):
            factors = [PROJECTORS[bit] for bit in pattern]
            factors.insert(s, sigma)
            operator = reduce(np.kron, factors)
            observables.append(rotation.conj().T @ operator @ rotation)
    return ObservableGroup(group_id=group_id, observables=tuple(observables), provenance=descriptor)


def build_scheme(n: int, scheme_name: str = DEFAULT_SCHEME, v: Optional[int] = None, seed: int = 1,
                 groups: Optional[Sequence[ObservableGroup]] = None) -> ReadoutScheme:
    """
    Build a grouped readout scheme.

    The default scheme lists the canonical complete set of (observed spin, rotation)
    readouts in seeded order; v beyond the canonical count draws further distinct
    readouts from the remaining combinations.
    """
    if n < 1:
        raise InvalidArgumentError(f"qubit count must be positive, got {n}")
    if scheme_name == CUSTOM_SCHEME:
        if not groups:
            raise InvalidArgumentError("a custom scheme needs explicit observable groups")
        if v is not None and v != len(groups):
            raise InvalidArgumentError(f"custom scheme has {len(groups)} groups, v={v} requested")
        return ReadoutScheme(n=n, groups=tuple(groups), scheme_name=CUSTOM_SCHEME, seed=seed)
    if scheme_name != DEFAULT_SCHEME:
        raise InvalidArgumentError(f"unknown scheme {scheme_name!r}")

    canonical = _canonical_descriptors(n)
    if v is None:
        v = len(canonical)
    available = n * 3 ** n
    if v < 1 or v > available:
        raise InvalidArgumentError(f"group count v={v} outside [1, {available}] for {n} qubits")

    rng = np.random.default_rng(seed)
    ordered = [canonical[i] for i in rng.permutation(len(canonical))]
    if v > len(ordered):
        canonical_set = set(canonical)
        extras = [d for d in _all_descriptors(n) if d not in canonical_set]
        ordered += [extras[i] for i in rng.permutation(len(extras))]

    selected: List[ObservableGroup] = []
    seen = set()
    for descriptor in ordered:
        group = group_from_descriptor(n, descriptor, len(selected) + 1)
        key = group.content_key()
        if key in seen:
            continue
        seen.add(key)
        selected.append(group)
        if len(selected) == v:
            break
    if len(selected) < v:
        raise InvalidArgumentError(f"only {len(selected)} distinct groups exist for {n} qubits, v={v} requested")

    logger.debug("built %s scheme: n=%d v=%d seed=%d", scheme_name, n, v, seed)
    return ReadoutScheme(n=n, groups=tuple(selected), scheme_name=scheme_name, seed=seed)


def completeness_rank(scheme: ReadoutScheme) -> int:
    rows = [vec(o) for group in scheme.groups for o in group.observables]
    rows.append(vec(np.eye(scheme.d, dtype=complex)))
    singular_values = linalg.svdvals(np.array(rows))
    if singular_values.size == 0 or singular_values[0] == 0:
        return 0
    return int(np.sum(singular_values > RANK_RTOL * singular_values[0]))


# acquisition

def measure_groups(rho: Union[DensityMatrix, np.ndarray], scheme: ReadoutScheme,
                   path: Union[MeasurementPath, str] = MeasurementPath.IDEAL,
                   noise: Optional[NoiseSpec] = None,
                   spectral_params: Optional[SpectrumModel] = None,
                   resolution: Optional[float] = None) -> MeasurementRecord:
    """Simulate one acquisition of every group in the scheme"""
    path = MeasurementPath(path)
    noise = noise or NoiseSpec()
    matrix = as_matrix(rho)
    if matrix.shape != (scheme.d, scheme.d):
        raise InvalidArgumentError(f"state dimension {matrix.shape[0]} does not match scheme dimension {scheme.d}")

    rng = np.random.default_rng(noise.seed) if noise.active else None
    template = spectral_params or SpectrumModel()
    values: Dict[int, np.ndarray] = {}
    warnings: List[str] = []

    for group in scheme.groups:
        ideal = np.array([expectation(o, matrix) for o in group.observables])
        if path is MeasurementPath.SPECTRAL:
            model = encode_values(ideal, template)
            if not model.well_separated and not warnings:
                message = (f"peaks {model.min_separation:g} rad/s apart are not well separated "
                           f"for delta_omega {model.delta_omega:g}; accuracy is degraded")
                logger.warning(message)
                warnings.append(message)
            spectral_sigma = noise.sigma if noise.mode is NoiseMode.SPECTRAL_GAUSSIAN else 0.0
            observed = np.array([_integrate_window(model, peak, resolution, rng, spectral_sigma)
                                 for peak in model.peaks])
        else:
            observed = ideal
        if rng is not None and noise.mode is NoiseMode.VALUE_GAUSSIAN:
            observed = observed + rng.normal(0.0, noise.sigma, size=observed.shape)
        values[group.group_id] = observed

    return MeasurementRecord(values=values, path=path, noise=noise, warnings=warnings)


# file formats

def _write(path: Union[str, Path], lines: List[str], header: Sequence[str]):
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for line in header:
            handle.write(f"# {line}\n")
        for line in lines:
            handle.write(line + "\n")


def _read_data_lines(path: Union[str, Path]) -> List[str]:
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line.strip() for line in handle]
    return [line for line in lines if line and not line.startswith("#")]


def write_scheme(path: Union[str, Path], scheme: ReadoutScheme, header: Sequence[str] = ()):
    lines = [f"n {scheme.n}", f"v {scheme.v}", f"scheme_name {scheme.scheme_name}", f"seed {scheme.seed}"]
    for group in scheme.groups:
        if scheme.scheme_name == CUSTOM_SCHEME or group.provenance is None:
            lines.append(f"group {group.group_id}")
            for j, observable in enumerate(group.observables, start=1):
                lines.append(f"observable {j}")
                lines.extend(density_matrix_lines(observable)[1:])
        else:
            lines.append(f"group {group.group_id} {group.provenance}")
    _write(path, lines, header)


def read_scheme(path: Union[str, Path]) -> ReadoutScheme:
    lines = _read_data_lines(path)
    fields = dict(line.split(None, 1) for line in lines[:4])
    try:
        n, v, seed = int(fields["n"]), int(fields["v"]), int(fields["seed"])
        scheme_name = fields["scheme_name"]
    except KeyError as missing:
        raise InvalidArgumentError(f"{path}: scheme header lacks {missing}") from None
    d = 2 ** n
    groups: List[ObservableGroup] = []
    i = 4
    while i < len(lines):
        tokens = lines[i].split()
        if tokens[0] != "group":
            raise InvalidArgumentError(f"{path}: expected a group line, got {lines[i]!r}")
        group_id = int(tokens[1])
        if len(tokens) == 6:
            descriptor = ReadoutDescriptor(int(tokens[3]), tokens[5])
            groups.append(group_from_descriptor(n, descriptor, group_id))
            i += 1
            continue
        observables = []
        i += 1
        for _ in range(d):
            block = [str(n)] + lines[i + 1:i + 1 + d]
            observables.append(parse_density_matrix(block))
            i += 1 + d
        groups.append(ObservableGroup(group_id=group_id, observables=tuple(observables)))
    if len(groups) != v:
        raise InvalidArgumentError(f"{path}: header announces {v} groups, found {len(groups)}")
    return ReadoutScheme(n=n, groups=tuple(groups), scheme_name=scheme_name, seed=seed)


def write_measurements(path: Union[str, Path], record: MeasurementRecord, header: Sequence[str] = ()):
    lines = [f"path {record.path.value}"]
    for group_id in sorted(record.values):
        lines.append(f"group {group_id}")
        lines.extend(f"{j} {value:.17g}" for j, value in enumerate(record.values[group_id], start=1))
    header = list(header) + [f"warning: {w}" for w in record.warnings]
    _write(path, lines, header)


def read_measurements(path: Union[str, Path]) -> MeasurementRecord:
    values: Dict[int, List[float]] = {}
    measurement_path = MeasurementPath.IDEAL
    current: Optional[int] = None
    for line in _read_data_lines(path):
        tokens = line.split()
        if tokens[0] == "path":
            measurement_path = MeasurementPath(tokens[1])
        elif tokens[0] == "group":
            current = int(tokens[1])
            values[current] = []
        elif current is None:
            raise InvalidArgumentError(f"{path}: value line before any group line")
        else:
            values[current].append(float(tokens[1]))
    return MeasurementRecord(values={k: np.array(v) for k, v in values.items()}, path=measurement_path)
