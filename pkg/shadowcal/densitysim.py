"""
Density Matrix Simulator
Exact noisy evolution of 2^n x 2^n density matrices under gate sequences,
computational-basis sampling and per-shot random substreams.
"""
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from shadowcal import config
from shadowcal.errors import CapExceededError, ValidationError
from shadowcal.gategroups import GateSequence, GroupElement
from shadowcal.pauliliouville import ghz_vector

if TYPE_CHECKING:
    from shadowcal.noisechan import NoiseModel

logger = logging.getLogger(__name__)

STATE_NAMES = ("zeros", "ghz", "custom")


def shot_rng(seed: int, protocol_id: int, length_index: int, shot_index: int) -> np.random.Generator:
    """Counter-based substream keyed by (seed, protocol, length index, shot index)"""
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(protocol_id), int(length_index), int(shot_index)))
    return np.random.Generator(np.random.Philox(sequence))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite 2^n x 2^n matrix"""
    n: int
    entries: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("Density matrices need n >= 1")
        if self.n > config.SIMULATION_QUBIT_CAP:
            raise CapExceededError(f"Simulation is capped at n={config.SIMULATION_QUBIT_CAP}, got n={self.n}")
        d = 2 ** self.n
        entries = np.array(self.entries, dtype=complex)
        if entries.shape != (d, d):
            raise ValidationError(f"Density matrix for n={self.n} must be {d}x{d}, got {entries.shape}")
        if not np.allclose(entries, entries.conj().T, atol=config.STATE_TOLERANCE, rtol=0):
            raise ValidationError("Density matrix is not Hermitian")
        if abs(np.trace(entries).real - 1.0) > config.STATE_TOLERANCE:
            raise ValidationError(f"Density matrix trace is {np.trace(entries).real}, expected 1")
        if np.linalg.eigvalsh(entries).min() < -config.PROBABILITY_TOLERANCE:
            raise ValidationError("Density matrix has a negative eigenvalue")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return 2 ** self.n

    def purity(self) -> float:
        return float(np.trace(self.entries @ self.entries).real)

    def probabilities(self) -> np.ndarray:
        return np.diag(self.entries).real.copy()


def _trusted(n: int, entries: np.ndarray) -> DensityMatrix:
    """Wrap simulator output without re-running the eigenvalue check"""
    state = object.__new__(DensityMatrix)
    entries = np.array(entries, dtype=complex)
    entries.setflags(write=False)
    object.__setattr__(state, "n", n)
    object.__setattr__(state, "entries", entries)
    return state


def prepare(name: str, n: int, matrix: Optional[np.ndarray] = None) -> DensityMatrix:
    """zeros -> |0..0><0..0|, ghz -> GHZ projector, custom -> validated user matrix"""
    if n < 1:
        raise ValidationError("States need n >= 1")
    d = 2 ** n
    if name == "zeros":
        entries = np.zeros((d, d), dtype=complex)
        entries[0, 0] = 1.0
        return DensityMatrix(n, entries)
    if name == "ghz":
        psi = ghz_vector(n)
        return DensityMatrix(n, np.outer(psi, psi.conj()))
    if name == "custom":
        if matrix is None:
            raise ValidationError("A custom state needs a matrix")
        return DensityMatrix(n, matrix)
    raise ValidationError(f"Unknown state {name!r}; expected one of {STATE_NAMES}")


def apply_local_operator(matrix: np.ndarray, operator: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """K rho K^dagger for a 2^k x 2^k operator K acting on the listed qubits"""
    k = len(qubits)
    targets = [int(q) for q in qubits]
    op = np.asarray(operator, dtype=complex).reshape((2,) * (2 * k))
    tensor = np.asarray(matrix, dtype=complex).reshape((2,) * (2 * n))

    tensor = np.tensordot(op, tensor, axes=(list(range(k, 2 * k)), targets))
    tensor = np.moveaxis(tensor, list(range(k)), targets)
    columns = [n + q for q in targets]
    tensor = np.tensordot(op.conj(), tensor, axes=(list(range(k, 2 * k)), columns))
    tensor = np.moveaxis(tensor, list(range(k)), columns)
    return tensor.reshape(2 ** n, 2 ** n)


def apply_local_kraus(matrix: np.ndarray, kraus: Sequence[np.ndarray], qubits: Sequence[int], n: int) -> np.ndarray:
    result = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for operator in kraus:
        result += apply_local_operator(matrix, operator, qubits, n)
    return result


def apply_unitary(matrix: np.ndarray, element: GroupElement) -> np.ndarray:
    """Ideal U rho U^dagger, using the monomial or tensor-product structure when available"""
    n = element.n
    if element.kind == "dihedral":
        perm = element.permutation()
        phases = 1j ** element.phase_table()
        scaled = np.asarray(matrix) * np.outer(phases, phases.conj())
        result = np.empty_like(scaled)
        result[np.ix_(perm, perm)] = scaled
        return result
    if element.kind == "local":
        result = np.asarray(matrix, dtype=complex)
        for qubit, factor in enumerate(element.factors()):
            result = apply_local_operator(result, factor, (qubit,), n)
        return result
    unitary = element.unitary()
    return unitary @ np.asarray(matrix) @ unitary.conj().T


def _symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.conj().T)


def apply_noisy_gate(matrix: np.ndarray, element: GroupElement, noise: Optional["NoiseModel"]) -> np.ndarray:
    """One physical gate: ideal unitary then the attached noise"""
    n = element.n
    if noise is None or noise.is_noiseless:
        return apply_unitary(matrix, element)
    if noise.gate_independent:
        return noise.channel.apply(apply_unitary(matrix, element))
    result = np.asarray(matrix, dtype=complex)
    for gate in noise.compile(element):
        result = apply_local_operator(result, gate.matrix, gate.qubits, n)
        if gate.kraus:
            result = apply_local_kraus(result, gate.kraus, gate.qubits, n)
    return result


def run_sequence(state: DensityMatrix, seq: GateSequence, noise: Optional["NoiseModel"] = None) -> DensityMatrix:
    """Apply g_1 ... g_m in order, each followed by its noise"""
    if seq.n != state.n:
        raise ValidationError(f"Sequence on {seq.n} qubits applied to a {state.n}-qubit state")
    if noise is not None and noise.n != state.n:
        raise ValidationError(f"Noise model on {noise.n} qubits applied to a {state.n}-qubit state")
    matrix = state.entries
    for element in seq.elements:
        matrix = _symmetrize(apply_noisy_gate(matrix, element, noise))
    return _trusted(state.n, matrix)


def outcome_probabilities(state: DensityMatrix) -> np.ndarray:
    """Born probabilities, clipped at zero and renormalized within tolerance"""
    probabilities = np.clip(np.diag(state.entries).real, 0.0, None)
    total = probabilities.sum()
    if abs(total - 1.0) >= config.PROBABILITY_TOLERANCE:
        raise ValidationError(f"Outcome probabilities sum to {total}, not 1")
    return probabilities / total


def sample_index(state: DensityMatrix, rng: np.random.Generator) -> int:
    probabilities = outcome_probabilities(state)
    return int(rng.choice(len(probabilities), p=probabilities))


def sample_bitstring(state: DensityMatrix, rng: np.random.Generator) -> str:
    """Computational-basis outcome, qubit 0 first"""
    return format(sample_index(state, rng), f"0{state.n}b")
