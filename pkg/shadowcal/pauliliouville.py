"""
Pauli-Liouville Core
Superoperators as Pauli transfer matrices, the computational-basis measurement
channel and the diagonal projectors every frame operator is built from.

Conventions: Pauli codes I=0, X=1, Y=2, Z=3; a string index is the base-4
number of its codes with qubit 0 as the most significant digit (the same
ordering as np.kron). Entry (P, Q) of a SuperOp is Tr[P Λ(Q)]/d for
unnormalized Pauli strings P, Q.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from shadowcal import config
from shadowcal.errors import CapExceededError, ValidationError

logger = logging.getLogger(__name__)

PAULI_LABELS = "IXYZ"
PAULI_MATRICES = np.array([
    [[1, 0], [0, 1]],
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)
PAULI_MATRICES.setflags(write=False)

PROJECTOR_LABELS = ("triv", "adj", "Z", "ort", "B")

PatternLike = Union[str, Sequence[int]]


@lru_cache(maxsize=None)
def pauli_digits(n: int) -> np.ndarray:
    """Per-qubit codes of every Pauli string index, shape (4^n, n)"""
    indices = np.arange(4 ** n)
    digits = np.empty((4 ** n, n), dtype=np.int8)
    for qubit in range(n):
        digits[:, qubit] = (indices // 4 ** (n - 1 - qubit)) % 4
    digits.setflags(write=False)
    return digits


def pauli_index(codes: Sequence[int]) -> int:
    """Base-4 index of a sequence of per-qubit codes"""
    value = 0
    for code in codes:
        value = 4 * value + int(code)
    return value


@dataclass(frozen=True)
class PauliString:
    """An n-qubit Pauli string without phase, e.g. PauliString("XIZ")"""
    codes: str

    def __post_init__(self):
        normalized = str(self.codes).upper().replace("_", "I")
        if not normalized or any(c not in PAULI_LABELS for c in normalized):
            raise ValidationError(f"Invalid Pauli string: {self.codes!r}")
        object.__setattr__(self, "codes", normalized)

    @property
    def n(self) -> int:
        return len(self.codes)

    @property
    def index(self) -> int:
        return pauli_index(PAULI_LABELS.index(c) for c in self.codes)

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(q for q, c in enumerate(self.codes) if c != "I")

    @property
    def weight(self) -> int:
        return len(self.support)

    @classmethod
    def from_index(cls, index: int, n: int) -> "PauliString":
        if not 0 <= index < 4 ** n:
            raise ValidationError(f"Pauli index {index} out of range for n={n}")
        return cls("".join(PAULI_LABELS[d] for d in pauli_digits(n)[index]))

    def matrix(self) -> np.ndarray:
        """Dense 2^n x 2^n matrix of the string"""
        result = np.array([[1.0 + 0j]])
        for c in self.codes:
            result = np.kron(result, PAULI_MATRICES[PAULI_LABELS.index(c)])
        return result


def pauli_coefficients(matrix: np.ndarray, n: int) -> np.ndarray:
    """Return Tr[P M] for every Pauli string P, as a complex vector of length 4^n"""
    matrix = np.asarray(matrix, dtype=complex)
    d = 2 ** n
    if matrix.shape != (d, d):
        raise ValidationError(f"Expected a {d}x{d} matrix, got {matrix.shape}")

    # Contract each qubit's (row, column) pair against the four Paulis
    operands: List[Any] = [matrix.reshape((2,) * (2 * n)), list(range(2 * n))]
    for qubit in range(n):
        operands += [PAULI_MATRICES, [2 * n + qubit, n + qubit, qubit]]
    operands.append([2 * n + qubit for qubit in range(n)])
    return np.einsum(*operands, optimize="greedy").reshape(4 ** n)


def pauli_vector(rho: np.ndarray, n: int) -> np.ndarray:
    """Real Pauli components r_P = Tr[P rho] of a Hermitian operator"""
    return pauli_coefficients(rho, n).real


def matrix_from_pauli_vector(vector: np.ndarray, n: int) -> np.ndarray:
    """Inverse of pauli_coefficients: sum_P v_P P / d"""
    vector = np.asarray(vector)
    if vector.shape != (4 ** n,):
        raise ValidationError(f"Expected a Pauli vector of length {4 ** n}")
    operands: List[Any] = [vector.reshape((4,) * n).astype(complex), [2 * n + q for q in range(n)]]
    for qubit in range(n):
        operands += [PAULI_MATRICES, [2 * n + qubit, qubit, n + qubit]]
    operands.append(list(range(2 * n)))
    d = 2 ** n
    return np.einsum(*operands, optimize="greedy").reshape(d, d) / d


def ghz_vector(n: int) -> np.ndarray:
    """(|0...0> + |1...1>)/sqrt(2)"""
    vector = np.zeros(2 ** n, dtype=complex)
    vector[0] = vector[-1] = 1 / np.sqrt(2)
    return vector


@dataclass(frozen=True, eq=False)
class SuperOp:
    """Real 4^n x 4^n Pauli transfer matrix of a linear map"""
    n: int
    entries: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("SuperOp needs n >= 1")
        if self.n > config.DENSE_SUPEROP_CAP:
            raise CapExceededError(
                f"Dense superoperators are capped at n={config.DENSE_SUPEROP_CAP}, got n={self.n}")
        entries = np.array(self.entries, dtype=float)
        size = 4 ** self.n
        if entries.shape != (size, size):
            raise ValidationError(f"SuperOp for n={self.n} must be {size}x{size}, got {entries.shape}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def identity(cls, n: int) -> "SuperOp":
        return cls(n, np.eye(4 ** n))

    @property
    def dim(self) -> int:
        return 4 ** self.n

    def compose(self, other: "SuperOp") -> "SuperOp":
        """self after other"""
        if other.n != self.n:
            raise ValidationError(f"Cannot compose n={self.n} with n={other.n}")
        return SuperOp(self.n, self.entries @ other.entries)

    def __matmul__(self, other: "SuperOp") -> "SuperOp":
        return self.compose(other)

    def diagonal(self) -> np.ndarray:
        return np.diag(self.entries).copy()

    def ptm_diagonal(self) -> np.ndarray:
        return self.diagonal()

    def power(self, exponent: int) -> "SuperOp":
        if exponent < 0:
            raise ValidationError("Negative superoperator powers are not supported")
        return SuperOp(self.n, np.linalg.matrix_power(self.entries, exponent))

    def is_trace_preserving(self, tol: float = config.CPTP_TOLERANCE) -> bool:
        target = np.zeros(self.dim)
        target[0] = 1.0
        return bool(np.allclose(self.entries[0], target, atol=tol, rtol=0))

    def is_unital(self, tol: float = config.CPTP_TOLERANCE) -> bool:
        target = np.zeros(self.dim)
        target[0] = 1.0
        return bool(np.allclose(self.entries[:, 0], target, atol=tol, rtol=0))

    def apply(self, vector: np.ndarray) -> np.ndarray:
        """Act on a Pauli vector r_P = Tr[P rho]"""
        return self.entries @ vector

    def allclose(self, other: "SuperOp", atol: float = config.COMPOSITION_TOLERANCE) -> bool:
        return self.n == other.n and bool(np.allclose(self.entries, other.entries, atol=atol, rtol=0))


@dataclass(frozen=True, eq=False)
class DiagonalProjector:
    """A projector that is diagonal in the Pauli basis, stored as a bit mask"""
    n: int
    mask: np.ndarray
    label: str

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool)
        if mask.shape != (4 ** self.n,):
            raise ValidationError(f"Mask for n={self.n} must have length {4 ** self.n}")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def trace(self) -> int:
        return int(self.mask.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiagonalProjector):
            return NotImplemented
        return self.n == other.n and bool(np.array_equal(self.mask, other.mask))

    def __hash__(self):
        return hash((self.n, self.mask.tobytes()))

    def __add__(self, other: "DiagonalProjector") -> "DiagonalProjector":
        self._check_compatible(other)
        if np.any(self.mask & other.mask):
            raise ValidationError(f"Projectors {self.label} and {other.label} overlap; sum is not a projector")
        return DiagonalProjector(self.n, self.mask | other.mask, f"{self.label}+{other.label}")

    def __mul__(self, other: "DiagonalProjector") -> "DiagonalProjector":
        """Product of two diagonal projectors (mask intersection)"""
        self._check_compatible(other)
        return DiagonalProjector(self.n, self.mask & other.mask, f"{self.label}*{other.label}")

    def complement(self, label: Optional[str] = None) -> "DiagonalProjector":
        return DiagonalProjector(self.n, ~self.mask, label or f"1-{self.label}")

    def is_zero(self) -> bool:
        return not bool(self.mask.any())

    def to_superop(self) -> SuperOp:
        return SuperOp(self.n, np.diag(self.mask.astype(float)))

    def _check_compatible(self, other: "DiagonalProjector"):
        if self.n != other.n:
            raise ValidationError(f"Projector size mismatch: n={self.n} vs n={other.n}")


def parse_pattern(pattern: PatternLike, n: int) -> Tuple[int, ...]:
    """Normalize a support pattern given as '101', 'w=101' or a bit sequence"""
    if isinstance(pattern, str):
        text = pattern[2:] if pattern.startswith("w=") else pattern
        if not text or any(ch not in "01" for ch in text):
            raise ValidationError(f"Unknown projector label or pattern: {pattern!r}")
        bits = tuple(int(ch) for ch in text)
    else:
        bits = tuple(int(b) for b in pattern)
        if any(b not in (0, 1) for b in bits):
            raise ValidationError(f"Pattern entries must be 0 or 1: {pattern!r}")
    if len(bits) != n:
        raise ValidationError(f"Pattern {pattern!r} has length {len(bits)}, expected {n}")
    return bits


def _identity_or_z_mask(n: int) -> np.ndarray:
    digits = pauli_digits(n)
    return np.all((digits == 0) | (digits == 3), axis=1)


def build_projector(label: PatternLike, n: int) -> DiagonalProjector:
    """Build one of the sector projectors (triv, adj, Z, ort, B) or a pattern projector"""
    if n < 1:
        raise ValidationError("Projectors need n >= 1")
    size = 4 ** n
    trivial = np.zeros(size, dtype=bool)
    trivial[0] = True

    if label == "triv":
        return DiagonalProjector(n, trivial, "triv")
    if label == "adj":
        return DiagonalProjector(n, ~trivial, "adj")
    if label == "B":
        return DiagonalProjector(n, _identity_or_z_mask(n), "B")
    if label == "Z":
        return DiagonalProjector(n, _identity_or_z_mask(n) & ~trivial, "Z")
    if label == "ort":
        return DiagonalProjector(n, ~_identity_or_z_mask(n), "ort")

    bits = parse_pattern(label, n)
    active = pauli_digits(n) != 0
    mask = np.all(active == np.array(bits, dtype=bool), axis=1)
    return DiagonalProjector(n, mask, "w=" + "".join(map(str, bits)))


def z_string_index(bits: Sequence[int]) -> int:
    """Index of the string that is Z where bits are set and I elsewhere"""
    return pauli_index(3 if b else 0 for b in bits)


def ptm_from_kraus(kraus: Iterable[np.ndarray], n: int) -> SuperOp:
    """Pauli transfer matrix of the channel rho -> sum_k K rho K^dagger"""
    d = 2 ** n
    operators = [np.asarray(k, dtype=complex) for k in kraus]
    if not operators:
        raise ValidationError("Empty Kraus set")
    for op in operators:
        if op.shape != (d, d):
            raise ValidationError(f"Kraus operator shape {op.shape} does not match n={n}")
    completeness = sum(op.conj().T @ op for op in operators)
    if not np.allclose(completeness, np.eye(d), atol=config.CPTP_TOLERANCE, rtol=0):
        raise ValidationError("Kraus operators are not trace-preserving (sum K^dag K != 1)")
    if n > config.DENSE_SUPEROP_CAP:
        raise CapExceededError(f"Dense superoperators are capped at n={config.DENSE_SUPEROP_CAP}")

    entries = np.empty((4 ** n, 4 ** n))
    for column in range(4 ** n):
        q_matrix = PauliString.from_index(column, n).matrix()
        image = sum(op @ q_matrix @ op.conj().T for op in operators)
        entries[:, column] = pauli_coefficients(image, n).real / d
    return SuperOp(n, entries)


def ptm_from_unitary(unitary: np.ndarray, n: int) -> SuperOp:
    return ptm_from_kraus([unitary], n)


def _ptm_diagonal(channel) -> Tuple[int, np.ndarray]:
    if isinstance(channel, SuperOp):
        return channel.n, channel.diagonal()
    if hasattr(channel, "ptm_diagonal"):
        diagonal = np.asarray(channel.ptm_diagonal(), dtype=float)
        return int(channel.n), diagonal
    raise ValidationError(f"Cannot read Pauli-diagonal entries from {type(channel).__name__}")


def lambda_Z_of(channel) -> float:
    """Average diagonal action on the non-trivial {I,Z} strings"""
    n, diagonal = _ptm_diagonal(channel)
    d = 2 ** n
    mask = build_projector("Z", n).mask
    return float(diagonal[mask].sum() / (d - 1))


def lambda_adj_of(channel) -> float:
    """Standard Clifford RB decay: (Tr[channel] - 1)/(d^2 - 1)"""
    n, diagonal = _ptm_diagonal(channel)
    d = 2 ** n
    return float((diagonal.sum() - 1.0) / (d * d - 1))


def apply_diagonal(proj: DiagonalProjector, channel: SuperOp) -> SuperOp:
    """proj . channel as a row-masked superoperator"""
    if proj.n != channel.n:
        raise ValidationError(f"Projector n={proj.n} does not match channel n={channel.n}")
    return SuperOp(channel.n, channel.entries * proj.mask[:, None])


@dataclass(frozen=True, eq=False)
class Observable:
    """Hermitian observable with dense and Pauli-basis access"""
    name: str
    n: int
    matrix: np.ndarray
    terms: Optional[Tuple[Tuple[str, float], ...]] = None
    _coefficients: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        d = 2 ** self.n
        matrix = np.array(self.matrix, dtype=complex)
        if matrix.shape != (d, d):
            raise ValidationError(f"Observable {self.name!r} must be {d}x{d}, got {matrix.shape}")
        if not np.allclose(matrix, matrix.conj().T, atol=config.STATE_TOLERANCE):
            raise ValidationError(f"Observable {self.name!r} is not Hermitian")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return 2 ** self.n

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def expectation(self, rho: np.ndarray) -> float:
        return float(np.trace(self.matrix @ np.asarray(rho)).real)

    def pauli_coefficients(self) -> np.ndarray:
        """Real vector o_P = Tr[O P]"""
        if self._coefficients is None:
            coefficients = pauli_coefficients(self.matrix, self.n).real
            coefficients[np.abs(coefficients) < 1e-12] = 0.0
            coefficients.setflags(write=False)
            object.__setattr__(self, "_coefficients", coefficients)
        return self._coefficients

    def support(self) -> Tuple[int, ...]:
        """Qubits acted on non-trivially by at least one Pauli term"""
        active = pauli_digits(self.n)[self.pauli_coefficients() != 0] != 0
        return tuple(int(q) for q in np.flatnonzero(active.any(axis=0)))

    @classmethod
    def ghz_fidelity(cls, n: int, name: str = "ghz_fidelity") -> "Observable":
        psi = ghz_vector(n)
        return cls(name, n, np.outer(psi, psi.conj()))

    @classmethod
    def pauli_sum(cls, terms: Iterable[Tuple[str, float]], n: int, name: str = "pauli_sum") -> "Observable":
        parsed = []
        matrix = np.zeros((2 ** n, 2 ** n), dtype=complex)
        for codes, coefficient in terms:
            pauli = PauliString(codes)
            if pauli.n != n:
                raise ValidationError(f"Term {codes!r} does not act on {n} qubits")
            parsed.append((pauli.codes, float(coefficient)))
            matrix += float(coefficient) * pauli.matrix()
        if not parsed:
            raise ValidationError(f"Observable {name!r} has no terms")
        return cls(name, n, matrix, tuple(parsed))

    @classmethod
    def dense(cls, matrix: np.ndarray, name: str = "dense") -> "Observable":
        matrix = np.asarray(matrix)
        n = int(round(np.log2(matrix.shape[0]))) if matrix.ndim == 2 and matrix.shape[0] > 0 else 0
        if n < 1 or 2 ** n != matrix.shape[0]:
            raise ValidationError(f"Dense observable {name!r} has non power-of-two dimension {matrix.shape}")
        return cls(name, n, matrix)
