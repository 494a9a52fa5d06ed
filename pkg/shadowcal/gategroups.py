"""
Gate Groups
Clifford, CNOT-dihedral and local-Clifford group elements: exact uniform
samplers, composition, inversion and realization as unitaries, superoperators
and gate lists. Elements are identified modulo global phase throughout.
"""
import logging
from dataclasses import InitVar, dataclass, field
from functools import lru_cache
from typing import Any, ClassVar, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import stim

from shadowcal import config
from shadowcal.errors import CapExceededError, ValidationError
from shadowcal.pauliliouville import SuperOp, pauli_digits, pauli_index, ptm_from_unitary

logger = logging.getLogger(__name__)

TWO_QUBIT_GATES = frozenset({"CX", "CNOT", "CY", "CZ", "SWAP", "ISWAP", "ISWAP_DAG", "XCX", "XCY",
                             "XCZ", "YCX", "YCY", "YCZ", "ZCX", "ZCY", "ZCZ"})
STIM_LETTERS = "_XYZ"
_PHASE_GATES = {1: "S", 2: "Z", 3: "S_DAG"}


class GateInstruction(NamedTuple):
    """One compiled gate: a stim gate name, or 'C1:<k>' for the k-th single-qubit Clifford"""
    name: str
    qubits: Tuple[int, ...]


def _check_group_size(n: int):
    if n < 1:
        raise ValidationError("Group elements need n >= 1")
    if n > config.SIMULATION_QUBIT_CAP:
        raise CapExceededError(f"Group operations are capped at n={config.SIMULATION_QUBIT_CAP}, got n={n}")


# ---------------------------------------------------------------------------
# GF(2) linear algebra
# ---------------------------------------------------------------------------

def gf2_rank(matrix: np.ndarray) -> int:
    """Rank over GF(2) by Gaussian elimination"""
    work = np.array(matrix, dtype=np.uint8) % 2
    rows, cols = work.shape
    rank = 0
    for col in range(cols):
        pivot = next((r for r in range(rank, rows) if work[r, col]), None)
        if pivot is None:
            continue
        work[[rank, pivot]] = work[[pivot, rank]]
        for r in range(rows):
            if r != rank and work[r, col]:
                work[r] ^= work[rank]
        rank += 1
        if rank == rows:
            break
    return rank


def gf2_inverse(matrix: np.ndarray) -> np.ndarray:
    """Inverse over GF(2) by Gauss-Jordan elimination on [A | I]"""
    work = np.array(matrix, dtype=np.uint8) % 2
    n = work.shape[0]
    if work.shape != (n, n):
        raise ValidationError("Only square matrices can be inverted")
    augmented = np.concatenate([work, np.eye(n, dtype=np.uint8)], axis=1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if augmented[r, col]), None)
        if pivot is None:
            raise ValidationError("Matrix is singular over GF(2)")
        augmented[[col, pivot]] = augmented[[pivot, col]]
        for r in range(n):
            if r != col and augmented[r, col]:
                augmented[r] ^= augmented[col]
    return augmented[:, n:].copy()


def gf2_elimination_ops(matrix: np.ndarray) -> List[Tuple[int, int]]:
    """Row additions (source, target) reducing an invertible matrix to the identity"""
    work = np.array(matrix, dtype=np.uint8) % 2
    n = work.shape[0]
    ops: List[Tuple[int, int]] = []
    for col in range(n):
        if not work[col, col]:
            pivot = next((r for r in range(col + 1, n) if work[r, col]), None)
            if pivot is None:
                raise ValidationError("Matrix is singular over GF(2)")
            work[col] ^= work[pivot]
            ops.append((pivot, col))
        for r in range(n):
            if r != col and work[r, col]:
                work[r] ^= work[col]
                ops.append((col, r))
    return ops


def sample_invertible_gf2(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform element of GL(n, 2) by rejection"""
    while True:
        candidate = rng.integers(0, 2, size=(n, n), dtype=np.uint8)
        if gf2_rank(candidate) == n:
            return candidate


@lru_cache(maxsize=None)
def basis_bits(n: int) -> np.ndarray:
    """Bits of every computational basis index, shape (2^n, n), qubit 0 most significant"""
    indices = np.arange(2 ** n)
    bits = ((indices[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1).astype(np.uint8)
    bits.setflags(write=False)
    return bits


@lru_cache(maxsize=None)
def _bit_weights(n: int) -> np.ndarray:
    weights = 2 ** np.arange(n - 1, -1, -1)
    weights.setflags(write=False)
    return weights


def bits_to_index(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits)
    return bits.astype(np.int64) @ _bit_weights(bits.shape[-1])


# ---------------------------------------------------------------------------
# Clifford group
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _named_tableau(name: str) -> stim.Tableau:
    return stim.Tableau.from_named_gate(name)


def _pauli_text(codes: Sequence[int], negative: bool = False) -> str:
    return ("-" if negative else "+") + "".join(STIM_LETTERS[int(c)] for c in codes)


def _clifford_from_generators(xs: Tuple[str, ...], zs: Tuple[str, ...]) -> "CliffordElement":
    return CliffordElement(stim.Tableau.from_conjugated_generators(
        xs=[stim.PauliString(text) for text in xs],
        zs=[stim.PauliString(text) for text in zs],
    ))


@dataclass(frozen=True, eq=False)
class CliffordElement:
    """Multi-qubit Clifford backed by a stim tableau"""
    tableau: stim.Tableau
    kind: ClassVar[str] = "clifford"

    @property
    def n(self) -> int:
        return len(self.tableau)

    def generator_images(self) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
        xs = tuple(str(self.tableau.x_output(k)) for k in range(self.n))
        zs = tuple(str(self.tableau.z_output(k)) for k in range(self.n))
        return xs, zs

    def key(self) -> Tuple[str, ...]:
        xs, zs = self.generator_images()
        return ("clifford",) + xs + zs

    def __eq__(self, other) -> bool:
        if not isinstance(other, CliffordElement):
            return NotImplemented
        return self.tableau == other.tableau

    def __hash__(self):
        return hash(self.key())

    def __reduce__(self):
        return _clifford_from_generators, self.generator_images()

    @classmethod
    def identity(cls, n: int) -> "CliffordElement":
        return cls(stim.Tableau(n))

    @classmethod
    def from_named_gate(cls, name: str, qubits: Sequence[int], n: int) -> "CliffordElement":
        tableau = stim.Tableau(n)
        tableau.append(_named_tableau(name), list(qubits))
        return cls(tableau)

    def to_clifford(self) -> "CliffordElement":
        return self

    def unitary(self) -> np.ndarray:
        return np.asarray(self.tableau.to_unitary_matrix(endian="big"), dtype=complex)

    def conjugate(self, codes: Sequence[int]) -> Tuple[int, Tuple[int, ...]]:
        """Sign and codes of U P U^dagger for the Pauli string with the given codes"""
        image = self.tableau(stim.PauliString(_pauli_text(codes)))
        return int(round(image.sign.real)), tuple(int(image[k]) for k in range(self.n))

    def symplectic(self) -> Tuple[np.ndarray, np.ndarray]:
        """2n x 2n binary matrix (columns = images of X_k then Z_k in x|z layout) and sign bits"""
        n = self.n
        matrix = np.zeros((2 * n, 2 * n), dtype=np.uint8)
        signs = np.zeros(2 * n, dtype=np.uint8)
        outputs = [self.tableau.x_output(k) for k in range(n)] + [self.tableau.z_output(k) for k in range(n)]
        for column, image in enumerate(outputs):
            for q in range(n):
                code = image[q]
                matrix[q, column] = code in (1, 2)
                matrix[n + q, column] = code in (2, 3)
            signs[column] = image.sign.real < 0
        return matrix, signs

    def instructions(self) -> List[GateInstruction]:
        """Exact H/S/CX decomposition by stim's elimination synthesis"""
        circuit = self.tableau.to_circuit(method="elimination")
        compiled: List[GateInstruction] = []
        for operation in circuit:
            targets = [t.value for t in operation.targets_copy()]
            if operation.name in TWO_QUBIT_GATES:
                compiled.extend(GateInstruction(operation.name, (targets[i], targets[i + 1]))
                                for i in range(0, len(targets), 2))
            else:
                compiled.extend(GateInstruction(operation.name, (t,)) for t in targets)
        return compiled


def _symplectic_inner(u: np.ndarray, v: np.ndarray, n: int) -> int:
    return int((u[:n] @ v[n:] + u[n:] @ v[:n]) % 2)


def _project_out(x: np.ndarray, pairs: List[Tuple[np.ndarray, np.ndarray]], n: int) -> np.ndarray:
    """Project onto the symplectic complement of the span of the chosen pairs"""
    result = x.copy()
    for v, w in pairs:
        if _symplectic_inner(x, w, n):
            result ^= v
        if _symplectic_inner(x, v, n):
            result ^= w
    return result


def _letters_of(vector: np.ndarray, n: int) -> List[int]:
    # (x, z) -> stim code: (1,0) X=1, (1,1) Y=2, (0,1) Z=3
    return [int(vector[q]) * (1 + int(vector[n + q])) + 3 * int(vector[n + q]) * (1 - int(vector[q]))
            for q in range(n)]


def sample_clifford(n: int, rng: np.random.Generator) -> CliffordElement:
    """Uniform Clifford modulo phase via a random symplectic basis plus random signs"""
    _check_group_size(n)
    pairs: List[Tuple[np.ndarray, np.ndarray]] = []
    for _ in range(n):
        while True:
            v = _project_out(rng.integers(0, 2, 2 * n, dtype=np.uint8), pairs, n)
            if v.any():
                break
        while True:
            w = _project_out(rng.integers(0, 2, 2 * n, dtype=np.uint8), pairs, n)
            if _symplectic_inner(v, w, n) == 1:
                break
        pairs.append((v, w))

    signs = rng.integers(0, 2, 2 * n)
    xs = tuple(_pauli_text(_letters_of(v, n), bool(signs[k])) for k, (v, _) in enumerate(pairs))
    zs = tuple(_pauli_text(_letters_of(w, n), bool(signs[n + k])) for k, (_, w) in enumerate(pairs))
    return _clifford_from_generators(xs, zs)


# ---------------------------------------------------------------------------
# CNOT-dihedral group
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DihedralElement:
    """|x> -> i^(a.x + 2 x^T Q x) |A x + c> over GF(2), Q strictly upper triangular"""
    A: np.ndarray
    c: np.ndarray
    a: np.ndarray
    Q: np.ndarray
    validate: InitVar[bool] = True
    _cache: Dict[str, Any] = field(default_factory=dict, init=False, repr=False)
    kind: ClassVar[str] = "dihedral"

    def __post_init__(self, validate: bool):
        A = np.array(self.A, dtype=np.uint8) % 2
        n = A.shape[0]
        c = np.array(self.c, dtype=np.uint8).reshape(-1) % 2
        a = np.array(self.a, dtype=np.int64).reshape(-1) % 4
        Q = np.array(self.Q, dtype=np.uint8) % 2
        if validate:
            if A.shape != (n, n) or c.shape != (n,) or a.shape != (n,) or Q.shape != (n, n):
                raise ValidationError("Inconsistent dihedral parameter shapes")
            if np.any(np.tril(Q)):
                raise ValidationError("Quadratic phase matrix must be strictly upper triangular")
            if gf2_rank(A) != n:
                raise ValidationError("Linear part of a dihedral element must be invertible")
        for name, value in (("A", A), ("c", c), ("a", a), ("Q", Q)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def key(self) -> Tuple[Any, ...]:
        return ("dihedral", self.n, self.A.tobytes(), self.c.tobytes(), self.a.tobytes(), self.Q.tobytes())

    def __eq__(self, other) -> bool:
        if not isinstance(other, DihedralElement):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    @classmethod
    def identity(cls, n: int) -> "DihedralElement":
        zeros = np.zeros(n, dtype=np.uint8)
        return cls(np.eye(n, dtype=np.uint8), zeros, zeros, np.zeros((n, n), dtype=np.uint8), False)

    @classmethod
    def from_named_gate(cls, name: str, qubits: Sequence[int], n: int) -> "DihedralElement":
        """Generators of the group: S, X, CNOT (plus Z and S_DAG as S powers)"""
        A = np.eye(n, dtype=np.uint8)
        c = np.zeros(n, dtype=np.uint8)
        a = np.zeros(n, dtype=np.int64)
        name = name.upper()
        if name in ("S", "Z", "S_DAG") and len(qubits) == 1:
            a[qubits[0]] = {"S": 1, "Z": 2, "S_DAG": 3}[name]
        elif name == "X" and len(qubits) == 1:
            c[qubits[0]] = 1
        elif name in ("CX", "CNOT") and len(qubits) == 2:
            control, target = qubits
            A[target, control] = 1
        else:
            raise ValidationError(f"{name} on {tuple(qubits)} is not a CNOT-dihedral generator")
        return cls(A, c, a, np.zeros((n, n), dtype=np.uint8))

    def permutation(self) -> np.ndarray:
        """Basis index x -> index of A x + c"""
        if "perm" not in self._cache:
            images = (basis_bits(self.n).astype(np.int64) @ self.A.T.astype(np.int64) + self.c) % 2
            self._cache["perm"] = bits_to_index(images)
        return self._cache["perm"]

    def phase_table(self) -> np.ndarray:
        """Phase exponent f(x) mod 4 for every basis index"""
        if "phase" not in self._cache:
            x = basis_bits(self.n).astype(np.int64)
            quadratic = ((x @ self.Q.astype(np.int64)) * x).sum(axis=1)
            self._cache["phase"] = (x @ self.a + 2 * quadratic) % 4
        return self._cache["phase"]

    @classmethod
    def from_tables(cls, perm: np.ndarray, phase: np.ndarray, n: int) -> "DihedralElement":
        """Recover (A, c, a, Q) from a monomial action, dropping the global phase"""
        phase = (np.asarray(phase, dtype=np.int64) - phase[0]) % 4
        bits = basis_bits(n)
        unit = [1 << (n - 1 - j) for j in range(n)]
        c = bits[perm[0]].copy()
        A = np.stack([bits[perm[unit[j]]] ^ c for j in range(n)], axis=1)
        a = np.array([phase[unit[j]] for j in range(n)], dtype=np.int64)
        Q = np.zeros((n, n), dtype=np.uint8)
        for i in range(n):
            for j in range(i + 1, n):
                residual = (phase[unit[i] | unit[j]] - a[i] - a[j]) % 4
                if residual % 2:
                    raise ValidationError("Monomial action is outside the CNOT-dihedral parameterization")
                Q[i, j] = residual // 2
        element = cls(A, c, a, Q, False)
        element._cache["perm"] = np.asarray(perm, dtype=np.int64)
        element._cache["phase"] = phase
        return element

    def unitary(self) -> np.ndarray:
        d = 2 ** self.n
        matrix = np.zeros((d, d), dtype=complex)
        matrix[self.permutation(), np.arange(d)] = 1j ** self.phase_table()
        return matrix

    def instructions(self) -> List[GateInstruction]:
        """Compile to phase gates, CX-S_DAG-CX gadgets, a CNOT network and X gates"""
        n = self.n
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if self.Q[i, j]]
        power = self.a.astype(np.int64).copy()
        for i, j in edges:
            power[i] += 1
            power[j] += 1
        compiled = [GateInstruction(_PHASE_GATES[int(p) % 4], (q,)) for q, p in enumerate(power) if p % 4]
        for i, j in edges:
            compiled += [GateInstruction("CX", (i, j)), GateInstruction("S_DAG", (j,)), GateInstruction("CX", (i, j))]
        compiled += [GateInstruction("CX", (source, target))
                     for source, target in reversed(gf2_elimination_ops(self.A))]
        compiled += [GateInstruction("X", (q,)) for q in range(n) if self.c[q]]
        return compiled

    def to_clifford(self) -> CliffordElement:
        """Promote to a Clifford tableau by composing the compiled gates"""
        if "clifford" not in self._cache:
            tableau = stim.Tableau(self.n)
            for instruction in self.instructions():
                tableau.append(_named_tableau(instruction.name), list(instruction.qubits))
            self._cache["clifford"] = CliffordElement(tableau)
        return self._cache["clifford"]


def sample_dihedral(n: int, rng: np.random.Generator) -> DihedralElement:
    """Uniform CNOT-dihedral element: independent uniform A, c, a, Q"""
    _check_group_size(n)
    A = sample_invertible_gf2(n, rng)
    c = rng.integers(0, 2, n, dtype=np.uint8)
    a = rng.integers(0, 4, n)
    Q = np.triu(rng.integers(0, 2, (n, n), dtype=np.uint8), k=1)
    return DihedralElement(A, c, a, Q, False)


def _compose_dihedral(g1: DihedralElement, g2: DihedralElement) -> DihedralElement:
    perm2 = g2.permutation()
    perm = g1.permutation()[perm2]
    phase = (g2.phase_table() + g1.phase_table()[perm2]) % 4
    return DihedralElement.from_tables(perm, phase, g1.n)


def _inverse_dihedral(g: DihedralElement) -> DihedralElement:
    perm_inv = np.argsort(g.permutation())
    phase = (-g.phase_table()[perm_inv]) % 4
    return DihedralElement.from_tables(perm_inv, phase, g.n)


# ---------------------------------------------------------------------------
# Local (tensor-product) Clifford group
# ---------------------------------------------------------------------------

def closure(generators: Sequence[Any], identity: Any, cap: int = config.ENUMERATION_CAP) -> List[Any]:
    """Breadth-first closure of a generating set, deduplicated by element key"""
    seen = {identity.key()}
    elements = [identity]
    frontier = [identity]
    while frontier:
        next_frontier = []
        for element in frontier:
            for generator in generators:
                product = compose(generator, element)
                key = product.key()
                if key in seen:
                    continue
                seen.add(key)
                elements.append(product)
                next_frontier.append(product)
                if len(elements) > cap:
                    raise CapExceededError(f"Group closure exceeded the cap of {cap} elements")
        frontier = next_frontier
    return elements


@lru_cache(maxsize=None)
def single_qubit_cliffords() -> Tuple[CliffordElement, ...]:
    """The 24 single-qubit Cliffords in a fixed breadth-first order from H and S"""
    generators = [CliffordElement.from_named_gate(name, (0,), 1) for name in ("H", "S")]
    return tuple(closure(generators, CliffordElement.identity(1), cap=24))


@lru_cache(maxsize=None)
def _single_qubit_tables() -> Dict[str, np.ndarray]:
    cliffords = single_qubit_cliffords()
    lookup = {g.key(): k for k, g in enumerate(cliffords)}
    size = len(cliffords)
    product = np.empty((size, size), dtype=np.int64)
    inverse = np.empty(size, dtype=np.int64)
    forward_codes = np.zeros((size, 4), dtype=np.int64)
    forward_signs = np.ones((size, 4), dtype=np.int64)
    backward_codes = np.zeros((size, 4), dtype=np.int64)
    backward_signs = np.ones((size, 4), dtype=np.int64)
    unitaries = np.empty((size, 2, 2), dtype=complex)
    for i, gi in enumerate(cliffords):
        inverse[i] = lookup[CliffordElement(gi.tableau.inverse()).key()]
        unitaries[i] = gi.unitary()
        for j, gj in enumerate(cliffords):
            product[i, j] = lookup[CliffordElement(gj.tableau.then(gi.tableau)).key()]
        g_inv = CliffordElement(gi.tableau.inverse())
        for code in (1, 2, 3):
            sign, (image,) = gi.conjugate((code,))
            forward_codes[i, code], forward_signs[i, code] = image, sign
            sign, (image,) = g_inv.conjugate((code,))
            backward_codes[i, code], backward_signs[i, code] = image, sign
    tables = {
        "product": product, "inverse": inverse, "unitaries": unitaries,
        "forward_codes": forward_codes, "forward_signs": forward_signs,
        "backward_codes": backward_codes, "backward_signs": backward_signs,
    }
    for value in tables.values():
        value.setflags(write=False)
    return tables


def single_qubit_conjugation(backward: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """(codes, signs) tables, indexed [clifford, pauli code], of U P U^dag (or U^dag P U)"""
    tables = _single_qubit_tables()
    prefix = "backward" if backward else "forward"
    return tables[f"{prefix}_codes"], tables[f"{prefix}_signs"]


@dataclass(frozen=True)
class LocalCliffordElement:
    """Tensor product of single-qubit Cliffords, one table index per qubit"""
    indices: Tuple[int, ...]
    kind: ClassVar[str] = "local"

    def __post_init__(self):
        indices = tuple(int(k) for k in self.indices)
        if not indices or any(not 0 <= k < 24 for k in indices):
            raise ValidationError(f"Invalid local Clifford indices {self.indices}")
        object.__setattr__(self, "indices", indices)

    @property
    def n(self) -> int:
        return len(self.indices)

    def key(self) -> Tuple[Any, ...]:
        return ("local",) + self.indices

    @classmethod
    def identity(cls, n: int) -> "LocalCliffordElement":
        return cls((0,) * n)

    def factors(self) -> List[np.ndarray]:
        unitaries = _single_qubit_tables()["unitaries"]
        return [unitaries[k] for k in self.indices]

    def unitary(self) -> np.ndarray:
        result = np.array([[1.0 + 0j]])
        for factor in self.factors():
            result = np.kron(result, factor)
        return result

    def to_clifford(self) -> CliffordElement:
        tableau = stim.Tableau(self.n)
        cliffords = single_qubit_cliffords()
        for qubit, k in enumerate(self.indices):
            tableau.append(cliffords[k].tableau, [qubit])
        return CliffordElement(tableau)

    def instructions(self) -> List[GateInstruction]:
        return [GateInstruction(f"C1:{k}", (q,)) for q, k in enumerate(self.indices)]


def sample_local_clifford(n: int, rng: np.random.Generator) -> LocalCliffordElement:
    _check_group_size(n)
    return LocalCliffordElement(tuple(rng.integers(0, 24, n)))


# ---------------------------------------------------------------------------
# Group-generic operations
# ---------------------------------------------------------------------------

GroupElement = Union[CliffordElement, DihedralElement, LocalCliffordElement]


def identity_element(kind: str, n: int) -> GroupElement:
    constructors = {"clifford": CliffordElement, "dihedral": DihedralElement, "local": LocalCliffordElement}
    if kind not in constructors:
        raise ValidationError(f"Unknown group kind {kind!r}")
    return constructors[kind].identity(n)


def named_element(name: str, qubits: Sequence[int], n: int, kind: str = "clifford") -> GroupElement:
    """A generator such as ('H', (0,)) or ('CX', (0, 1)) as an element of the given group"""
    if kind == "dihedral":
        return DihedralElement.from_named_gate(name, qubits, n)
    if kind == "clifford":
        return CliffordElement.from_named_gate(name, qubits, n)
    raise ValidationError(f"Named generators are not defined for group kind {kind!r}")


def compose(g1: GroupElement, g2: GroupElement) -> GroupElement:
    """g1 . g2 (g2 acts first); mixed kinds are promoted to Clifford tableaux"""
    if g1.n != g2.n:
        raise ValidationError(f"Cannot compose elements on {g1.n} and {g2.n} qubits")
    if g1.kind == g2.kind == "dihedral":
        return _compose_dihedral(g1, g2)
    if g1.kind == g2.kind == "local":
        product = _single_qubit_tables()["product"]
        return LocalCliffordElement(tuple(product[i, j] for i, j in zip(g1.indices, g2.indices)))
    return CliffordElement(g2.to_clifford().tableau.then(g1.to_clifford().tableau))


def inverse(g: GroupElement) -> GroupElement:
    if g.kind == "dihedral":
        return _inverse_dihedral(g)
    if g.kind == "local":
        table = _single_qubit_tables()["inverse"]
        return LocalCliffordElement(tuple(table[k] for k in g.indices))
    return CliffordElement(g.tableau.inverse())


def unitary_of(g: GroupElement) -> np.ndarray:
    _check_group_size(g.n)
    return g.unitary()


def adjoint_superop(g: GroupElement) -> SuperOp:
    """Signed-permutation Pauli transfer matrix of U . U^dagger"""
    n = g.n
    if n > config.DENSE_SUPEROP_CAP:
        raise CapExceededError(f"Dense superoperators are capped at n={config.DENSE_SUPEROP_CAP}")
    if g.kind == "dihedral":
        return SuperOp(n, np.rint(ptm_from_unitary(g.unitary(), n).entries))
    clifford = g.to_clifford()
    digits = pauli_digits(n)
    entries = np.zeros((4 ** n, 4 ** n))
    for column in range(4 ** n):
        sign, codes = clifford.conjugate(digits[column])
        entries[pauli_index(codes), column] = sign
    return SuperOp(n, entries)


def instruction_unitary(instruction: GateInstruction) -> np.ndarray:
    """Dense unitary on the instruction's own qubits"""
    return _instruction_matrix(instruction.name)


@lru_cache(maxsize=None)
def _instruction_matrix(name: str) -> np.ndarray:
    if name.startswith("C1:"):
        matrix = _single_qubit_tables()["unitaries"][int(name[3:])].copy()
    else:
        matrix = np.asarray(_named_tableau(name).to_unitary_matrix(endian="big"), dtype=complex)
    matrix.setflags(write=False)
    return matrix


@dataclass(frozen=True)
class GateSequence:
    """Ordered gates g_1 ... g_m (g_1 applied first)"""
    n: int
    elements: Tuple[GroupElement, ...] = ()

    def __post_init__(self):
        elements = tuple(self.elements)
        for element in elements:
            if element.n != self.n:
                raise ValidationError(f"Sequence on {self.n} qubits holds an element on {element.n}")
        object.__setattr__(self, "elements", elements)

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def end_gate(self) -> GroupElement:
        """g_m ... g_1, composing same-kind runs natively before promoting across kinds"""
        result: Optional[GroupElement] = None
        run: Optional[GroupElement] = None
        for element in self.elements:
            if run is not None and run.kind == element.kind:
                run = compose(element, run)
                continue
            if run is not None:
                result = run if result is None else compose(run, result)
            run = element
        if run is not None:
            result = run if result is None else compose(run, result)
        return result if result is not None else CliffordElement.identity(self.n)

    @property
    def inverse_gate(self) -> GroupElement:
        return inverse(self.end_gate)

    def with_inverse(self) -> "GateSequence":
        return GateSequence(self.n, self.elements + (self.inverse_gate,))
