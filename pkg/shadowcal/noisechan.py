"""
Noise Channels
Gate-independent and gate-dependent noise models, their Kraus and
Pauli-transfer forms, and closed-form decay parameters for the standard models.
"""
import itertools
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from shadowcal import config
from shadowcal.densitysim import apply_local_kraus
from shadowcal.errors import CalibrationError, CapExceededError, OracleUnavailableError, ValidationError
from shadowcal.gategroups import GateInstruction, GroupElement, instruction_unitary
from shadowcal.pauliliouville import PAULI_MATRICES, SuperOp, ptm_from_kraus

logger = logging.getLogger(__name__)

GATE_INDEPENDENT_KINDS = ("global-depolarizing", "local-depolarizing", "bit-flip", "amplitude-damping", "dephasing")
GATE_DEPENDENT_KINDS = ("gate-dependent-cnot-depol", "coherent-overrotation")
NOISE_KINDS = GATE_INDEPENDENT_KINDS + GATE_DEPENDENT_KINDS
OVERROTATION_DECOMPOSITION = "zyz-euler"

_ANGLE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class NoiseSpec:
    """Noise kind plus its parameters (probabilities p, gamma and ratio; angle theta in radians)"""
    kind: str
    p: float = 0.0
    gamma: float = 0.0
    ratio: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValidationError(f"Unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        for name in ("p", "gamma", "ratio", "theta"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValidationError(f"Noise parameter {name} must be finite")
            object.__setattr__(self, name, value)
        if not 0.0 <= self.p <= 1.0:
            raise ValidationError(f"Noise probability p={self.p} outside [0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError(f"Damping parameter gamma={self.gamma} outside [0, 1]")
        if self.ratio < 0.0 or self.ratio * self.p > 1.0:
            raise ValidationError(f"Single-qubit ratio {self.ratio} gives a probability outside [0, 1]")

    @property
    def gate_independent(self) -> bool:
        return self.kind in GATE_INDEPENDENT_KINDS

    @property
    def primary_parameter(self) -> float:
        """The value shown on sweep axes"""
        return self.theta if self.kind == "coherent-overrotation" else self.p

    def with_parameter(self, name: str, value: float) -> "NoiseSpec":
        if name not in ("p", "gamma", "ratio", "theta"):
            raise ValidationError(f"Cannot sweep noise parameter {name!r}")
        params = self.to_dict()
        params[name] = float(value)
        return NoiseSpec(**params)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "p": self.p, "gamma": self.gamma, "ratio": self.ratio, "theta": self.theta}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NoiseSpec":
        """Accept {"kind": ..., "params": {...}} or a flat mapping"""
        if "kind" not in data:
            raise ValidationError("Noise spec needs a 'kind'")
        params = dict(data.get("params", {}))
        params.update({k: v for k, v in data.items() if k in ("p", "gamma", "ratio", "theta")})
        unknown = set(params) - {"p", "gamma", "ratio", "theta"}
        if unknown:
            raise ValidationError(f"Unknown noise parameters {sorted(unknown)}")
        return cls(data["kind"], **params)


# ---------------------------------------------------------------------------
# Kraus builders
# ---------------------------------------------------------------------------

def depolarizing_kraus(p: float) -> List[np.ndarray]:
    """Single-qubit depolarizing: Pauli diagonal (1, 1-p, 1-p, 1-p)"""
    return [np.sqrt(1 - 3 * p / 4) * PAULI_MATRICES[0]] + [np.sqrt(p / 4) * PAULI_MATRICES[k] for k in (1, 2, 3)]


def bit_flip_kraus(p: float) -> List[np.ndarray]:
    return [np.sqrt(1 - p) * PAULI_MATRICES[0], np.sqrt(p) * PAULI_MATRICES[1]]


def dephasing_kraus(p: float) -> List[np.ndarray]:
    """Phase flip with probability p/2: Pauli diagonal (1, 1-p, 1-p, 1)"""
    return [np.sqrt(1 - p / 2) * PAULI_MATRICES[0], np.sqrt(p / 2) * PAULI_MATRICES[3]]


def amplitude_damping_kraus(p: float, gamma: float) -> List[np.ndarray]:
    """Identity with probability p, otherwise damping with parameter gamma"""
    damp_keep = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    damp_decay = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    return [np.sqrt(p) * PAULI_MATRICES[0], np.sqrt(1 - p) * damp_keep, np.sqrt(1 - p) * damp_decay]


def pauli_depolarizing_kraus(p: float, n: int) -> List[np.ndarray]:
    """n-qubit depolarizing (1-p) rho + p Tr[rho] 1/d as 4^n weighted Paulis"""
    d2 = 4 ** n
    operators = []
    for codes in itertools.product(range(4), repeat=n):
        matrix = np.array([[1.0 + 0j]])
        for code in codes:
            matrix = np.kron(matrix, PAULI_MATRICES[code])
        weight = 1 - p + p / d2 if not any(codes) else p / d2
        operators.append(np.sqrt(weight) * matrix)
    return operators


_SINGLE_QUBIT_KRAUS = {
    "local-depolarizing": lambda spec: depolarizing_kraus(spec.p),
    "bit-flip": lambda spec: bit_flip_kraus(spec.p),
    "dephasing": lambda spec: dephasing_kraus(spec.p),
    "amplitude-damping": lambda spec: amplitude_damping_kraus(spec.p, spec.gamma),
}


# ---------------------------------------------------------------------------
# Channels
# ---------------------------------------------------------------------------

class LocalChannel:
    """The same single-qubit channel on every qubit"""

    def __init__(self, n: int, single_kraus: Sequence[np.ndarray], label: str):
        self.n = n
        self.label = label
        self.single_kraus = [np.asarray(k, dtype=complex) for k in single_kraus]
        self.single_ptm = ptm_from_kraus(self.single_kraus, 1)

    def apply(self, matrix: np.ndarray) -> np.ndarray:
        for qubit in range(self.n):
            matrix = apply_local_kraus(matrix, self.single_kraus, (qubit,), self.n)
        return matrix

    def ptm_diagonal(self) -> np.ndarray:
        diagonal = np.ones(1)
        for _ in range(self.n):
            diagonal = np.kron(diagonal, self.single_ptm.diagonal())
        return diagonal

    def superop(self) -> SuperOp:
        entries = np.ones((1, 1))
        for _ in range(self.n):
            entries = np.kron(entries, self.single_ptm.entries)
        return SuperOp(self.n, entries)

    def kraus(self) -> List[np.ndarray]:
        if self.n > config.DENSE_SUPEROP_CAP:
            raise CapExceededError(f"Full Kraus sets are capped at n={config.DENSE_SUPEROP_CAP}")
        operators = []
        for factors in itertools.product(self.single_kraus, repeat=self.n):
            matrix = np.array([[1.0 + 0j]])
            for factor in factors:
                matrix = np.kron(matrix, factor)
            operators.append(matrix)
        return operators


class GlobalDepolarizingChannel:
    """(1-p) rho + p Tr[rho] 1/d, applied in closed form"""

    def __init__(self, n: int, p: float):
        self.n = n
        self.p = p
        self.label = "global-depolarizing"

    def apply(self, matrix: np.ndarray) -> np.ndarray:
        d = 2 ** self.n
        return (1 - self.p) * matrix + self.p * np.trace(matrix) * np.eye(d) / d

    def ptm_diagonal(self) -> np.ndarray:
        diagonal = np.full(4 ** self.n, 1 - self.p)
        diagonal[0] = 1.0
        return diagonal

    def superop(self) -> SuperOp:
        return SuperOp(self.n, np.diag(self.ptm_diagonal()))

    def kraus(self) -> List[np.ndarray]:
        if self.n > config.DENSE_SUPEROP_CAP:
            raise CapExceededError(f"Full Kraus sets are capped at n={config.DENSE_SUPEROP_CAP}")
        return pauli_depolarizing_kraus(self.p, self.n)


def depolarize_qubits(p: float, k: int) -> List[np.ndarray]:
    """Kraus set of k-qubit depolarizing noise for gate-attached channels"""
    return pauli_depolarizing_kraus(p, k)


class CompiledGate(NamedTuple):
    """A physical gate on its own qubits plus the Kraus set applied right after it"""
    matrix: np.ndarray
    qubits: Tuple[int, ...]
    kraus: Tuple[np.ndarray, ...]


# ---------------------------------------------------------------------------
# ZYZ decomposition for the over-rotation model
# ---------------------------------------------------------------------------

def rz(angle: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])


def ry(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def zyz_angles(unitary: np.ndarray) -> Tuple[float, float, float, float]:
    """(alpha, phi, theta, lam) with U = e^{i alpha} Rz(phi) Ry(theta) Rz(lam)"""
    unitary = np.asarray(unitary, dtype=complex)
    special = unitary / np.sqrt(np.linalg.det(unitary))
    theta = 2 * np.arctan2(abs(special[1, 0]), abs(special[0, 0]))
    cos_part, sin_part = abs(special[0, 0]), abs(special[1, 0])
    total = 2 * np.angle(special[1, 1]) if cos_part > 1e-9 else 0.0
    difference = 2 * np.angle(special[1, 0]) if sin_part > 1e-9 else 0.0
    phi, lam = (total + difference) / 2, (total - difference) / 2
    rebuilt = rz(phi) @ ry(theta) @ rz(lam)
    k = np.unravel_index(np.argmax(np.abs(rebuilt)), rebuilt.shape)
    alpha = float(np.angle(unitary[k] / rebuilt[k]))
    return alpha, float(phi), float(theta), float(lam)


def _normalize_angle(angle: float) -> float:
    wrapped = (angle + np.pi) % (2 * np.pi) - np.pi
    return np.pi if wrapped <= -np.pi + _ANGLE_TOLERANCE else wrapped


def overrotate(unitary: np.ndarray, theta: float) -> np.ndarray:
    """Add theta to every non-trivial rotation angle of the ZYZ decomposition"""
    alpha, phi, tilt, lam = zyz_angles(unitary)
    shifted = [a + theta if abs(_normalize_angle(a)) > _ANGLE_TOLERANCE else a for a in (phi, tilt, lam)]
    return np.exp(1j * alpha) * rz(shifted[0]) @ ry(shifted[1]) @ rz(shifted[2])


@lru_cache(maxsize=512)
def _overrotated_instruction(name: str, theta: float) -> np.ndarray:
    matrix = overrotate(instruction_unitary(GateInstruction(name, (0,))), theta)
    matrix.setflags(write=False)
    return matrix


# ---------------------------------------------------------------------------
# Noise models
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Realized noise: one channel after every gate, or channels attached per gate class"""
    spec: NoiseSpec
    n: int
    channel: Optional[Any] = None
    gate_channels: Dict[str, Tuple[np.ndarray, ...]] = field(default_factory=dict)

    @property
    def gate_independent(self) -> bool:
        return self.spec.gate_independent

    @property
    def mode(self) -> str:
        return "gate-independent" if self.gate_independent else "gate-dependent"

    @property
    def is_noiseless(self) -> bool:
        spec = self.spec
        if spec.kind == "coherent-overrotation":
            return spec.theta == 0.0
        if spec.kind == "amplitude-damping":
            return spec.p == 1.0 or spec.gamma == 0.0
        return spec.p == 0.0

    def superop(self) -> SuperOp:
        if not self.gate_independent:
            raise OracleUnavailableError(f"{self.spec.kind} noise has no single channel")
        return self.channel.superop()

    def ptm_diagonal(self) -> np.ndarray:
        if not self.gate_independent:
            raise OracleUnavailableError(f"{self.spec.kind} noise has no single channel")
        return self.channel.ptm_diagonal()

    def compile(self, element: GroupElement) -> List[CompiledGate]:
        """Physical gate list of one group element with gate-class noise attached"""
        gates = []
        two_qubit = self.gate_channels.get("two_qubit", ())
        single_qubit = self.gate_channels.get("single_qubit", ())
        theta = self.spec.theta if self.spec.kind == "coherent-overrotation" else 0.0
        for instruction in element.instructions():
            if len(instruction.qubits) == 2:
                gates.append(CompiledGate(instruction_unitary(instruction), instruction.qubits, two_qubit))
                continue
            matrix = _overrotated_instruction(instruction.name, theta) if theta else instruction_unitary(instruction)
            gates.append(CompiledGate(matrix, instruction.qubits, single_qubit))
        return gates

    def describe(self) -> Dict[str, Any]:
        description = {"mode": self.mode, **self.spec.to_dict()}
        if self.spec.kind == "coherent-overrotation":
            description["decomposition"] = OVERROTATION_DECOMPOSITION
        return description


def realize(spec: NoiseSpec, n: int) -> NoiseModel:
    """Build the channel(s) a noise spec describes on n qubits"""
    if n < 1:
        raise ValidationError("Noise models need n >= 1")
    if spec.kind == "global-depolarizing":
        return NoiseModel(spec, n, channel=GlobalDepolarizingChannel(n, spec.p))
    if spec.kind in _SINGLE_QUBIT_KRAUS:
        return NoiseModel(spec, n, channel=LocalChannel(n, _SINGLE_QUBIT_KRAUS[spec.kind](spec), spec.kind))
    if spec.kind == "gate-dependent-cnot-depol":
        gate_channels = {"two_qubit": tuple(depolarize_qubits(spec.p, 2))}
        if spec.ratio > 0:
            gate_channels["single_qubit"] = tuple(depolarize_qubits(spec.ratio * spec.p, 1))
        return NoiseModel(spec, n, gate_channels=gate_channels)
    return NoiseModel(spec, n)


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------

def short_form_amplitude_damping_lambda_z(p: float, gamma: float, n: int) -> float:
    """Shorter amplitude-damping lambda_Z expression; matches the channel only for n=1 or p in {0, 1}"""
    d = 2 ** n
    return (d + (2 - p + (p - 1) * gamma) ** n - (2 - p) ** n - 1) / (d - 1)


def closed_form_lambdas(spec: NoiseSpec, n: int) -> Tuple[float, float]:
    """(lambda_Z, lambda_adj) of a gate-independent model"""
    d = 2 ** n
    p, gamma = spec.p, spec.gamma
    if spec.kind == "global-depolarizing":
        return 1 - p, 1 - p
    if spec.kind == "local-depolarizing":
        return ((2 - p) ** n - 1) / (d - 1), ((4 - 3 * p) ** n - 1) / (d * d - 1)
    if spec.kind == "bit-flip":
        return (d * (1 - p) ** n - 1) / (d - 1), (d * d * (1 - p) ** n - 1) / (d * d - 1)
    if spec.kind == "dephasing":
        return 1.0, ((4 - 2 * p) ** n - 1) / (d * d - 1)
    if spec.kind == "amplitude-damping":
        root = np.sqrt(1 - gamma)
        lambda_z = ((2 - (1 - p) * gamma) ** n - 1) / (d - 1)
        lambda_adj = ((2 - gamma + 2 * root + p * (2 + gamma - 2 * root)) ** n - 1) / (d * d - 1)
        return float(lambda_z), float(lambda_adj)
    raise OracleUnavailableError(f"No closed-form decay parameters for {spec.kind} noise")


def bias_ratio(spec: NoiseSpec, n: int) -> float:
    """lambda_Z/lambda_adj - 1, the residual adj-sector bias of Clifford calibration"""
    lambda_z, lambda_adj = closed_form_lambdas(spec, n)
    if lambda_adj == 0:
        raise CalibrationError(f"lambda_adj vanishes for {spec}")
    return lambda_z / lambda_adj - 1
