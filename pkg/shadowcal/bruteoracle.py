"""
Exact Oracle
Group enumeration, Schur-twirl frame operators and sampling-free protocol
signals and estimator expectations for gate-independent noise.
"""
import itertools
import logging
from functools import lru_cache
from typing import Any, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from shadowcal import config
from shadowcal.densitysim import apply_noisy_gate, prepare
from shadowcal.errors import CapExceededError, OracleUnavailableError, ValidationError
from shadowcal.gategroups import (
    GroupElement, LocalCliffordElement, adjoint_superop, closure, identity_element, named_element,
    single_qubit_cliffords,
)
from shadowcal.noisechan import NoiseModel
from shadowcal.pauliliouville import (
    DiagonalProjector, Observable, SuperOp, build_projector, matrix_from_pauli_vector, pauli_vector,
    z_string_index,
)
from shadowcal.shadowest import FrameOperator

logger = logging.getLogger(__name__)

GROUP_KINDS = ("clifford", "dihedral", "local")
ENUMERATION_QUBIT_CAP = 2


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------

def standard_generators(kind: str, n: int) -> List[GroupElement]:
    """{H, S, CX} for Clifford, {S, X, CX} for CNOT-dihedral, per-qubit {H, S} for local"""
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    if kind == "clifford":
        names = [("H", (q,)) for q in range(n)] + [("S", (q,)) for q in range(n)] + [("CX", pair) for pair in pairs]
        return [named_element(name, qubits, n, "clifford") for name, qubits in names]
    if kind == "dihedral":
        names = [("S", (q,)) for q in range(n)] + [("X", (q,)) for q in range(n)] + [("CX", pair) for pair in pairs]
        return [named_element(name, qubits, n, "dihedral") for name, qubits in names]
    if kind == "local":
        generators = []
        for q in range(n):
            for k in (1, 2):
                indices = [0] * n
                indices[q] = k
                generators.append(LocalCliffordElement(tuple(indices)))
        return generators
    raise ValidationError(f"Unknown group kind {kind!r}")


def enumerate_group(generators: Sequence[GroupElement], n: int, cap: int = config.ENUMERATION_CAP,
                    kind: str = "clifford") -> List[GroupElement]:
    """BFS closure of the generators, deduplicated modulo global phase"""
    generators = list(generators)
    for generator in generators:
        if generator.n != n:
            raise ValidationError(f"Generator on {generator.n} qubits in an n={n} enumeration")
    identity = identity_element(generators[0].kind if generators else kind, n)
    elements = closure(generators, identity, cap)
    logger.debug("Enumerated %d %s elements at n=%d", len(elements), identity.kind, n)
    return elements


@lru_cache(maxsize=None)
def standard_group(kind: str, n: int) -> Tuple[GroupElement, ...]:
    if n > ENUMERATION_QUBIT_CAP:
        raise CapExceededError(f"Group enumeration is capped at n={ENUMERATION_QUBIT_CAP}, got n={n}")
    if kind == "local":
        cliffords = range(len(single_qubit_cliffords()))
        return tuple(LocalCliffordElement(indices) for indices in itertools.product(cliffords, repeat=n))
    return tuple(enumerate_group(standard_generators(kind, n), n, kind=kind))


# ---------------------------------------------------------------------------
# Schur twirls (diagonal form)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _pattern_labels(n: int) -> Tuple[str, ...]:
    return tuple("".join(bits) for bits in itertools.product("01", repeat=n))


def sector_projectors(kind: str, n: int) -> List[DiagonalProjector]:
    """Irreducible sectors of the adjoint action of each group"""
    if kind == "clifford":
        return [build_projector("triv", n), build_projector("adj", n)]
    if kind == "dihedral":
        return [build_projector("triv", n), build_projector("Z", n), build_projector("ort", n)]
    if kind == "local":
        return [build_projector(label, n) for label in _pattern_labels(n)]
    raise ValidationError(f"Unknown group kind {kind!r}")


def twirl(diagonal: np.ndarray, kind: str, n: int) -> np.ndarray:
    """Diagonal of sum_a Tr[P_a X]/Tr[P_a] P_a, given the diagonal of X"""
    diagonal = np.asarray(diagonal, dtype=float)
    result = np.zeros_like(diagonal)
    for projector in sector_projectors(kind, n):
        result[projector.mask] = diagonal[projector.mask].mean()
    return result


def channel_superop(noise: Union[SuperOp, NoiseModel, Any]) -> SuperOp:
    if isinstance(noise, SuperOp):
        return noise
    if isinstance(noise, NoiseModel) and not noise.gate_independent:
        raise OracleUnavailableError(f"No exact oracle for {noise.spec.kind} noise")
    if hasattr(noise, "superop"):
        return noise.superop()
    raise ValidationError(f"Cannot read a superoperator from {type(noise).__name__}")


def channel_diagonal(noise: Union[SuperOp, NoiseModel, Any]) -> np.ndarray:
    if isinstance(noise, NoiseModel) and not noise.gate_independent:
        raise OracleUnavailableError(f"No exact oracle for {noise.spec.kind} noise")
    if hasattr(noise, "ptm_diagonal"):
        return np.asarray(noise.ptm_diagonal(), dtype=float)
    return channel_superop(noise).diagonal()


def measurement_mask(n: int) -> np.ndarray:
    return build_projector("B", n).mask.astype(float)


def exact_frame_operator(group: Union[str, Sequence[GroupElement]], noise: Union[SuperOp, NoiseModel, Any],
                         n: int, method: str = "twirl") -> SuperOp:
    """Group average of Ad^dag(g) B Lambda Ad(g), by enumeration or by the Schur twirl"""
    if n > config.DENSE_SUPEROP_CAP:
        raise CapExceededError(f"Dense frame operators are capped at n={config.DENSE_SUPEROP_CAP}")
    if method == "twirl":
        if not isinstance(group, str):
            group = group[0].kind
        return SuperOp(n, np.diag(twirl(measurement_mask(n) * channel_diagonal(noise), group, n)))
    if method != "enumerate":
        raise ValidationError(f"Unknown frame method {method!r}")
    if n > ENUMERATION_QUBIT_CAP:
        raise CapExceededError(f"Enumerated frames are capped at n={ENUMERATION_QUBIT_CAP}, got n={n}")
    elements = standard_group(group, n) if isinstance(group, str) else group
    noisy = measurement_mask(n)[:, None] * channel_superop(noise).entries
    total = np.zeros((4 ** n, 4 ** n))
    for element in elements:
        adjoint = adjoint_superop(element).entries
        total += adjoint.T @ noisy @ adjoint
    return SuperOp(n, total / len(elements))


# ---------------------------------------------------------------------------
# Protocol frames and signals
# ---------------------------------------------------------------------------

def selfcal_frame_diagonal(channel_diagonal: np.ndarray, m: int, n: int) -> np.ndarray:
    """Clifford-then-m-dihedral frame: tau_C(X R), X = tau_K(BR) tau_K(R)^(m-1) or B for m = 0"""
    measured = measurement_mask(n)
    if m == 0:
        inner = measured
    else:
        inner = twirl(measured * channel_diagonal, "dihedral", n) * twirl(channel_diagonal, "dihedral", n) ** (m - 1)
    return twirl(inner * channel_diagonal, "clifford", n)


def clifford_shadow_frame_diagonal(channel_diagonal: np.ndarray, m: int, n: int) -> np.ndarray:
    """m-Clifford frame: tau_C(BR) tau_C(R)^(m-1)"""
    measured = twirl(measurement_mask(n) * channel_diagonal, "clifford", n)
    return measured * twirl(channel_diagonal, "clifford", n) ** (m - 1)


def local_frame_diagonal(channel_diagonal: np.ndarray, n: int) -> np.ndarray:
    return twirl(measurement_mask(n) * channel_diagonal, "local", n)


def _observable_vector(observable: Union[Observable, np.ndarray], n: int) -> np.ndarray:
    if isinstance(observable, Observable):
        return np.asarray(observable.pauli_coefficients())
    return pauli_vector(np.asarray(observable), n)


def expectation_through(frame_diagonal: np.ndarray, observable, state: np.ndarray, n: int) -> float:
    """<<O| M |rho>> for a Pauli-diagonal M"""
    d = 2 ** n
    return float(_observable_vector(observable, n) @ (frame_diagonal * pauli_vector(state, n)) / d)


def filter_expectation(frame_diagonal: np.ndarray, filter_matrix: np.ndarray, state: np.ndarray, n: int) -> float:
    """(d+1)(<<E|M|rho>> - Tr[E]/d)"""
    d = 2 ** n
    trace = float(np.trace(filter_matrix).real)
    return (d + 1) * (expectation_through(frame_diagonal, filter_matrix, state, n) - trace / d)


def survival_expectation(channel: SuperOp, twirled: np.ndarray, m: int, n: int) -> float:
    """<<0..0| R tau(R)^m |0..0>> for RB with a physical inverse"""
    d = 2 ** n
    zeros = pauli_vector(prepare("zeros", n).entries, n)
    return float(zeros @ (channel.entries @ (twirled ** m * zeros)) / d)


def _require_exact(plan) -> NoiseModel:
    noise = plan.realized_noise()
    if not noise.gate_independent:
        raise OracleUnavailableError(f"Exact signals need gate-independent noise, got {plan.noise.kind}")
    if plan.n > config.DENSE_SUPEROP_CAP:
        raise CapExceededError(f"Exact signals are capped at n={config.DENSE_SUPEROP_CAP}, got n={plan.n}")
    return noise


def _signal_table(rows: List[Tuple[int, float]]) -> pd.DataFrame:
    table = pd.DataFrame(rows, columns=["m", "mean"])
    table["stderr"] = 0.0
    table["shots"] = 0
    return table


def exact_signal(plan, pattern: Optional[str] = None) -> pd.DataFrame:
    """Per-length expected signal of a plan, without sampling"""
    noise = _require_exact(plan)
    n = plan.n
    diagonal = noise.ptm_diagonal()
    rows: List[Tuple[int, float]] = []
    if plan.protocol in ("dihedral-rb", "clifford-rb"):
        kind = "dihedral" if plan.protocol == "dihedral-rb" else "clifford"
        channel, twirled = noise.superop(), twirl(diagonal, kind, n)
        rows = [(m, survival_expectation(channel, twirled, m, n)) for m in plan.lengths]
    elif plan.protocol == "selfcal-dihedral-shadow":
        state, filter_matrix = plan.initial_state().entries, plan.filter_matrix()
        rows = [(m + 1, filter_expectation(selfcal_frame_diagonal(diagonal, m, n), filter_matrix, state, n))
                for m in plan.lengths]
    elif plan.protocol == "clifford-shadow":
        state, filter_matrix = plan.initial_state().entries, plan.filter_matrix()
        rows = [(m, filter_expectation(clifford_shadow_frame_diagonal(diagonal, m, n), filter_matrix, state, n))
                for m in plan.lengths]
    elif plan.protocol == "local-gateset":
        if pattern is None:
            raise ValidationError("Exact local gate-set signals need a support pattern")
        probe = prepare(plan.probe, n).entries
        rows = [(m, local_gateset_expectation(diagonal, pattern, m, probe, n)) for m in plan.lengths]
    else:
        raise ValidationError(f"No exact signal for protocol {plan.protocol!r}")
    return _signal_table(rows)


def local_gateset_expectation(channel_diagonal: np.ndarray, pattern: str, m: int, probe: np.ndarray,
                              n: int) -> float:
    """Scaled correlator mean 3^(|w| m) theta . (P_w X_1 theta) of the local gate-set protocol"""
    bits = tuple(int(ch) for ch in pattern)
    weight = sum(bits)
    link = np.zeros(4 ** n)
    link[z_string_index(bits)] = 1.0
    current = twirl(measurement_mask(n) * channel_diagonal, "local", n)
    for _ in range(m - 1):
        current = twirl(link * current * channel_diagonal, "local", n)
    theta = pauli_vector(probe, n)
    sector = build_projector(pattern, n).mask
    return float(3 ** (weight * m) * theta @ (sector * current * theta))


# ---------------------------------------------------------------------------
# Exact estimator statistics
# ---------------------------------------------------------------------------

def expected_estimate(frame_diagonal: np.ndarray, frame: FrameOperator, observable: Observable,
                      state: np.ndarray) -> float:
    """sum_P o_P (M r)_P / (d c_P): expectation of one shadow estimate"""
    n = observable.n
    coefficients = np.asarray(observable.pauli_coefficients())
    active = coefficients != 0
    weights = frame.coefficient_vector(n, required=active)
    r = pauli_vector(state, n)
    d = 2 ** n
    return float(np.sum(coefficients[active] * frame_diagonal[active] * r[active] / weights[active]) / d)


def exact_estimate(plan, observable: Observable, frame: Union[FrameOperator, Mapping[int, FrameOperator]]) -> float:
    """Expected shadow estimate of a plan under a given (per-length) frame, averaged evenly over lengths"""
    noise = _require_exact(plan)
    n = plan.n
    diagonal = noise.ptm_diagonal()
    state = plan.initial_state().entries
    if plan.protocol == "selfcal-dihedral-shadow":
        physical = {m + 1: selfcal_frame_diagonal(diagonal, m, n) for m in plan.lengths}
    elif plan.protocol == "clifford-shadow":
        physical = {m: clifford_shadow_frame_diagonal(diagonal, m, n) for m in plan.lengths}
    elif plan.protocol == "local-shadow":
        physical = {1: local_frame_diagonal(diagonal, n)}
    else:
        raise ValidationError(f"Protocol {plan.protocol!r} produces no shadow records")
    values = []
    for length, frame_diagonal in physical.items():
        applied = frame[length] if isinstance(frame, Mapping) else frame
        values.append(expected_estimate(frame_diagonal, applied, observable, state))
    return float(np.mean(values))


def exact_estimator_variance(observable: Observable, state: np.ndarray, noise: Optional[NoiseModel],
                             frame: FrameOperator, kind: str = "clifford") -> float:
    """Single-shot variance of a one-gate shadow estimate, enumerating every group element"""
    n = observable.n
    elements = standard_group(kind, n)
    d = 2 ** n
    coefficients = np.asarray(observable.pauli_coefficients())
    weights = frame.coefficient_vector(n, required=coefficients != 0)
    active = coefficients != 0
    scaled = np.zeros_like(coefficients, dtype=float)
    scaled[active] = coefficients[active] / weights[active]
    # Per-shot value is <b| U O' U^dag |b> with O' the frame-inverted observable
    inverted = matrix_from_pauli_vector(scaled, n)
    first, second = 0.0, 0.0
    for element in elements:
        final = apply_noisy_gate(np.asarray(state, dtype=complex), element, noise)
        probabilities = np.clip(np.diag(final).real, 0.0, None)
        unitary = element.unitary()
        values = np.diag(unitary @ inverted @ unitary.conj().T).real
        first += probabilities @ values
        second += probabilities @ values ** 2
    first /= len(elements)
    second /= len(elements)
    logger.debug("Exact variance over %d elements (d=%d)", len(elements), d)
    return float(second - first ** 2)
