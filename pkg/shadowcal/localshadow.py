"""
Local Clifford Calibration
Support patterns, the c_w oracle, the local gate-set correlator protocol,
local-Clifford shadows and the calibrated local frame operator.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from shadowcal.bruteoracle import channel_diagonal, channel_superop
from shadowcal.densitysim import prepare, run_sequence, sample_index, shot_rng
from shadowcal.errors import CalibrationError, CapExceededError, ValidationError
from shadowcal.gategroups import GateSequence, sample_local_clifford, single_qubit_conjugation
from shadowcal.pauliliouville import Observable, matrix_from_pauli_vector, parse_pattern, pauli_digits, \
    pauli_index, pauli_vector, z_string_index
from shadowcal.rbengine import (
    DecayFit, DecaySample, ExperimentPlan, ShadowRecord, ShotContext, fit_decay, run_shots,
)
from shadowcal.shadowest import FrameOperator

logger = logging.getLogger(__name__)

LOCAL_SCALE_CONVENTION = "per-gate scale 3^|w|; fitted decay divided by 3^|w|"


@dataclass(frozen=True)
class SupportPattern:
    """Bit vector w marking the qubits a Pauli string acts on"""
    bits: Tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if not bits or any(b not in (0, 1) for b in bits):
            raise ValidationError(f"Invalid support pattern {self.bits!r}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def parse(cls, pattern: Union[str, Sequence[int], "SupportPattern"], n: int) -> "SupportPattern":
        if isinstance(pattern, SupportPattern):
            if pattern.n != n:
                raise ValidationError(f"Pattern {pattern.label} has length {pattern.n}, expected {n}")
            return pattern
        return cls(parse_pattern(pattern, n))

    @property
    def n(self) -> int:
        return len(self.bits)

    @property
    def weight(self) -> int:
        return sum(self.bits)

    @property
    def label(self) -> str:
        return "".join(map(str, self.bits))

    @property
    def key(self) -> str:
        return "w=" + self.label

    @property
    def qubits(self) -> Tuple[int, ...]:
        return tuple(q for q, b in enumerate(self.bits) if b)

    @property
    def scale(self) -> int:
        return 3 ** self.weight

    def __str__(self) -> str:
        return self.label


def default_pattern_cap(n: int) -> int:
    """ceil(log2 n) + 2"""
    return math.ceil(math.log2(n)) + 2 if n > 1 else 2


def check_pattern_cap(pattern: SupportPattern, cap: Optional[int] = None):
    cap = default_pattern_cap(pattern.n) if cap is None else cap
    if pattern.weight > cap:
        raise CapExceededError(f"Pattern {pattern.label} has weight {pattern.weight} above the cap {cap}")


def all_patterns(n: int, max_weight: Optional[int] = None, include_trivial: bool = False) -> List[SupportPattern]:
    """Every pattern of weight <= max_weight, ordered by weight then label"""
    max_weight = n if max_weight is None else max_weight
    patterns = [SupportPattern(bits) for bits in itertools.product((0, 1), repeat=n)
                if (include_trivial or any(bits)) and sum(bits) <= max_weight]
    return sorted(patterns, key=lambda p: (p.weight, p.label))


def patterns_for_observables(observables: Iterable[Observable], n: int,
                             cap: Optional[int] = None) -> List[SupportPattern]:
    """Non-trivial supports of the Pauli strings the observables expand into"""
    found = set()
    for observable in observables:
        if observable.n != n:
            raise ValidationError(f"Observable {observable.name!r} acts on {observable.n} qubits, expected {n}")
        active = pauli_digits(n)[np.asarray(observable.pauli_coefficients()) != 0] != 0
        found.update(tuple(int(b) for b in row) for row in active if row.any())
    patterns = sorted((SupportPattern(bits) for bits in found), key=lambda p: (p.weight, p.label))
    for pattern in patterns:
        check_pattern_cap(pattern, cap)
    return patterns


# ---------------------------------------------------------------------------
# Oracle coefficients
# ---------------------------------------------------------------------------

def c_w_oracle(channel, pattern: Union[str, Sequence[int], SupportPattern], n: Optional[int] = None) -> float:
    """Tr[P_w B Lambda]/3^|w|: the channel's Z_w diagonal entry over 3^|w|"""
    diagonal = np.asarray(channel, dtype=float) if isinstance(channel, np.ndarray) else channel_diagonal(channel)
    n = n or int(round(math.log(diagonal.size, 4)))
    pattern = SupportPattern.parse(pattern, n)
    return float(diagonal[z_string_index(pattern.bits)] / pattern.scale)


def c_w_double_sum(channel, pattern: Union[str, Sequence[int], SupportPattern], n: int) -> float:
    """Bitstring form: 3^-|w| d^-1 sum_{b,b'} (-1)^{w.(b+b')} <b'|Lambda(|b><b|)|b'>"""
    superop = channel_superop(channel)
    pattern = SupportPattern.parse(pattern, n)
    d = 2 ** n
    bits = np.array(list(itertools.product((0, 1), repeat=n)))
    parities = (-1.0) ** (bits @ np.array(pattern.bits))
    total = 0.0
    for b in range(d):
        projector = np.zeros((d, d), dtype=complex)
        projector[b, b] = 1.0
        image = matrix_from_pauli_vector(superop.entries @ pauli_vector(projector, n), n)
        total += parities[b] * float(parities @ np.diag(image).real)
    return total / (d * pattern.scale)


# ---------------------------------------------------------------------------
# Gate-set correlators
# ---------------------------------------------------------------------------

def gateset_correlator(indices: np.ndarray, bits: np.ndarray, pattern: SupportPattern,
                       probe_vector: np.ndarray) -> float:
    """Scaled single-shot correlator for one pattern, from the gates' table indices (shape m x n)"""
    forward_codes, forward_signs = single_qubit_conjugation()
    backward_codes, backward_signs = single_qubit_conjugation(backward=True)
    support = list(pattern.qubits)
    m = indices.shape[0]

    last = indices[-1, support]
    if np.any(forward_codes[last, 3] != 3):
        return 0.0
    value = int(np.prod(forward_signs[last, 3])) * (-1) ** int(bits[support].sum())
    for j in range(1, m - 1):
        middle = indices[j, support]
        if np.any(backward_codes[middle, 3] != 3):
            return 0.0
        value *= int(np.prod(backward_signs[middle, 3]))

    first = indices[0, support]
    codes = np.zeros(pattern.n, dtype=np.int64)
    codes[support] = backward_codes[first, 3]
    value *= int(np.prod(backward_signs[first, 3]))
    return float(pattern.scale ** m * value * probe_vector[pauli_index(codes)])


def _gateset_shot(context: ShotContext, task: Tuple[int, int]) -> Tuple[float, ...]:
    plan = context.plan
    li, si = task
    m = plan.lengths[li]
    rng = shot_rng(plan.seed, plan.protocol_id, li, si)
    elements = tuple(sample_local_clifford(plan.n, rng) for _ in range(m))
    final = run_sequence(context.state, GateSequence(plan.n, elements), context.noise)
    outcome = sample_index(final, rng)
    bits = np.array([int(ch) for ch in format(outcome, f"0{plan.n}b")])
    indices = np.array([element.indices for element in elements])
    probe_vector = context.extras["probe_vector"]
    return tuple(gateset_correlator(indices, bits, pattern, probe_vector) for pattern in context.extras["patterns"])


def run_local_gateset(plan: ExperimentPlan, patterns: Sequence[Union[str, SupportPattern]],
                      workers: Optional[int] = None, cap: Optional[int] = None) -> Dict[str, List[DecaySample]]:
    """Random local-Clifford sequences on the probe state; one correlator per pattern per shot"""
    if plan.protocol != "local-gateset":
        raise ValidationError(f"Plan protocol {plan.protocol!r} is not local-gateset")
    parsed = [SupportPattern.parse(p, plan.n) for p in patterns]
    if not parsed:
        raise ValidationError("run_local_gateset needs at least one pattern")
    for pattern in parsed:
        if pattern.weight == 0:
            raise ValidationError("The trivial pattern has no decay to calibrate")
        check_pattern_cap(pattern, cap)

    probe = prepare(plan.probe, plan.n)
    context = ShotContext(plan, plan.realized_noise(), probe, extras={
        "patterns": tuple(parsed),
        "probe_vector": pauli_vector(probe.entries, plan.n),
    })
    results = run_shots(_gateset_shot, context, workers or plan.workers)
    tasks = [(li, si) for li in range(len(plan.lengths)) for si in range(plan.shots_per_length)]
    samples: Dict[str, List[DecaySample]] = {}
    for k, pattern in enumerate(parsed):
        samples[pattern.label] = [DecaySample(plan.lengths[li], values[k], si)
                                  for (li, si), values in zip(tasks, results)]
    return samples


@dataclass
class LocalFit:
    """Gate-set fit for one pattern; coefficient = fitted decay / 3^|w|"""
    pattern: SupportPattern
    fit: DecayFit

    @property
    def coefficient(self) -> float:
        return self.fit.decay / self.pattern.scale

    @property
    def sigma(self) -> float:
        return self.fit.sigma_decay / self.pattern.scale

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pattern": self.pattern.label,
            "p_w": self.coefficient,
            "sigma_p_w": self.sigma,
            "scale": self.pattern.scale,
            "fit": self.fit.to_dict(),
        }


def fit_local_gateset(samples: Mapping[str, Sequence[DecaySample]], model: str = "exp") -> Dict[str, LocalFit]:
    fits = {}
    for label, pattern_samples in samples.items():
        pattern = SupportPattern(tuple(int(ch) for ch in label))
        fits[label] = LocalFit(pattern, fit_decay(pattern_samples, model))
        logger.info("pattern %s: p_w=%.6f +/- %.6f", label, fits[label].coefficient, fits[label].sigma)
    return fits


# ---------------------------------------------------------------------------
# Local shadows and frames
# ---------------------------------------------------------------------------

def _local_shadow_shot(context: ShotContext, task: Tuple[int, int]) -> ShadowRecord:
    plan = context.plan
    li, si = task
    rng = shot_rng(plan.seed, plan.protocol_id, li, si)
    gate = sample_local_clifford(plan.n, rng)
    final = run_sequence(context.state, GateSequence(plan.n, (gate,)), context.noise)
    return ShadowRecord(gate, format(sample_index(final, rng), f"0{plan.n}b"), plan.lengths[li])


def run_local_shadow(plan: ExperimentPlan, workers: Optional[int] = None) -> List[ShadowRecord]:
    """Single-layer local-Clifford shadows of the prepared state"""
    if plan.protocol != "local-shadow":
        raise ValidationError(f"Plan protocol {plan.protocol!r} is not local-shadow")
    if plan.lengths != (1,):
        raise ValidationError("local-shadow runs a single gate layer; lengths must be [1]")
    context = ShotContext(plan, plan.realized_noise(), plan.initial_state())
    return run_shots(_local_shadow_shot, context, workers or plan.workers)


def build_local_frame(coeffs: Mapping[Any, Union[float, LocalFit]], observables: Sequence[Observable] = (),
                      n: Optional[int] = None, source: str = "local-gateset") -> FrameOperator:
    """Local frame from per-pattern coefficients; every pattern the observables need must be present"""
    coefficients: Dict[str, float] = {}
    for key, value in coeffs.items():
        label = key.label if isinstance(key, SupportPattern) else str(key).replace("w=", "")
        coefficients[label] = value.coefficient if isinstance(value, LocalFit) else float(value)
    if n is None:
        if not coefficients:
            raise ValidationError("Cannot infer n from an empty coefficient map")
        n = len(next(iter(coefficients)))
    for label, value in coefficients.items():
        if len(label) != n:
            raise ValidationError(f"Pattern {label} does not act on {n} qubits")
        if not value > 0:
            raise CalibrationError(f"Local frame coefficient for w={label} is {value}, not positive")
    missing = [p.label for p in patterns_for_observables(observables, n, cap=n) if p.label not in coefficients]
    if missing:
        raise CalibrationError(f"Local frame is missing required patterns {missing}")
    coefficients.setdefault("0" * n, 1.0)
    provenance = {"source": source, "convention": "ideal c_w = 3^-|w|"}
    return FrameOperator("local", coefficients, provenance)


def ideal_local_frame(n: int, observables: Sequence[Observable] = ()) -> FrameOperator:
    """Noise-free local frame c_w = 3^-|w|, restricted to the needed patterns when observables are given"""
    patterns = patterns_for_observables(observables, n, cap=n) if observables else all_patterns(n)
    return build_local_frame({p.label: 1.0 / p.scale for p in patterns}, observables, n, source="ideal")


def oracle_local_frame(noise, observables: Sequence[Observable], n: int) -> FrameOperator:
    """Local frame with the exact c_w of a gate-independent channel"""
    patterns = patterns_for_observables(observables, n, cap=n)
    coeffs = {p.label: c_w_oracle(noise, p, n) for p in patterns}
    return build_local_frame(coeffs, observables, n, source="oracle")
