"""
Shadow Estimation
Spectral frame operators, calibrated inversion, per-shot shadow estimates,
median-of-means with bootstrap errors, bias predictors and variance bounds.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from shadowcal import config
from shadowcal.errors import CalibrationError, ValidationError
from shadowcal.gategroups import single_qubit_conjugation, unitary_of
from shadowcal.pauliliouville import Observable, pauli_digits

logger = logging.getLogger(__name__)

FRAME_KINDS = ("global", "global-powered", "local")
MAX_CALIBRATED_LAMBDA = 1.1


def _pattern_key(pattern) -> str:
    bits = pattern if isinstance(pattern, str) else "".join(str(int(b)) for b in pattern)
    return bits[2:] if bits.startswith("w=") else bits


@dataclass(frozen=True, eq=False)
class FrameOperator:
    """Frame operator as sector coefficients: {triv, adj} for global frames, {w: c_w} for local ones"""
    kind: str
    coefficients: Dict[str, float]
    provenance: Dict[str, Any] = field(default_factory=dict)
    inverted: bool = False
    _origin: Optional["FrameOperator"] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in FRAME_KINDS:
            raise ValidationError(f"Unknown frame kind {self.kind!r}; expected one of {FRAME_KINDS}")
        coefficients = {str(k): float(v) for k, v in self.coefficients.items()}
        if self.kind == "local":
            coefficients = {_pattern_key(k): v for k, v in coefficients.items()}
        elif set(coefficients) != {"triv", "adj"}:
            raise ValidationError("Global frames need exactly the coefficients 'triv' and 'adj'")
        object.__setattr__(self, "coefficients", coefficients)

    def is_invertible(self) -> bool:
        return all(v > 0 for v in self.coefficients.values())

    def coefficient_vector(self, n: int, required: Optional[np.ndarray] = None) -> np.ndarray:
        """Per-Pauli-index coefficient of the (non-inverted) frame"""
        size = 4 ** n
        values = self.plain_coefficients()
        if self.kind != "local":
            vector = np.full(size, values["adj"])
            vector[0] = values["triv"]
        else:
            active = pauli_digits(n) != 0
            labels = ["".join("1" if a else "0" for a in row) for row in active]
            values.setdefault("0" * n, 1.0)
            vector = np.array([values.get(label, np.nan) for label in labels])
        if required is not None and np.any(np.isnan(vector[required])):
            missing = sorted({labels[i] for i in np.flatnonzero(required & np.isnan(vector))})
            raise CalibrationError(f"Local frame is missing required patterns {missing}")
        return vector

    def plain_coefficients(self) -> Dict[str, float]:
        if self.inverted:
            return {k: 1.0 / v for k, v in self.coefficients.items()}
        return dict(self.coefficients)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "coefficients": dict(sorted(self.coefficients.items())),
            "inverted": self.inverted,
            "provenance": self.provenance,
        }


@dataclass
class EstimateReport:
    """Point estimate, bootstrap sigma and the settings and calibration behind them"""
    observable: str
    variant: str
    estimate: float
    sigma: float
    groups: int
    group_size: int
    resamples: int
    shots: int
    calibration: Dict[str, Any] = field(default_factory=dict)
    calibration_sigma: float = 0.0
    predicted: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "observable": self.observable,
            "variant": self.variant,
            "estimate": self.estimate,
            "sigma": self.sigma,
            "K": self.groups,
            "N": self.group_size,
            "resamples": self.resamples,
            "shots": self.shots,
            "calibration": self.calibration,
            "calibration_sigma": self.calibration_sigma,
            "predicted": self.predicted,
            "notes": list(self.notes),
        }


# ---------------------------------------------------------------------------
# Frames
# ---------------------------------------------------------------------------

def ideal_frame(n: int) -> FrameOperator:
    """Noise-free global Clifford frame (1, 1/(d+1))"""
    d = 2 ** n
    return FrameOperator("global", {"triv": 1.0, "adj": 1.0 / (d + 1)}, {"source": "ideal"})


def build_frame(kind: str, lam: float, n: int, m: Optional[int] = None, scheme: str = "dihedral",
                provenance: Optional[Dict[str, Any]] = None) -> FrameOperator:
    """Calibrated global frame: lam/(d+1), or lam^(m+1)/(d+1) (dihedral) and lam^m/(d+1) (Clifford) when powered"""
    if not np.isfinite(lam):
        raise CalibrationError(f"Decay parameter {lam} is not finite; the fit failed")
    if lam <= 0:
        raise CalibrationError(f"Decay parameter {lam} <= 0; calibrated frame is not invertible")
    if lam > MAX_CALIBRATED_LAMBDA:
        raise ValidationError(f"Decay parameter {lam} above {MAX_CALIBRATED_LAMBDA}")
    d = 2 ** n
    details = {"source": "rb-calibrated", "lambda": float(lam)}
    if kind == "global":
        coefficient = lam / (d + 1)
        details["exponent"] = 1
    elif kind == "global-powered":
        if m is None or m < 0:
            raise ValidationError("Powered frames need an exponent m >= 0")
        if scheme not in ("dihedral", "clifford"):
            raise ValidationError(f"Unknown calibration scheme {scheme!r}")
        exponent = m + 1 if scheme == "dihedral" else m
        coefficient = lam ** exponent / (d + 1)
        details.update({"exponent": exponent, "scheme": scheme})
    else:
        raise ValidationError(f"build_frame handles global frames only, got {kind!r}")
    details.update(provenance or {})
    return FrameOperator(kind, {"triv": 1.0, "adj": coefficient}, details)


def invert_frame(frame: FrameOperator) -> FrameOperator:
    """Coefficient-wise reciprocal"""
    if frame._origin is not None:
        return frame._origin
    for label, value in frame.coefficients.items():
        if value <= 0:
            raise CalibrationError(f"Frame coefficient {label}={value} is not invertible")
    reciprocal = {label: 1.0 / value for label, value in frame.coefficients.items()}
    return FrameOperator(frame.kind, reciprocal, frame.provenance, not frame.inverted, frame)


# ---------------------------------------------------------------------------
# Per-shot estimates
# ---------------------------------------------------------------------------

def round_robin(items: Sequence[Any], lengths: Sequence[int], key=lambda item: item.m) -> List[Any]:
    """Reorder length-major shots shot-index-major so every contiguous block mixes all lengths"""
    buckets: Dict[int, List[Any]] = {m: [] for m in lengths}
    for item in items:
        buckets[key(item)].append(item)
    ordered = []
    for row in zip(*buckets.values()):
        ordered.extend(row)
    return ordered


def _frame_for(frame: Union[FrameOperator, Mapping[int, FrameOperator]], m: int) -> FrameOperator:
    if isinstance(frame, FrameOperator):
        return frame
    if m not in frame:
        raise CalibrationError(f"No calibrated frame for circuit length {m}")
    return frame[m]


def estimate_observable(records: Sequence[Any], frame: Union[FrameOperator, Mapping[int, FrameOperator]],
                        observable: Observable) -> np.ndarray:
    """Per-record shadow estimate <<O| frame^-1 Ad^dag(g_end) |b>>"""
    if not records:
        return np.zeros(0)
    n = observable.n
    if records[0].g_end.n != n:
        raise ValidationError(f"Records on {records[0].g_end.n} qubits, observable on {n}")
    sample = _frame_for(frame, records[0].m)
    if sample.kind == "local":
        return _local_estimates(records, frame, observable)

    d = 2 ** n
    trace_term = observable.trace / d
    matrix = np.asarray(observable.matrix)
    values = np.empty(len(records))
    for i, record in enumerate(records):
        c_adj = _frame_for(frame, record.m).plain_coefficients()["adj"]
        psi = unitary_of(record.g_end)[record.outcome_index].conj()
        overlap = float(np.real(psi.conj() @ matrix @ psi))
        values[i] = trace_term + (overlap - trace_term) / c_adj
    return values


def _local_estimates(records: Sequence[Any], frame, observable: Observable) -> np.ndarray:
    """sum_P (o_P/d)(1/c_w(P)) <b|U P U^dag|b> with the factor-wise conjugation tables"""
    n = observable.n
    d = 2 ** n
    coefficients = np.asarray(observable.pauli_coefficients())
    active = np.flatnonzero(coefficients)
    digits = pauli_digits(n)[active].astype(np.int64)
    codes_table, signs_table = single_qubit_conjugation()
    values = np.empty(len(records))
    for i, record in enumerate(records):
        weights = _frame_for(frame, record.m).coefficient_vector(n, required=coefficients != 0)[active]
        indices = np.asarray(record.g_end.indices)
        bits = np.array([int(ch) for ch in record.b])
        codes = codes_table[indices[None, :], digits]
        signs = signs_table[indices[None, :], digits]
        diagonal_only = np.all((codes == 0) | (codes == 3), axis=1)
        flips = np.where(codes == 3, (-1) ** bits[None, :], 1)
        contributions = np.prod(np.where(codes == 0, 1, signs * flips), axis=1) * diagonal_only
        values[i] = float(np.sum(coefficients[active] * contributions / weights) / d)
    return values


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

def median_of_means(values: Sequence[float], K: int, N: Optional[int] = None) -> float:
    """Median of K contiguous group means (groups of min(N, len // K) values)"""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValidationError("median_of_means of an empty list")
    if K < 1:
        raise ValidationError("K must be >= 1")
    group_size = values.size // K
    if N is not None:
        group_size = min(group_size, int(N))
    if group_size < 1:
        raise ValidationError(f"{values.size} values cannot fill {K} groups")
    if K == 1:
        return float(np.mean(values[:group_size]))
    means = values[:K * group_size].reshape(K, group_size).mean(axis=1)
    return float(np.median(means))


def bootstrap_sigma(values: Sequence[float], K: int, resamples: int = config.DEFAULT_BOOTSTRAP_RESAMPLES,
                    rng: Optional[np.random.Generator] = None, N: Optional[int] = None) -> float:
    """Standard deviation of the median-of-means over resamples drawn with replacement"""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValidationError("bootstrap_sigma of an empty list")
    if resamples < 2:
        raise ValidationError("bootstrap needs at least 2 resamples")
    rng = rng or np.random.default_rng()
    statistics = np.empty(resamples)
    for k in range(resamples):
        sample = values[rng.integers(0, values.size, values.size)]
        statistics[k] = median_of_means(sample, K, N)
    return float(np.std(statistics, ddof=1))


def summarize_estimates(values: Sequence[float], observable: str, variant: str, K: int, N: Optional[int],
                        resamples: int, rng: np.random.Generator,
                        calibration: Optional[Dict[str, Any]] = None) -> EstimateReport:
    values = np.asarray(values, dtype=float)
    group_size = min(values.size // K, N) if N else values.size // K
    notes = []
    if calibration and calibration.get("source") == "rb-calibrated":
        notes.append("ratio estimator: calibrated frame divides by a fitted decay; small-sample bias not corrected")
    return EstimateReport(
        observable=observable,
        variant=variant,
        estimate=median_of_means(values, K, N),
        sigma=bootstrap_sigma(values, K, resamples, rng, N),
        groups=K,
        group_size=int(group_size),
        resamples=resamples,
        shots=int(values.size),
        calibration=dict(calibration or {}),
        notes=notes,
    )


def calibration_sigma(estimate: float, trace_term: float, lam: float, sigma_lam: float,
                      exponents: Sequence[int]) -> float:
    """First-order spread of a powered-frame estimate due to the fitted decay's uncertainty"""
    if not np.isfinite(sigma_lam) or lam <= 0:
        return float("nan")
    return float(abs(np.mean(exponents) / lam * (estimate - trace_term)) * sigma_lam)


# ---------------------------------------------------------------------------
# Predictions and bounds
# ---------------------------------------------------------------------------

def _adj_component(observable: Observable, rho: np.ndarray) -> float:
    return observable.expectation(rho) - observable.trace / observable.dim


def predict_uncalibrated_bias(lambda_z: float, observable: Observable, rho: np.ndarray) -> float:
    """(lambda_Z - 1)(Tr[O rho] - Tr[O]/d)"""
    return (lambda_z - 1.0) * _adj_component(observable, rho)


def predict_calibrated_bias(lambda_z: float, lambda_adj: float, observable: Observable, rho: np.ndarray) -> float:
    """(lambda_Z/lambda_adj - 1)(Tr[O rho] - Tr[O]/d) for a Clifford-RB calibrated frame"""
    if lambda_adj == 0:
        raise CalibrationError("lambda_adj vanishes")
    return (lambda_z / lambda_adj - 1.0) * _adj_component(observable, rho)


def variance_bounds(observable: Observable, lam: float, n: int) -> Tuple[float, Optional[float]]:
    """(dihedral bound c Tr[O^2], Clifford single-round bound); the Clifford bound is None at n=1"""
    if lam <= 0:
        raise CalibrationError(f"Decay parameter {lam} <= 0")
    trace = observable.trace
    square = float(np.trace(observable.matrix @ observable.matrix).real)
    dihedral = config.DIHEDRAL_VARIANCE_CONSTANT * square
    if n == 1:
        return dihedral, None
    d = 2 ** n
    clifford = (d + 1) * 2 ** (2 * n - 1) / (lam ** 2 * (d - 1) * (d * d - 4)) * (trace ** 2 + square)
    return dihedral, clifford


def ideal_fidelity_variance(n: int) -> float:
    """Exact single-shot variance of the noiseless Clifford-shadow fidelity estimate of a pure state"""
    d = 2 ** n
    return 2 * (d - 1) / (d + 2)


def filter_variance(values: Sequence[float], observable: Observable) -> float:
    """Sample variance of filter values per unit Tr[O_0^2], O_0 the traceless part"""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValidationError("filter_variance needs at least 2 values")
    square = float(np.trace(observable.matrix @ observable.matrix).real)
    traceless_square = square - observable.trace ** 2 / observable.dim
    if traceless_square <= 0:
        raise ValidationError(f"Observable {observable.name!r} has no traceless part")
    return float(np.var(values, ddof=1) / traceless_square)
