"""
Randomized Measurement Protocols
Executable plans for dihedral/Clifford randomized benchmarking and the
self-calibrating shadow protocols, plus exponential decay fitting.
"""
import logging
from dataclasses import dataclass, field
from functools import partial
from multiprocessing import Pool
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import curve_fit

from shadowcal import config
from shadowcal.densitysim import DensityMatrix, prepare, run_sequence, sample_index, shot_rng
from shadowcal.errors import CapExceededError, ValidationError
from shadowcal.gategroups import GateSequence, GroupElement, sample_clifford, sample_dihedral, unitary_of
from shadowcal.noisechan import NoiseModel, NoiseSpec, realize
from shadowcal.pauliliouville import Observable

logger = logging.getLogger(__name__)

PROTOCOL_IDS = {
    "dihedral-rb": 1,
    "clifford-rb": 2,
    "selfcal-dihedral-shadow": 3,
    "clifford-shadow": 4,
    "local-gateset": 5,
    "local-shadow": 6,
}
RB_PROTOCOLS = ("dihedral-rb", "clifford-rb")
SHADOW_PROTOCOLS = ("selfcal-dihedral-shadow", "clifford-shadow")

FIT_MODELS = ("exp", "exp_offset", "double_exp")
DECAY_BOUNDS = (-0.1, 1.1)


class DecaySample(NamedTuple):
    """One shot's signal at circuit length m"""
    m: int
    value: float
    shot_id: int


class ShadowRecord(NamedTuple):
    """End gate, outcome bitstring (qubit 0 first) and circuit length of one shot"""
    g_end: GroupElement
    b: str
    m: int

    @property
    def outcome_index(self) -> int:
        return int(self.b, 2)


@dataclass(frozen=True, eq=False)
class ExperimentPlan:
    """Everything needed to simulate one protocol run"""
    protocol: str
    n: int
    lengths: Tuple[int, ...]
    shots_per_length: int
    noise: NoiseSpec
    observables: Tuple[Observable, ...] = ()
    seed: int = 0
    state: Optional[str] = None
    filter_observable: Optional[Observable] = None
    probe: str = "zeros"
    workers: int = 1
    state_matrix: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.protocol not in PROTOCOL_IDS:
            raise ValidationError(f"Unknown protocol {self.protocol!r}; expected one of {tuple(PROTOCOL_IDS)}")
        if self.n < 1:
            raise ValidationError("Plans need n >= 1")
        if self.n > config.SIMULATION_QUBIT_CAP:
            raise CapExceededError(f"Simulation is capped at n={config.SIMULATION_QUBIT_CAP}, got n={self.n}")
        lengths = tuple(int(m) for m in self.lengths)
        if not lengths:
            raise ValidationError("Plans need at least one sequence length")
        if any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise ValidationError(f"Sequence lengths must be strictly increasing: {lengths}")
        if lengths[0] < self.min_length:
            raise ValidationError(f"{self.protocol} needs lengths >= {self.min_length}, got {lengths[0]}")
        if self.shots_per_length < 1:
            raise ValidationError("shots_per_length must be >= 1")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "observables", tuple(self.observables))
        for observable in self.observables:
            if observable.n != self.n:
                raise ValidationError(f"Observable {observable.name!r} acts on {observable.n} qubits, plan has {self.n}")

    @property
    def protocol_id(self) -> int:
        return PROTOCOL_IDS[self.protocol]

    @property
    def min_length(self) -> int:
        if self.protocol == "selfcal-dihedral-shadow":
            return 0
        if self.protocol == "local-gateset":
            return 2
        return 1

    @property
    def state_name(self) -> str:
        if self.state:
            return self.state
        return "zeros" if self.protocol in RB_PROTOCOLS + ("local-gateset",) else "ghz"

    @property
    def total_shots(self) -> int:
        return self.shots_per_length * len(self.lengths)

    def initial_state(self) -> DensityMatrix:
        if self.protocol in RB_PROTOCOLS:
            return prepare("zeros", self.n)
        return prepare(self.state_name, self.n, self.state_matrix)

    def filter_matrix(self) -> np.ndarray:
        """Observable E in the shadow filter; defaults to the prepared state itself"""
        if self.filter_observable is not None:
            return np.asarray(self.filter_observable.matrix)
        return np.asarray(self.initial_state().entries)

    def realized_noise(self) -> NoiseModel:
        return realize(self.noise, self.n)

    def with_overrides(self, **changes) -> "ExperimentPlan":
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        values.update(changes)
        return ExperimentPlan(**values)


@dataclass
class ShotContext:
    """Read-only inputs shared by every shot worker"""
    plan: ExperimentPlan
    noise: NoiseModel
    state: DensityMatrix
    filter_matrix: Optional[np.ndarray] = None
    extras: Dict[str, Any] = field(default_factory=dict)


def run_shots(shot_fn: Callable, context: ShotContext, workers: int = 1) -> List[Any]:
    """Evaluate shot_fn(context, (length_index, shot_index)) for every shot, in task order"""
    plan = context.plan
    tasks = [(li, si) for li in range(len(plan.lengths)) for si in range(plan.shots_per_length)]
    logger.info("%s: %d shots over lengths %s (n=%d, %s noise)",
                plan.protocol, len(tasks), list(plan.lengths), plan.n, plan.noise.kind)
    if workers <= 1:
        return [shot_fn(context, task) for task in tasks]
    chunksize = max(1, len(tasks) // (4 * workers))
    with Pool(processes=workers) as pool:
        return pool.map(partial(shot_fn, context), tasks, chunksize=chunksize)


def filter_value(g_end: GroupElement, outcome: int, filter_matrix: np.ndarray) -> float:
    """(d+1)(<b|U E U^dag|b> - Tr[E]/d)"""
    d = filter_matrix.shape[0]
    psi = unitary_of(g_end)[outcome].conj()
    overlap = float(np.real(psi.conj() @ filter_matrix @ psi))
    return (d + 1) * (overlap - float(np.trace(filter_matrix).real) / d)


def _inverse_survival_shot(sampler: Callable, context: ShotContext, task: Tuple[int, int]) -> DecaySample:
    plan = context.plan
    li, si = task
    m = plan.lengths[li]
    rng = shot_rng(plan.seed, plan.protocol_id, li, si)
    sequence = GateSequence(plan.n, tuple(sampler(plan.n, rng) for _ in range(m))).with_inverse()
    final = run_sequence(context.state, sequence, context.noise)
    return DecaySample(m, 1.0 if sample_index(final, rng) == 0 else 0.0, si)


def _dihedral_rb_shot(context: ShotContext, task: Tuple[int, int]) -> DecaySample:
    return _inverse_survival_shot(sample_dihedral, context, task)


def _clifford_rb_shot(context: ShotContext, task: Tuple[int, int]) -> DecaySample:
    return _inverse_survival_shot(sample_clifford, context, task)


def _selfcal_shot(context: ShotContext, task: Tuple[int, int]) -> Tuple[ShadowRecord, DecaySample]:
    plan = context.plan
    li, si = task
    m = plan.lengths[li]
    rng = shot_rng(plan.seed, plan.protocol_id, li, si)
    elements = (sample_clifford(plan.n, rng),) + tuple(sample_dihedral(plan.n, rng) for _ in range(m))
    sequence = GateSequence(plan.n, elements)
    final = run_sequence(context.state, sequence, context.noise)
    outcome = sample_index(final, rng)
    g_end = sequence.end_gate
    record = ShadowRecord(g_end, format(outcome, f"0{plan.n}b"), m + 1)
    return record, DecaySample(m + 1, filter_value(g_end, outcome, context.filter_matrix), si)


def _clifford_shadow_shot(context: ShotContext, task: Tuple[int, int]) -> Tuple[ShadowRecord, DecaySample]:
    plan = context.plan
    li, si = task
    m = plan.lengths[li]
    rng = shot_rng(plan.seed, plan.protocol_id, li, si)
    sequence = GateSequence(plan.n, tuple(sample_clifford(plan.n, rng) for _ in range(m)))
    final = run_sequence(context.state, sequence, context.noise)
    outcome = sample_index(final, rng)
    g_end = sequence.end_gate
    record = ShadowRecord(g_end, format(outcome, f"0{plan.n}b"), m)
    return record, DecaySample(m, filter_value(g_end, outcome, context.filter_matrix), si)


def _context(plan: ExperimentPlan, with_filter: bool = False) -> ShotContext:
    state = plan.initial_state()
    filter_matrix = plan.filter_matrix() if with_filter else None
    return ShotContext(plan, plan.realized_noise(), state, filter_matrix)


def _check_protocol(plan: ExperimentPlan, allowed: Sequence[str]):
    if plan.protocol not in allowed:
        raise ValidationError(f"Plan protocol {plan.protocol!r} is not one of {tuple(allowed)}")


def run_dihedral_rb(plan: ExperimentPlan, workers: Optional[int] = None) -> List[DecaySample]:
    """CNOT-dihedral RB with a physical (noisy) inverse and all-zeros survival"""
    _check_protocol(plan, ("dihedral-rb",))
    return run_shots(_dihedral_rb_shot, _context(plan), workers or plan.workers)


def run_clifford_protocol(plan: ExperimentPlan,
                          workers: Optional[int] = None) -> Tuple[List[ShadowRecord], List[DecaySample]]:
    """clifford-rb: inverse survival; clifford-shadow: records plus filter values"""
    _check_protocol(plan, ("clifford-rb", "clifford-shadow"))
    if plan.protocol == "clifford-rb":
        return [], run_shots(_clifford_rb_shot, _context(plan), workers or plan.workers)
    results = run_shots(_clifford_shadow_shot, _context(plan, with_filter=True), workers or plan.workers)
    return [r for r, _ in results], [s for _, s in results]


def run_selfcal_shadow(plan: ExperimentPlan,
                       workers: Optional[int] = None) -> Tuple[List[ShadowRecord], List[DecaySample]]:
    """One Clifford followed by m dihedral gates; records and decay samples carry length m+1"""
    _check_protocol(plan, ("selfcal-dihedral-shadow",))
    results = run_shots(_selfcal_shot, _context(plan, with_filter=True), workers or plan.workers)
    return [r for r, _ in results], [s for _, s in results]


# ---------------------------------------------------------------------------
# Decay fitting
# ---------------------------------------------------------------------------

def length_table(samples: Sequence[DecaySample]) -> pd.DataFrame:
    """Per-length mean, standard error and shot count, sorted by m"""
    if not samples:
        raise ValidationError("No decay samples to tabulate")
    frame = pd.DataFrame(samples, columns=list(DecaySample._fields))
    grouped = frame.groupby("m")["value"]
    table = pd.DataFrame({
        "mean": grouped.mean(),
        "stderr": grouped.std(ddof=1).fillna(0.0) / np.sqrt(grouped.count()),
        "shots": grouped.count(),
    }).reset_index()
    return table.sort_values("m").reset_index(drop=True)


def _exp(m, a, lam):
    return a * lam ** m


def _exp_offset(m, a, lam, b):
    return a * lam ** m + b


def _double_exp(m, a, lam, a2, lam2, b):
    return a * lam ** m + a2 * lam2 ** m + b


_MODEL_FUNCTIONS = {"exp": _exp, "exp_offset": _exp_offset, "double_exp": _double_exp}
_PARAMETER_NAMES = {
    "exp": ("amplitude", "decay"),
    "exp_offset": ("amplitude", "decay", "offset"),
    "double_exp": ("amplitude", "decay", "second_amplitude", "second_decay", "offset"),
}


@dataclass
class DecayFit:
    """Fitted a*lam^m (+ b) with parameter standard errors and goodness of fit"""
    model: str
    amplitude: float
    decay: float
    offset: float = 0.0
    second_amplitude: Optional[float] = None
    second_decay: Optional[float] = None
    residual: float = 0.0
    stderr: Dict[str, float] = field(default_factory=dict)
    r_squared: float = 1.0
    converged: bool = True
    lengths: Tuple[int, ...] = ()

    @property
    def sigma_decay(self) -> float:
        return float(self.stderr.get("decay", float("nan")))

    @property
    def in_physical_range(self) -> bool:
        return 0.0 <= self.decay <= 1.0

    def predict(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        value = self.amplitude * self.decay ** m + self.offset
        if self.second_amplitude is not None:
            value = value + self.second_amplitude * self.second_decay ** m
        return value

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model,
            "lambda": self.decay,
            "sigma_lambda": self.sigma_decay,
            "amplitude": self.amplitude,
            "offset": self.offset,
            "second_amplitude": self.second_amplitude,
            "second_decay": self.second_decay,
            "residual": self.residual,
            "r2": self.r_squared,
            "converged": self.converged,
            "in_physical_range": self.in_physical_range,
            "stderr": dict(self.stderr),
            "lengths": list(self.lengths),
        }


def _initial_guess(m: np.ndarray, y: np.ndarray, model: str) -> List[float]:
    """Log-linear regression on |y - b0| with b0 from the longest length"""
    b0 = y[-1] if model != "exp" else 0.0
    shifted = np.abs(y - b0)
    usable = shifted > 1e-12
    if usable.sum() >= 2:
        slope, intercept = np.polyfit(m[usable], np.log(shifted[usable]), 1)
        lam0 = float(np.clip(np.exp(slope), 0.01, 1.0))
        a0 = float(np.sign(y[usable][0] - b0) * np.exp(intercept))
    else:
        lam0, a0 = 1.0, float(y[0] - b0) or 1.0
    if model == "exp":
        return [a0, lam0]
    if model == "exp_offset":
        return [a0, lam0, float(b0)]
    return [a0, lam0, 0.1 * a0, 0.5 * lam0, float(b0)]


def _bounds(model: str) -> Tuple[List[float], List[float]]:
    low, high = DECAY_BOUNDS
    if model == "exp":
        return [-np.inf, low], [np.inf, high]
    if model == "exp_offset":
        return [-np.inf, low, -np.inf], [np.inf, high, np.inf]
    return [-np.inf, low, -np.inf, low, -np.inf], [np.inf, high, np.inf, high, np.inf]


def _build_fit(model: str, params: Sequence[float], errors: Sequence[float], m: np.ndarray, y: np.ndarray,
               converged: bool) -> DecayFit:
    names = _PARAMETER_NAMES[model]
    values = dict(zip(names, (float(v) for v in params)))
    residual = float(np.sum((y - _MODEL_FUNCTIONS[model](m, *params)) ** 2))
    total = float(np.sum((y - y.mean()) ** 2))
    if total > 0:
        r_squared = 1.0 - residual / total
    else:
        r_squared = 1.0 if residual <= 1e-24 else float("-inf")
    return DecayFit(
        model=model,
        amplitude=values["amplitude"],
        decay=values["decay"],
        offset=values.get("offset", 0.0),
        second_amplitude=values.get("second_amplitude"),
        second_decay=values.get("second_decay"),
        residual=residual,
        stderr={name: float(e) for name, e in zip(names, errors)},
        r_squared=r_squared,
        converged=converged,
        lengths=tuple(int(v) for v in m),
    )


def _curve_fit(model: str, m: np.ndarray, y: np.ndarray, sigma: Optional[np.ndarray]) -> DecayFit:
    p0 = _initial_guess(m, y, model)
    low, high = _bounds(model)
    p0 = [float(np.clip(v, lo + 1e-9, hi - 1e-9)) for v, lo, hi in zip(p0, low, high)]
    try:
        params, pcov = curve_fit(
            _MODEL_FUNCTIONS[model], m, y, p0=p0, sigma=sigma, absolute_sigma=sigma is not None,
            bounds=(low, high), method="trf", ftol=1e-15, xtol=1e-15, gtol=1e-15, max_nfev=20000,
        )
    except RuntimeError as e:
        logger.warning("Decay fit (%s) did not converge: %s", model, e)
        # no estimate survives a failed fit; the initial guess is not a result
        nan = [float("nan")] * len(p0)
        return _build_fit(model, nan, nan, m, y, converged=False)
    with np.errstate(invalid="ignore"):
        errors = np.sqrt(np.diag(pcov))
    return _build_fit(model, params, errors, m, y, converged=True)


def fit_decay_table(table: pd.DataFrame, model: str = "exp_offset") -> DecayFit:
    """Weighted least squares on per-length means (columns m, mean and optionally stderr)"""
    if model not in FIT_MODELS:
        raise ValidationError(f"Unknown fit model {model!r}; expected one of {FIT_MODELS}")
    table = table.sort_values("m")
    m = table["m"].to_numpy(dtype=float)
    y = table["mean"].to_numpy(dtype=float)
    minimum = 5 if model == "double_exp" else 3
    if len(np.unique(m)) < minimum:
        raise ValidationError(f"The {model} model needs at least {minimum} distinct lengths, got {len(np.unique(m))}")
    if not np.any(y):
        raise ValidationError("All per-length means are zero; nothing to fit")

    sigma = None
    if "stderr" in table:
        stderr = table["stderr"].to_numpy(dtype=float)
        if np.all(stderr > 0):
            sigma = stderr

    if model == "exp_offset":
        # Prefer the offset-free solution when it already reproduces the data
        plain = _curve_fit("exp", m, y, sigma)
        if plain.converged and plain.residual <= 1e-20 * max(1.0, float(np.sum(y ** 2))):
            stderr = dict(plain.stderr, offset=0.0)
            return DecayFit("exp_offset", plain.amplitude, plain.decay, 0.0, residual=plain.residual,
                            stderr=stderr, r_squared=plain.r_squared, lengths=plain.lengths)
    return _curve_fit(model, m, y, sigma)


def fit_decay(samples: Sequence[DecaySample], model: str = "exp_offset") -> DecayFit:
    """Fit per-length means of shot samples"""
    return fit_decay_table(length_table(samples), model)
