import numpy as np
import pytest

from shadowcal.errors import CalibrationError, ValidationError
from shadowcal.gategroups import LocalCliffordElement, single_qubit_cliffords, unitary_of
from shadowcal.pauliliouville import Observable, ghz_vector
from shadowcal.rbengine import DecaySample, ShadowRecord
from shadowcal.shadowest import (
    FrameOperator, bootstrap_sigma, build_frame, calibration_sigma, estimate_observable, filter_variance,
    ideal_fidelity_variance, ideal_frame, invert_frame, median_of_means, predict_calibrated_bias,
    predict_uncalibrated_bias, round_robin, summarize_estimates, variance_bounds,
)


def _all_outcomes(elements, rho):
    """Every (end gate, outcome) record at one qubit, with its Born weight over a uniform group"""
    records, weights = [], []
    for g in elements:
        u = unitary_of(g)
        for b in range(2):
            probability = float(np.real(u[b] @ rho @ u[b].conj()))
            records.append(ShadowRecord(g, str(b), 1))
            weights.append(probability / len(elements))
    return records, np.array(weights)


def _plus_state():
    psi = ghz_vector(1)
    return np.outer(psi, psi.conj())


def test_ideal_frame():
    frame = ideal_frame(2)
    assert frame.coefficients == {"triv": 1.0, "adj": 0.2}
    assert frame.provenance["source"] == "ideal"


def test_build_frame_examples():
    assert build_frame("global", 0.9, 1).coefficients["adj"] == pytest.approx(0.3)
    dihedral = build_frame("global-powered", 0.9, 2, m=3)
    assert dihedral.coefficients["adj"] == pytest.approx(0.13122)
    assert dihedral.provenance["exponent"] == 4
    clifford = build_frame("global-powered", 0.9, 2, m=4, scheme="clifford")
    assert clifford.coefficients["adj"] == pytest.approx(0.13122)


def test_build_frame_errors():
    with pytest.raises(CalibrationError):
        build_frame("global", 0.0, 2)
    with pytest.raises(CalibrationError):
        build_frame("global-powered", float("nan"), 2, m=1)
    with pytest.raises(CalibrationError):
        build_frame("global", -0.2, 2)
    with pytest.raises(ValidationError):
        build_frame("global", 1.2, 2)
    with pytest.raises(ValidationError):
        build_frame("global-powered", 0.9, 2)
    with pytest.raises(ValidationError):
        build_frame("global-powered", 0.9, 2, m=2, scheme="pauli")
    with pytest.raises(ValidationError):
        build_frame("local", 0.9, 2)


def test_frame_validation():
    with pytest.raises(ValidationError):
        FrameOperator("global", {"triv": 1.0})
    with pytest.raises(ValidationError):
        FrameOperator("twirled", {"triv": 1.0, "adj": 0.5})
    assert FrameOperator("local", {"w=10": 0.5}).coefficients == {"10": 0.5}


def test_invert_frame():
    frame = build_frame("global", 0.9, 1)
    inverse = invert_frame(frame)
    assert inverse.inverted
    assert inverse.coefficients["adj"] == pytest.approx(1 / 0.3)
    assert inverse.plain_coefficients()["adj"] == pytest.approx(0.3)
    assert invert_frame(inverse) is frame
    singular = FrameOperator("global", {"triv": 1.0, "adj": 0.0})
    assert not singular.is_invertible()
    with pytest.raises(CalibrationError):
        invert_frame(singular)


def test_local_coefficient_vector():
    frame = FrameOperator("local", {"01": 0.5, "10": 0.25})
    vector = frame.coefficient_vector(2)
    assert vector[0] == 1.0
    assert vector[1] == 0.5
    assert vector[4] == 0.25
    assert np.isnan(vector[5])
    with pytest.raises(CalibrationError):
        frame.coefficient_vector(2, required=np.arange(16) == 5)


def test_maximally_mixed_state_gives_the_trace_term():
    observable = Observable.dense(np.diag([1.0, 0.0]), "p0")
    records, weights = _all_outcomes(single_qubit_cliffords(), np.eye(2) / 2)
    for frame in (ideal_frame(1), build_frame("global", 0.7, 1)):
        estimates = estimate_observable(records, frame, observable)
        assert float(weights @ estimates) == pytest.approx(0.5)


def test_noiseless_fidelity_estimate_is_unbiased():
    rho = _plus_state()
    records, weights = _all_outcomes(single_qubit_cliffords(), rho)
    estimates = estimate_observable(records, ideal_frame(1), Observable.ghz_fidelity(1))
    assert float(weights @ estimates) == pytest.approx(1.0)
    variance = float(weights @ estimates ** 2) - 1.0
    assert variance == pytest.approx(ideal_fidelity_variance(1))


def test_per_length_frames():
    g = single_qubit_cliffords()[3]
    records = [ShadowRecord(g, "0", 1), ShadowRecord(g, "0", 2)]
    frames = {1: build_frame("global-powered", 0.9, 1, m=0), 2: build_frame("global-powered", 0.9, 1, m=1)}
    observable = Observable.ghz_fidelity(1)
    values = estimate_observable(records, frames, observable)
    expected = [estimate_observable(records[:1], frames[1], observable)[0],
                estimate_observable(records[1:], frames[2], observable)[0]]
    np.testing.assert_allclose(values, expected)
    with pytest.raises(CalibrationError):
        estimate_observable([ShadowRecord(g, "0", 3)], frames, observable)


def test_estimate_qubit_mismatch():
    records = [ShadowRecord(single_qubit_cliffords()[0], "0", 1)]
    with pytest.raises(ValidationError):
        estimate_observable(records, ideal_frame(2), Observable.ghz_fidelity(2))
    assert estimate_observable([], ideal_frame(1), Observable.ghz_fidelity(1)).size == 0


def test_local_estimates_are_unbiased():
    rho = np.diag([1.0, 0.0])
    elements = [LocalCliffordElement((k,)) for k in range(24)]
    records, weights = _all_outcomes(elements, rho)
    frame = FrameOperator("local", {"1": 1 / 3})
    for letter, expected in (("Z", 1.0), ("X", 0.0)):
        observable = Observable.pauli_sum([(letter, 1.0)], 1)
        estimates = estimate_observable(records, frame, observable)
        assert float(weights @ estimates) == pytest.approx(expected, abs=1e-12)


def test_local_estimates_need_every_pattern():
    records = [ShadowRecord(LocalCliffordElement((0, 0)), "00", 1)]
    frame = FrameOperator("local", {"01": 0.5})
    with pytest.raises(CalibrationError):
        estimate_observable(records, frame, Observable.pauli_sum([("ZI", 1.0)], 2))


def test_round_robin_interleaves_lengths():
    items = [DecaySample(m, float(i), i) for m in (1, 2) for i in range(3)]
    ordered = round_robin(items, (1, 2))
    assert [(s.m, s.shot_id) for s in ordered] == [(1, 0), (2, 0), (1, 1), (2, 1), (1, 2), (2, 2)]


def test_median_of_means():
    values = [1, 2, 3, 4, 100, 6]
    assert median_of_means(values, 3) == pytest.approx(3.5)
    assert median_of_means(values, 1) == pytest.approx(116 / 6)
    assert median_of_means([1, 2, 3, 4], 2, N=1) == pytest.approx(1.5)
    with pytest.raises(ValidationError):
        median_of_means([], 2)
    with pytest.raises(ValidationError):
        median_of_means([1, 2], 0)
    with pytest.raises(ValidationError):
        median_of_means([1, 2], 3)


def test_bootstrap_sigma():
    assert bootstrap_sigma([0.5] * 20, 4, 10, np.random.default_rng(0)) == 0.0
    values = np.random.default_rng(1).normal(size=200)
    first = bootstrap_sigma(values, 5, 50, np.random.default_rng(2))
    assert first == bootstrap_sigma(values, 5, 50, np.random.default_rng(2))
    assert 0.03 < first < 0.2
    with pytest.raises(ValidationError):
        bootstrap_sigma(values, 5, 1)
    with pytest.raises(ValidationError):
        bootstrap_sigma([], 5, 10)


def test_summarize_estimates_records_settings():
    report = summarize_estimates(np.ones(30), "fid", "calibrated", 3, 10, 20, np.random.default_rng(0),
                                 {"source": "rb-calibrated", "lambda": 0.9})
    assert report.estimate == 1.0 and report.sigma == 0.0
    assert report.to_dict()["K"] == 3 and report.to_dict()["N"] == 10
    assert report.shots == 30
    assert report.notes


def test_calibration_sigma():
    assert calibration_sigma(0.8, 0.25, 0.9, 0.01, [1, 2, 3]) == pytest.approx(2 / 0.9 * 0.55 * 0.01)
    assert np.isnan(calibration_sigma(0.8, 0.25, 0.9, float("nan"), [1]))


def test_bias_predictors():
    rho = _plus_state()
    fidelity = Observable.ghz_fidelity(1)
    assert predict_uncalibrated_bias(0.65, fidelity, rho) == pytest.approx(-0.175)
    assert predict_calibrated_bias(0.9, 0.9, fidelity, rho) == pytest.approx(0.0)
    assert predict_calibrated_bias(0.87, 0.846, Observable.ghz_fidelity(2), np.eye(4) / 4) == pytest.approx(0.0)
    with pytest.raises(CalibrationError):
        predict_calibrated_bias(0.9, 0.0, fidelity, rho)


def test_variance_bounds():
    observable = Observable.pauli_sum([("ZI", 0.5)], 2)
    dihedral, clifford = variance_bounds(observable, 1.0, 2)
    assert dihedral == pytest.approx(3.0)
    assert clifford == pytest.approx(10 / 9)
    assert variance_bounds(observable, 0.5, 2)[1] == pytest.approx(40 / 9)
    assert variance_bounds(Observable.ghz_fidelity(1), 1.0, 1)[1] is None
    with pytest.raises(CalibrationError):
        variance_bounds(observable, 0.0, 2)


def test_ideal_fidelity_variance():
    assert ideal_fidelity_variance(1) == pytest.approx(0.5)
    assert ideal_fidelity_variance(2) == pytest.approx(1.0)


def test_filter_variance():
    observable = Observable.pauli_sum([("ZI", 0.5)], 2)
    assert filter_variance([1.0, -1.0, 1.0, -1.0], observable) == pytest.approx(4 / 3)
    with pytest.raises(ValidationError):
        filter_variance([1.0], observable)
    with pytest.raises(ValidationError):
        filter_variance([1.0, 2.0], Observable.pauli_sum([("II", 1.0)], 2))
