import numpy as np
import pandas as pd
import pytest

from shadowcal.bruteoracle import exact_estimate, exact_signal
from shadowcal.errors import CalibrationError, CapExceededError, ValidationError
from shadowcal.localshadow import (
    LocalFit, SupportPattern, all_patterns, build_local_frame, c_w_double_sum, c_w_oracle, check_pattern_cap,
    default_pattern_cap, fit_local_gateset, ideal_local_frame, oracle_local_frame, patterns_for_observables,
    run_local_gateset, run_local_shadow,
)
from shadowcal.noisechan import NoiseSpec, realize
from shadowcal.pauliliouville import Observable
from shadowcal.rbengine import DecaySample, ExperimentPlan, fit_decay_table
from shadowcal.shadowest import estimate_observable

NOISELESS = NoiseSpec("global-depolarizing", p=0.0)


def test_support_pattern_parsing():
    pattern = SupportPattern.parse("w=101", 3)
    assert pattern.bits == (1, 0, 1)
    assert pattern.weight == 2 and pattern.scale == 9
    assert pattern.qubits == (0, 2)
    assert pattern.key == "w=101" and str(pattern) == "101"
    assert SupportPattern.parse([0, 1], 2).label == "01"
    with pytest.raises(ValidationError):
        SupportPattern.parse("10", 3)
    with pytest.raises(ValidationError):
        SupportPattern((0, 2))


def test_default_pattern_cap():
    assert default_pattern_cap(1) == 2
    assert default_pattern_cap(2) == 3
    assert default_pattern_cap(3) == 4
    assert default_pattern_cap(8) == 5


def test_pattern_cap_enforced():
    check_pattern_cap(SupportPattern.parse("111", 3))
    with pytest.raises(CapExceededError):
        check_pattern_cap(SupportPattern.parse("110", 3), cap=1)


def test_all_patterns_order():
    assert [p.label for p in all_patterns(2)] == ["01", "10", "11"]
    assert [p.label for p in all_patterns(2, include_trivial=True)][0] == "00"
    assert [p.label for p in all_patterns(3, max_weight=1)] == ["001", "010", "100"]


def test_patterns_for_ghz_fidelity():
    labels = [p.label for p in patterns_for_observables([Observable.ghz_fidelity(3)], 3)]
    assert labels == ["011", "101", "110", "111"]
    with pytest.raises(CapExceededError):
        patterns_for_observables([Observable.ghz_fidelity(3)], 3, cap=2)
    with pytest.raises(ValidationError):
        patterns_for_observables([Observable.ghz_fidelity(2)], 3)


def test_c_w_oracle_values():
    p = 0.1
    noise = realize(NoiseSpec("local-depolarizing", p=p), 3)
    assert c_w_oracle(noise, "100") == pytest.approx((1 - p) / 3)
    assert c_w_oracle(noise, "111") == pytest.approx(((1 - p) / 3) ** 3)
    identity = realize(NOISELESS, 2)
    for pattern in all_patterns(2):
        assert c_w_oracle(identity, pattern) == pytest.approx(1 / pattern.scale)


def test_double_sum_matches_oracle_for_non_unital_noise():
    noise = realize(NoiseSpec("amplitude-damping", p=0.2, gamma=0.3), 2)
    for pattern in all_patterns(2):
        assert c_w_double_sum(noise, pattern, 2) == pytest.approx(c_w_oracle(noise, pattern, 2), abs=1e-12)


def test_noiseless_correlators():
    plan = ExperimentPlan("local-gateset", 1, (2,), 1000, NOISELESS, seed=11)
    samples = run_local_gateset(plan, ["1"])["1"]
    values = np.array([s.value for s in samples])
    assert set(np.unique(values)) <= {0.0, 9.0}
    assert values.mean() == pytest.approx(1.0, abs=0.35)


def test_gateset_validation():
    plan = ExperimentPlan("local-gateset", 2, (2, 3), 2, NOISELESS)
    with pytest.raises(ValidationError):
        run_local_gateset(plan, [])
    with pytest.raises(ValidationError):
        run_local_gateset(plan, ["00"])
    with pytest.raises(CapExceededError):
        run_local_gateset(plan, ["11"], cap=1)
    with pytest.raises(ValidationError):
        run_local_gateset(ExperimentPlan("dihedral-rb", 2, (2, 3), 2, NOISELESS), ["11"])


@pytest.mark.parametrize("spec", [
    NoiseSpec("local-depolarizing", p=0.1),
    NoiseSpec("amplitude-damping", p=0.1, gamma=0.2),
    NoiseSpec("bit-flip", p=0.05),
])
def test_exact_gateset_fits_recover_the_oracle(spec):
    n = 3
    plan = ExperimentPlan("local-gateset", n, (2, 3, 4), 1, spec)
    noise = realize(spec, n)
    for pattern in ("100", "110", "111"):
        table = exact_signal(plan, pattern)
        fit = LocalFit(SupportPattern.parse(pattern, n), fit_decay_table(table, "exp"))
        assert fit.coefficient == pytest.approx(c_w_oracle(noise, pattern), abs=1e-8)


def test_fit_local_gateset_divides_by_the_scale():
    samples = {"11": [DecaySample(m, 0.81 ** m, 0) for m in (2, 3, 4)]}
    fits = fit_local_gateset(samples)
    assert fits["11"].coefficient == pytest.approx(0.09, abs=1e-8)
    assert fits["11"].to_dict()["scale"] == 9


def test_build_local_frame():
    frame = build_local_frame({"w=01": 0.3, SupportPattern.parse("10", 2): 0.3, "11": 0.1},
                              [Observable.ghz_fidelity(2)])
    assert frame.coefficients["00"] == 1.0
    assert frame.coefficients["11"] == 0.1
    with pytest.raises(CalibrationError):
        build_local_frame({"01": 0.3}, [Observable.ghz_fidelity(2)])
    with pytest.raises(CalibrationError):
        build_local_frame({"11": 0.0})
    with pytest.raises(CalibrationError):
        build_local_frame({"11": float("nan")})
    with pytest.raises(ValidationError):
        build_local_frame({"11": 0.1, "101": 0.1})
    with pytest.raises(ValidationError):
        build_local_frame({})


def test_ideal_local_frame():
    frame = ideal_local_frame(2)
    assert frame.coefficients == pytest.approx({"00": 1.0, "01": 1 / 3, "10": 1 / 3, "11": 1 / 9})
    restricted = ideal_local_frame(2, [Observable.pauli_sum([("ZZ", 1.0)], 2)])
    assert set(restricted.coefficients) == {"00", "11"}


def test_local_shadow_validation():
    with pytest.raises(ValidationError):
        run_local_shadow(ExperimentPlan("local-shadow", 2, (1, 2), 2, NOISELESS))
    with pytest.raises(ValidationError):
        run_local_shadow(ExperimentPlan("clifford-shadow", 2, (1,), 2, NOISELESS))


def test_noiseless_local_shadow_estimate():
    n = 2
    observable = Observable.pauli_sum([("ZZ", 1.0)], n, "zz")
    plan = ExperimentPlan("local-shadow", n, (1,), 2000, NOISELESS, observables=(observable,), seed=5)
    records = run_local_shadow(plan)
    assert len(records) == 2000
    estimates = estimate_observable(records, ideal_local_frame(n, [observable]), observable)
    assert estimates.mean() == pytest.approx(1.0, abs=0.3)


def test_exact_local_shadow_calibration():
    n, p = 2, 0.1
    spec = NoiseSpec("local-depolarizing", p=p)
    observable = Observable.pauli_sum([("ZZ", 1.0)], n, "zz")
    plan = ExperimentPlan("local-shadow", n, (1,), 1, spec, observables=(observable,))
    calibrated = oracle_local_frame(realize(spec, n), [observable], n)
    assert exact_estimate(plan, observable, calibrated) == pytest.approx(1.0, abs=1e-12)
    uncalibrated = exact_estimate(plan, observable, ideal_local_frame(n, [observable]))
    assert uncalibrated == pytest.approx((1 - p) ** 2, abs=1e-12)


def test_exact_signal_table_shape():
    plan = ExperimentPlan("local-gateset", 2, (2, 3, 4), 1, NOISELESS)
    table = exact_signal(plan, "11")
    assert isinstance(table, pd.DataFrame)
    np.testing.assert_allclose(table["mean"], 1.0)
    assert list(table["m"]) == [2, 3, 4]
