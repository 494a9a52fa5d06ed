from pathlib import Path

import numpy as np
import pytest

from cli import EXIT_CAP, EXIT_INVALID, EXIT_OK, main
from file_handlers import ConfigLoader
from orchestrator import ExperimentOrchestrator, compare, load_summary, run_experiment
from shadowcal import rbengine
from shadowcal.errors import OracleUnavailableError, ValidationError
from shadowcal.localshadow import c_w_oracle
from shadowcal.noisechan import NoiseSpec, closed_form_lambdas, realize
from shadowcal.pauliliouville import Observable
from shadowcal.shadowest import predict_calibrated_bias

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

SAMPLED = {
    "name": "small_selfcal",
    "protocol": "selfcal-dihedral-shadow",
    "n": 2,
    "noise": {"kind": "bit-flip", "params": {"p": 0.1}},
    "lengths": [0, 1, 2],
    "total_shots": 1500,
    "observables": [{"name": "ghz_fidelity", "kind": "ghz-fidelity"}],
    "mom": {"K": 3, "N": 500},
    "bootstrap": {"resamples": 10},
    "seed": 21,
}


GATE_INDEPENDENT = [
    {"kind": "global-depolarizing", "params": {"p": 0.05}},
    {"kind": "local-depolarizing", "params": {"p": 0.05}},
    {"kind": "bit-flip", "params": {"p": 0.05}},
    {"kind": "amplitude-damping", "params": {"p": 0.1, "gamma": 0.2}},
    {"kind": "dephasing", "params": {"p": 0.2}},
]


def _by_variant(point):
    return {estimate["variant"]: estimate for estimate in point["estimates"]}


def _exact_run(path, **kwargs):
    orchestrator = ExperimentOrchestrator(ConfigLoader.load(str(path)), exact=True, **kwargs)
    return orchestrator, orchestrator.run()


def test_exact_selfcal_removes_global_depolarizing_bias(resolve):
    q = 0.9
    raw = {**SAMPLED, "noise": {"kind": "global-depolarizing", "params": {"p": 1 - q}},
           "calibrations": ["clifford-rb"], "calibration_lengths": [1, 2, 4, 8], "exact": True}
    summary = ExperimentOrchestrator(resolve(raw)).run()
    point = summary["points"][0]
    estimates = _by_variant(point)
    assert estimates["calibrated"]["estimate"] == pytest.approx(1.0, abs=1e-6)
    assert estimates["calibrated-clifford-rb"]["estimate"] == pytest.approx(1.0, abs=1e-6)
    shrunk = 0.25 + 0.75 * (q + q ** 2 + q ** 3) / 3
    assert estimates["uncalibrated"]["estimate"] == pytest.approx(shrunk, abs=1e-12)
    assert point["fits"]["selfcal-dihedral-shadow"]["lambda"] == pytest.approx(q, abs=1e-6)
    assert point["targets"]["ghz_fidelity"] == pytest.approx(1.0)


def test_exact_selfcal_is_unbiased_for_non_depolarizing_noise(resolve):
    for noise in ({"kind": "bit-flip", "params": {"p": 0.1}},
                  {"kind": "dephasing", "params": {"p": 0.2}}):
        summary = ExperimentOrchestrator(resolve({**SAMPLED, "noise": noise, "exact": True})).run()
        calibrated = _by_variant(summary["points"][0])["calibrated"]
        assert calibrated["estimate"] == pytest.approx(1.0, abs=1e-6)


def test_exact_clifford_shadow_keeps_the_predicted_bias():
    _, summary = _exact_run(CONFIG_DIR / "clifford_shadow_local_depolarizing_n3.json")
    point = summary["points"][0]
    n = 3
    spec = NoiseSpec("local-depolarizing", p=0.1)
    lambda_z, lambda_adj = closed_form_lambdas(spec, n)
    observable = Observable.ghz_fidelity(n)
    expected = predict_calibrated_bias(lambda_z, lambda_adj, observable, observable.matrix)
    calibrated = _by_variant(point)["calibrated"]["estimate"]
    assert calibrated - 1.0 == pytest.approx(expected, abs=1e-6)
    assert expected > 0
    predictions = point["bias_predictions"]["ghz_fidelity"]
    assert predictions["clifford_calibrated_bias"] == pytest.approx(expected)


def test_exact_dihedral_rb_recovers_lambda_z():
    _, summary = _exact_run(CONFIG_DIR / "dihedral_rb_n2.json")
    lambda_z, _ = closed_form_lambdas(NoiseSpec("local-depolarizing", p=0.05), 2)
    assert summary["points"][0]["fits"]["dihedral-rb"]["lambda"] == pytest.approx(lambda_z, abs=1e-8)


def test_exact_local_gateset_matches_the_oracle():
    orchestrator, summary = _exact_run(CONFIG_DIR / "local_gateset_n3.json")
    noise = realize(NoiseSpec("local-depolarizing", p=0.1), 3)
    local_fits = summary["points"][0]["local_fits"]
    assert sorted(local_fits) == sorted(orchestrator.config["patterns"])
    for label, entry in local_fits.items():
        assert entry["p_w"] == pytest.approx(c_w_oracle(noise, label), abs=1e-8)
        assert entry["c_w_oracle"] == pytest.approx(c_w_oracle(noise, label))


def test_exact_local_shadow():
    _, summary = _exact_run(CONFIG_DIR / "local_shadow_n2.json")
    estimates = _by_variant(summary["points"][0])
    assert estimates["calibrated"]["estimate"] == pytest.approx(1.0, abs=1e-6)
    assert estimates["uncalibrated"]["estimate"] == pytest.approx(0.81, abs=1e-12)


def test_exact_mode_refuses_gate_dependent_noise():
    with pytest.raises(OracleUnavailableError):
        _exact_run(CONFIG_DIR / "selfcal_cnot_depolarizing_n3.json")


@pytest.mark.parametrize("n", [2, 3, 4, 5])
@pytest.mark.parametrize("noise", GATE_INDEPENDENT, ids=lambda noise: noise["kind"])
def test_exact_selfcal_over_qubits_and_noise(resolve, n, noise):
    d = 2 ** n
    summary = ExperimentOrchestrator(resolve({**SAMPLED, "n": n, "noise": noise, "exact": True})).run()
    estimates = _by_variant(summary["points"][0])
    lambda_z, _ = closed_form_lambdas(NoiseSpec.from_dict(noise), n)
    shrink = np.mean([lambda_z ** L for L in (1, 2, 3)])
    assert estimates["calibrated"]["estimate"] == pytest.approx(1.0, abs=1e-9)
    assert estimates["uncalibrated"]["estimate"] == pytest.approx(1 / d + shrink * (1 - 1 / d), abs=1e-9)


@pytest.mark.parametrize("noise", GATE_INDEPENDENT[1:3], ids=lambda noise: noise["kind"])
def test_exact_fits_recover_the_decay_parameters(resolve, noise):
    lambda_z, lambda_adj = closed_form_lambdas(NoiseSpec.from_dict(noise), 2)
    cases = [
        ("dihedral-rb", [1, 2, 3, 4, 6, 8], lambda_z),
        ("clifford-rb", [1, 2, 3, 4, 6, 8], lambda_adj),
        ("selfcal-dihedral-shadow", [0, 1, 2, 3, 5, 7], lambda_z),
    ]
    for protocol, lengths, expected in cases:
        raw = {**SAMPLED, "protocol": protocol, "noise": noise, "lengths": lengths, "exact": True}
        fit = ExperimentOrchestrator(resolve(raw)).run()["points"][0]["fits"][protocol]
        assert fit["converged"]
        assert fit["lambda"] == pytest.approx(expected, abs=1e-8)
        assert fit["r2"] >= 1 - 1e-10


def test_failed_fit_leaves_only_the_uncalibrated_estimate(resolve, monkeypatch):
    def failing_curve_fit(*args, **kwargs):
        raise RuntimeError("Optimal parameters not found")

    monkeypatch.setattr(rbengine, "curve_fit", failing_curve_fit)
    orchestrator = ExperimentOrchestrator(resolve({**SAMPLED, "exact": True}))
    point = orchestrator.run()["points"][0]
    assert set(_by_variant(point)) == {"uncalibrated"}
    assert orchestrator.processing_stats["fits_flagged"] == 1
    assert any("did not converge" in warning for warning in point["warnings"])
    assert any("calibration from" in warning for warning in point["warnings"])


def test_sweep_points_follow_the_config(resolve):
    raw = {**SAMPLED, "noise": {"kind": "dephasing", "params": {"p": 0.0}}, "exact": True,
           "sweep": {"parameter": "p", "values": [0.0, 0.2, 0.4]}}
    orchestrator = ExperimentOrchestrator(resolve(raw))
    summary = orchestrator.run()
    assert [point["noise_param"] for point in summary["points"]] == [0.0, 0.2, 0.4]
    table = orchestrator.estimates_table()
    assert len(table) == 3 * 2
    assert set(table["variant"]) == {"uncalibrated", "calibrated"}


def test_sampled_runs_are_reproducible(tmp_path, write_config):
    path = write_config(SAMPLED)
    first, second, parallel = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    run_experiment(path, str(first))
    run_experiment(path, str(second))
    run_experiment(path, str(parallel), workers=2)
    names = sorted(p.name for p in first.iterdir())
    assert {"manifest.json", "summary.json", "lengths.csv", "estimates.csv"} <= set(names)
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes()
        assert (first / name).read_bytes() == (parallel / name).read_bytes()


def test_sampled_summary_contents(write_config):
    orchestrator = ExperimentOrchestrator.from_file(write_config(SAMPLED))
    summary = orchestrator.run()
    point = summary["points"][0]
    estimates = _by_variant(point)
    assert set(estimates) == {"uncalibrated", "calibrated"}
    for estimate in estimates.values():
        assert estimate["shots"] == 1500
        assert estimate["K"] == 3 and estimate["N"] == 500
        assert estimate["sigma"] >= 0
        assert estimate["predicted"] is not None
    assert orchestrator.processing_stats["shots_simulated"] == 1500
    assert "filter_variance" in point["variance"]
    assert point["variance"]["ghz_fidelity"]["clifford_bound"] is not None
    manifest = orchestrator.manifest()
    assert manifest["config"]["seed"] == 21
    assert "workers" not in manifest["config"]


def test_compare_identical_runs(tmp_path, write_config):
    path = write_config(SAMPLED)
    run_experiment(path, str(tmp_path / "a"))
    run_experiment(path, str(tmp_path / "b"))
    table = compare(load_summary(str(tmp_path / "a")), load_summary(str(tmp_path / "b" / "summary.json")))
    assert len(table) == 2
    assert table["passed"].all()
    assert (table["difference"] == 0).all()


def test_compare_rejects_different_observables(resolve):
    first = ExperimentOrchestrator(resolve({**SAMPLED, "exact": True})).run()
    raw = {**SAMPLED, "exact": True, "observables": [{"name": "zz", "kind": "pauli-sum", "terms": [{"pauli": "ZZ"}]}]}
    second = ExperimentOrchestrator(resolve(raw)).run()
    with pytest.raises(ValidationError):
        compare(first, second)


def test_compare_depolarizing_sweep(resolve):
    raw = {**SAMPLED, "noise": {"kind": "global-depolarizing", "params": {"p": 0.0}}, "exact": True,
           "sweep": {"parameter": "p", "values": [0.0, 0.05, 0.1]}}
    summary = ExperimentOrchestrator(resolve(raw)).run()
    table = compare(summary, summary)
    calibrated = table[table["variant"] == "calibrated"].sort_values("noise_param")
    uncalibrated = table[table["variant"] == "uncalibrated"].sort_values("noise_param")
    assert calibrated["bias_a"].abs().max() < 1e-9
    assert calibrated["predicted_calibrated_bias"].abs().max() < 1e-12
    assert uncalibrated["bias_a"].iloc[0] == pytest.approx(0.0, abs=1e-12)
    assert (uncalibrated["bias_a"].diff().dropna() < 0).all()
    assert (uncalibrated["predicted_uncalibrated_bias"].diff().dropna() < 0).all()


def test_compare_reports_clifford_overcompensation():
    _, summary = _exact_run(CONFIG_DIR / "clifford_shadow_local_depolarizing_n3.json")
    table = compare(summary, summary).set_index("variant")
    calibrated, uncalibrated = table.loc["calibrated"], table.loc["uncalibrated"]
    assert calibrated["prediction_source"] == "closed-form"
    # local depolarizing decays faster in adj than in Z, so Clifford calibration overshoots
    assert calibrated["predicted_calibrated_bias"] > 0
    assert calibrated["bias_a"] == pytest.approx(calibrated["predicted_calibrated_bias"], abs=1e-6)
    assert calibrated["oracle_bias"] == pytest.approx(calibrated["bias_a"], abs=1e-12)
    assert uncalibrated["predicted_uncalibrated_bias"] < 0
    assert uncalibrated["bias_a"] < 0


def test_gate_dependent_predictions_use_fitted_decays(resolve):
    raw = {**SAMPLED, "noise": {"kind": "gate-dependent-cnot-depol", "params": {"p": 0.05}},
           "calibrations": ["clifford-rb"], "calibration_lengths": [1, 2, 4]}
    summary = ExperimentOrchestrator(resolve(raw)).run()
    point = summary["points"][0]
    assert point["closed_form"] is None
    lambda_z = point["fits"]["selfcal-dihedral-shadow"]["lambda"]
    lambda_adj = point["fits"]["clifford-rb"]["lambda"]
    predictions = point["bias_predictions"]["ghz_fidelity"]
    assert predictions["source"] == "fitted"
    assert predictions["lambda_z"] == pytest.approx(lambda_z)
    assert predictions["lambda_adj"] == pytest.approx(lambda_adj)
    assert predictions["uncalibrated_bias"] == pytest.approx((lambda_z - 1) * 0.75)
    assert predictions["clifford_calibrated_bias"] == pytest.approx((lambda_z / lambda_adj - 1) * 0.75)

    table = compare(summary, summary)
    assert (table["prediction_source"] == "fitted").all()
    assert table["oracle_bias"].isna().all()
    assert table["predicted_uncalibrated_bias"].to_numpy() == pytest.approx((lambda_z - 1) * 0.75)


def test_cli_run_and_compare(tmp_path, write_config):
    path = write_config(SAMPLED)
    assert main(["run", path, "-o", str(tmp_path / "a")]) == EXIT_OK
    assert main(["run", path, "-o", str(tmp_path / "b"), "--workers", "2"]) == EXIT_OK
    output = tmp_path / "bias.csv"
    assert main(["compare", str(tmp_path / "a"), str(tmp_path / "b"), "-o", str(output)]) == EXIT_OK
    assert output.read_text().startswith("noise_param,observable,variant")


def test_cli_exit_codes(tmp_path, write_config):
    assert main(["run", str(tmp_path / "missing.json"), "-o", str(tmp_path / "out")]) == EXIT_INVALID
    invalid = write_config({**SAMPLED, "lengths": [2, 1]}, "invalid.json")
    assert main(["run", invalid, "-o", str(tmp_path / "out")]) == EXIT_INVALID
    gate_dependent = str(CONFIG_DIR / "selfcal_cnot_depolarizing_n3.json")
    assert main(["run", gate_dependent, "--exact", "-o", str(tmp_path / "out")]) == EXIT_INVALID
    capped = write_config({
        "protocol": "local-gateset", "n": 3, "noise": {"kind": "local-depolarizing", "params": {"p": 0.1}},
        "lengths": [2, 3, 4], "patterns": ["110"], "pattern_cap": 1, "shots_per_length": 5,
    }, "capped.json")
    assert main(["run", capped, "-o", str(tmp_path / "out")]) == EXIT_CAP


def test_figures(tmp_path, write_config):
    pytest.importorskip("matplotlib")
    from create_figures import create_decay_figure, create_sweep_figure
    raw = {**SAMPLED, "n": 1, "total_shots": 150, "mom": {"K": 3, "N": 50}, "bootstrap": {"resamples": 5},
           "sweep": {"parameter": "p", "values": [0.0, 0.1]}}
    run_experiment(write_config(raw), str(tmp_path / "run"))
    assert Path(create_sweep_figure(str(tmp_path / "run"))).exists()
    assert Path(create_decay_figure(str(tmp_path / "run"))).exists()
