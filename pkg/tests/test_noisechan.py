import numpy as np
import pytest

from shadowcal.errors import OracleUnavailableError, ValidationError
from shadowcal.gategroups import single_qubit_cliffords
from shadowcal.noisechan import (
    NoiseSpec, bias_ratio, closed_form_lambdas, overrotate, short_form_amplitude_damping_lambda_z, realize, rz, ry,
    zyz_angles,
)
from shadowcal.pauliliouville import SuperOp, lambda_adj_of, lambda_Z_of, pauli_vector, ptm_from_kraus

from conftest import phase_equal

GRID = [0.0, 0.05, 0.1, 0.3, 0.5]


def _random_state(rng, n):
    a = rng.normal(size=(2 ** n, 2 ** n)) + 1j * rng.normal(size=(2 ** n, 2 ** n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def test_noise_spec_validation():
    with pytest.raises(ValidationError):
        NoiseSpec("white-noise", p=0.1)
    with pytest.raises(ValidationError):
        NoiseSpec("bit-flip", p=1.5)
    with pytest.raises(ValidationError):
        NoiseSpec("amplitude-damping", gamma=-0.1)
    with pytest.raises(ValidationError):
        NoiseSpec("gate-dependent-cnot-depol", p=0.5, ratio=3.0)


def test_noise_spec_from_dict():
    spec = NoiseSpec.from_dict({"kind": "amplitude-damping", "params": {"p": 0.2, "gamma": 0.1}})
    assert spec == NoiseSpec("amplitude-damping", p=0.2, gamma=0.1)
    assert NoiseSpec.from_dict({"kind": "bit-flip", "p": 0.3}).p == 0.3
    assert NoiseSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ValidationError):
        NoiseSpec.from_dict({"kind": "bit-flip", "params": {"q": 0.1}})
    with pytest.raises(ValidationError):
        NoiseSpec.from_dict({"params": {"p": 0.1}})


def test_with_parameter_and_primary_parameter():
    spec = NoiseSpec("dephasing", p=0.1).with_parameter("p", 0.4)
    assert spec.p == 0.4
    assert NoiseSpec("coherent-overrotation", theta=0.02).primary_parameter == 0.02
    with pytest.raises(ValidationError):
        spec.with_parameter("kind", 1.0)


def test_noiseless_flags():
    assert realize(NoiseSpec("local-depolarizing", p=0.0), 2).is_noiseless
    assert realize(NoiseSpec("amplitude-damping", p=1.0, gamma=0.5), 2).is_noiseless
    assert realize(NoiseSpec("amplitude-damping", p=0.0, gamma=0.0), 2).is_noiseless
    assert not realize(NoiseSpec("amplitude-damping", p=0.0, gamma=0.1), 2).is_noiseless
    assert realize(NoiseSpec("coherent-overrotation", theta=0.0), 2).is_noiseless


def test_global_depolarizing_zero_is_identity():
    assert realize(NoiseSpec("global-depolarizing", p=0.0), 2).superop().allclose(SuperOp.identity(2))


def test_local_depolarizing_is_a_tensor_power():
    p = 0.1
    single = np.diag([1, 1 - p, 1 - p, 1 - p])
    superop = realize(NoiseSpec("local-depolarizing", p=p), 2).superop()
    np.testing.assert_allclose(superop.entries, np.kron(single, single), atol=1e-12)


@pytest.mark.parametrize("spec", [
    NoiseSpec("amplitude-damping", p=0.3, gamma=0.2),
    NoiseSpec("bit-flip", p=0.1),
    NoiseSpec("dephasing", p=0.4),
    NoiseSpec("global-depolarizing", p=0.2),
])
def test_channel_application_matches_superop(rng, spec):
    n = 2
    model = realize(spec, n)
    rho = _random_state(rng, n)
    direct = pauli_vector(model.channel.apply(rho), n)
    np.testing.assert_allclose(direct, model.superop().apply(pauli_vector(rho, n)), atol=1e-12)
    np.testing.assert_allclose(model.ptm_diagonal(), model.superop().diagonal(), atol=1e-12)
    via_kraus = sum(k @ rho @ k.conj().T for k in model.channel.kraus())
    np.testing.assert_allclose(via_kraus, model.channel.apply(rho), atol=1e-12)


def test_gate_dependent_channels():
    p, ratio = 0.02, 0.1
    model = realize(NoiseSpec("gate-dependent-cnot-depol", p=p, ratio=ratio), 3)
    assert model.mode == "gate-dependent"
    two_qubit = ptm_from_kraus(model.gate_channels["two_qubit"], 2)
    single_qubit = ptm_from_kraus(model.gate_channels["single_qubit"], 1)
    np.testing.assert_allclose(two_qubit.diagonal()[1:], 1 - p, atol=1e-12)
    np.testing.assert_allclose(single_qubit.diagonal()[1:], 1 - ratio * p, atol=1e-12)
    with pytest.raises(OracleUnavailableError):
        model.superop()
    with pytest.raises(OracleUnavailableError):
        closed_form_lambdas(model.spec, 3)


def test_gate_dependent_without_single_qubit_noise():
    model = realize(NoiseSpec("gate-dependent-cnot-depol", p=0.05), 2)
    assert "single_qubit" not in model.gate_channels


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("kind", ["global-depolarizing", "local-depolarizing", "bit-flip", "dephasing"])
def test_closed_forms_match_realized_channels(kind, n):
    for p in GRID:
        spec = NoiseSpec(kind, p=p)
        lambda_z, lambda_adj = closed_form_lambdas(spec, n)
        model = realize(spec, n)
        assert lambda_Z_of(model) == pytest.approx(lambda_z, abs=1e-9)
        assert lambda_adj_of(model) == pytest.approx(lambda_adj, abs=1e-9)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_amplitude_damping_closed_forms(n):
    for p in GRID:
        for gamma in (0.1, 0.4):
            spec = NoiseSpec("amplitude-damping", p=p, gamma=gamma)
            lambda_z, lambda_adj = closed_form_lambdas(spec, n)
            model = realize(spec, n)
            assert lambda_Z_of(model) == pytest.approx(lambda_z, abs=1e-9)
            assert lambda_adj_of(model) == pytest.approx(lambda_adj, abs=1e-9)


def test_short_form_amplitude_damping_expression_agrees_where_exact():
    for gamma in (0.1, 0.6):
        for p in GRID:
            spec = NoiseSpec("amplitude-damping", p=p, gamma=gamma)
            assert short_form_amplitude_damping_lambda_z(p, gamma, 1) == pytest.approx(closed_form_lambdas(spec, 1)[0])
        for n in (2, 3):
            for p in (0.0, 1.0):
                spec = NoiseSpec("amplitude-damping", p=p, gamma=gamma)
                assert short_form_amplitude_damping_lambda_z(p, gamma, n) == pytest.approx(
                    closed_form_lambdas(spec, n)[0])


def test_closed_form_examples():
    assert closed_form_lambdas(NoiseSpec("bit-flip", p=0.1), 2) == pytest.approx((0.7466666667, 0.7973333333))
    assert closed_form_lambdas(NoiseSpec("local-depolarizing", p=0.1), 2) == pytest.approx((0.87, 0.846))
    for kind in ("global-depolarizing", "local-depolarizing", "bit-flip", "dephasing", "amplitude-damping"):
        assert closed_form_lambdas(NoiseSpec(kind), 3) == pytest.approx((1.0, 1.0))


def test_bias_ratio_signs():
    assert bias_ratio(NoiseSpec("global-depolarizing", p=0.3), 3) == pytest.approx(0.0, abs=1e-15)
    assert bias_ratio(NoiseSpec("local-depolarizing", p=0.1), 2) == pytest.approx(0.0284, abs=1e-4)
    assert bias_ratio(NoiseSpec("bit-flip", p=0.1), 2) == pytest.approx(-0.0635, abs=1e-4)
    assert bias_ratio(NoiseSpec("dephasing", p=0.2), 2) > 0


def test_zyz_decomposition_reconstructs_unitaries(rng):
    for _ in range(20):
        q, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        alpha, phi, theta, lam = zyz_angles(q)
        np.testing.assert_allclose(np.exp(1j * alpha) * rz(phi) @ ry(theta) @ rz(lam), q, atol=1e-9)
    for g in single_qubit_cliffords():
        alpha, phi, theta, lam = zyz_angles(g.unitary())
        np.testing.assert_allclose(np.exp(1j * alpha) * rz(phi) @ ry(theta) @ rz(lam), g.unitary(), atol=1e-9)


def test_overrotation_by_zero_is_the_identity_map():
    for g in single_qubit_cliffords():
        assert phase_equal(overrotate(g.unitary(), 0.0), g.unitary())


def test_overrotation_leaves_identity_alone_and_perturbs_rotations():
    assert phase_equal(overrotate(np.eye(2), 0.1), np.eye(2))
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    assert not phase_equal(overrotate(h, 0.1), h)


def test_describe_records_decomposition():
    description = realize(NoiseSpec("coherent-overrotation", theta=0.05), 2).describe()
    assert description["mode"] == "gate-dependent"
    assert description["decomposition"] == "zyz-euler"
