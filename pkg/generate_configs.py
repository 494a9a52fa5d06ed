"""
Generate experiment configs for the standard calibration studies
"""
import json
import os

GHZ_FIDELITY = {"name": "ghz_fidelity", "kind": "ghz-fidelity"}
SWEEP_VALUES = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]


def selfcal_config(n, noise, seed=7, **extra):
    """Self-calibrating dihedral shadows estimating the GHZ fidelity"""
    config = {
        "name": f"selfcal_{noise['kind']}_n{n}",
        "protocol": "selfcal-dihedral-shadow",
        "n": n,
        "noise": noise,
        "lengths": [0, 1, 2, 3, 4],
        "observables": [GHZ_FIDELITY],
        "mom": {"K": 10, "N": 10000},
        "bootstrap": {"resamples": 200},
        "seed": seed,
    }
    config.update(extra)
    return config


def build_configs():
    """All configs, keyed by file name"""
    configs = {
        "selfcal_depolarizing_n2.json": selfcal_config(
            2, {"kind": "global-depolarizing", "params": {"p": 0.05}}, total_shots=20000),
        "selfcal_amplitude_damping_sweep_n4.json": selfcal_config(
            4, {"kind": "amplitude-damping", "params": {"p": 0.0, "gamma": 0.1}},
            sweep={"parameter": "p", "values": SWEEP_VALUES}, lengths=[0, 1, 2],
            calibrations=["clifford-rb"], calibration_lengths=[1, 2, 4, 8]),
        "selfcal_dephasing_sweep_n4.json": selfcal_config(
            4, {"kind": "dephasing", "params": {"p": 0.0}},
            sweep={"parameter": "p", "values": SWEEP_VALUES}),
        "selfcal_cnot_depolarizing_n3.json": selfcal_config(
            3, {"kind": "gate-dependent-cnot-depol", "params": {"p": 0.02, "ratio": 0.1}},
            sweep={"parameter": "p", "values": [0.02, 0.05, 0.1]}),
        "clifford_shadow_local_depolarizing_n3.json": {
            "name": "clifford_shadow_local_depolarizing_n3",
            "protocol": "clifford-shadow",
            "n": 3,
            "noise": {"kind": "local-depolarizing", "params": {"p": 0.1}},
            "lengths": [1, 2, 3, 4],
            "observables": [GHZ_FIDELITY],
            "seed": 11,
            "exact": True,
        },
        "dihedral_rb_n2.json": {
            "name": "dihedral_rb_n2",
            "protocol": "dihedral-rb",
            "n": 2,
            "noise": {"kind": "local-depolarizing", "params": {"p": 0.05}},
            "lengths": [1, 2, 4, 8, 16, 32],
            "total_shots": 30000,
            "seed": 3,
        },
        "local_gateset_n3.json": {
            "name": "local_gateset_n3",
            "protocol": "local-gateset",
            "n": 3,
            "noise": {"kind": "local-depolarizing", "params": {"p": 0.1}},
            "lengths": [2, 3, 4],
            "patterns": ["100", "010", "001", "110", "101", "011"],
            "shots_per_length": 20000,
            "seed": 5,
        },
        "local_shadow_n2.json": {
            "name": "local_shadow_n2",
            "protocol": "local-shadow",
            "n": 2,
            "noise": {"kind": "local-depolarizing", "params": {"p": 0.1}},
            "lengths": [1],
            "observables": [{"name": "zz", "kind": "pauli-sum", "terms": [{"pauli": "ZZ", "coeff": 1.0}]}],
            "local_calibration": {"lengths": [2, 3, 4], "shots_per_length": 20000},
            "total_shots": 20000,
            "seed": 9,
        },
    }
    return configs


def generate_configs(directory='configs'):
    """Write every config as pretty JSON"""
    os.makedirs(directory, exist_ok=True)
    configs = build_configs()
    for filename, config in sorted(configs.items()):
        with open(os.path.join(directory, filename), 'w') as f:
            json.dump(config, f, indent=2, sort_keys=True)
            f.write("\n")
        print(f"  - {filename}: {config['protocol']} (n={config['n']}, {config['noise']['kind']})")

    print(f"\nGenerated {len(configs)} experiment configs in: {directory}/")
    return configs


if __name__ == "__main__":
    generate_configs()
