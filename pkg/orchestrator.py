"""
Main Orchestrator for Shadow Calibration Experiments
Coordinates protocol runs, decay fits, calibrated estimates and result artifacts
"""
import hashlib
import json
import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from file_handlers import LENGTH_COLUMNS, ConfigLoader, ReportExporter
from shadowcal import __version__, bruteoracle, config
from shadowcal.densitysim import shot_rng
from shadowcal.errors import CalibrationError, CapExceededError, OracleUnavailableError, ValidationError
from shadowcal.localshadow import (
    LOCAL_SCALE_CONVENTION, LocalFit, SupportPattern, all_patterns, build_local_frame, c_w_oracle,
    check_pattern_cap, default_pattern_cap, ideal_local_frame, patterns_for_observables, run_local_gateset,
    run_local_shadow,
)
from shadowcal.noisechan import OVERROTATION_DECOMPOSITION, NoiseSpec, closed_form_lambdas, realize
from shadowcal.pauliliouville import Observable
from shadowcal.rbengine import (
    PROTOCOL_IDS, DecayFit, ExperimentPlan, fit_decay_table, length_table, run_clifford_protocol,
    run_dihedral_rb, run_selfcal_shadow,
)
from shadowcal.shadowest import (
    EstimateReport, FrameOperator, build_frame, calibration_sigma, estimate_observable, filter_variance,
    ideal_frame, predict_calibrated_bias, predict_uncalibrated_bias, round_robin, summarize_estimates,
    variance_bounds,
)

logger = logging.getLogger("orchestrator")

# Bootstrap substreams sit above every shot length index
BOOTSTRAP_STREAM = 1_000_000

# Fits that stand in for the closed forms when the noise has none
LAMBDA_Z_FITS = ("selfcal-dihedral-shadow", "dihedral-rb")
LAMBDA_ADJ_FITS = ("clifford-rb", "clifford-shadow")

FrameChoice = Union[FrameOperator, Dict[int, FrameOperator]]


class ExperimentOrchestrator:
    def __init__(self, experiment: Dict[str, Any], exact: Optional[bool] = None, workers: Optional[int] = None):
        self.config = experiment
        self.exact = experiment['exact'] if exact is None else bool(exact)
        self.workers = workers or experiment['workers']
        n = experiment['n']
        self.observables = [ConfigLoader.build_observable(entry, n) for entry in experiment['observables']]
        self.filter_observable = None
        if experiment.get('filter_observable'):
            self.filter_observable = ConfigLoader.build_observable(experiment['filter_observable'], n)

        self.points: List[Dict[str, Any]] = []
        self.length_tables: List[pd.DataFrame] = []
        self.calibration_tables: Dict[str, List[pd.DataFrame]] = {}
        self.pattern_tables: Dict[str, List[pd.DataFrame]] = {}
        self.processing_stats = {
            "points_total": 0,
            "points_processed": 0,
            "shots_simulated": 0,
            "fits": 0,
            "fits_flagged": 0,
        }

    @classmethod
    def from_file(cls, filepath: str, **kwargs) -> "ExperimentOrchestrator":
        """Load and resolve an experiment config"""
        return cls(ConfigLoader.load(filepath), **kwargs)

    @property
    def n(self) -> int:
        return self.config['n']

    @property
    def protocol(self) -> str:
        return self.config['protocol']

    def noise_points(self) -> List[NoiseSpec]:
        """One noise spec, or one per sweep value"""
        base = NoiseSpec.from_dict(self.config['noise'])
        sweep = self.config.get('sweep')
        if not sweep:
            return [base]
        return [base.with_parameter(sweep['parameter'], value) for value in sweep['values']]

    def build_plan(self, noise: NoiseSpec, protocol: Optional[str] = None, lengths: Optional[List[int]] = None,
                   shots_per_length: Optional[int] = None) -> ExperimentPlan:
        protocol = protocol or self.protocol
        own = protocol == self.protocol
        return ExperimentPlan(
            protocol=protocol,
            n=self.n,
            lengths=tuple(lengths or self.config['lengths']),
            shots_per_length=shots_per_length or self.config['shots_per_length'],
            noise=noise,
            observables=tuple(self.observables) if own else (),
            seed=self.config['seed'],
            state=self.config['state'] if own else None,
            filter_observable=self.filter_observable if own else None,
            probe=self.config['probe'],
            workers=self.workers,
        )

    # ------------------------------------------------------------------
    # Running
    # ------------------------------------------------------------------

    def run(self) -> Dict[str, Any]:
        """Run every noise point in order and return the summary"""
        points = self.noise_points()
        self.processing_stats["points_total"] = len(points)
        started = time.time()
        for index, noise in enumerate(points):
            logger.info("Noise point %d/%d: %s %s=%g", index + 1, len(points), noise.kind,
                        self.config['sweep']['parameter'] if self.config.get('sweep') else "p",
                        noise.primary_parameter)
            self.points.append(self.run_point(index, noise))
            self.processing_stats["points_processed"] += 1
        logger.info("Finished %d points in %.2fs", len(points), time.time() - started)
        return self.summary()

    def run_point(self, index: int, noise: NoiseSpec) -> Dict[str, Any]:
        """Run the configured protocol at one noise setting"""
        point = {
            "index": index,
            "noise": noise.to_dict(),
            "noise_param": noise.primary_parameter,
            "fits": {},
            "estimates": [],
            "warnings": [],
        }
        if self.protocol in ("dihedral-rb", "clifford-rb"):
            self._run_rb(point, noise)
        elif self.protocol in ("selfcal-dihedral-shadow", "clifford-shadow"):
            self._run_global_shadow(point, index, noise)
        elif self.protocol == "local-gateset":
            self._run_local_gateset(point, noise)
        else:
            self._run_local_shadow(point, index, noise)
        point["closed_form"] = self._closed_form(noise)
        point["bias_predictions"] = self._bias_predictions(point, noise)
        return point

    def _signal_table(self, plan: ExperimentPlan, samples=None, pattern: Optional[str] = None,
                      count: bool = True) -> pd.DataFrame:
        if self.exact:
            return bruteoracle.exact_signal(plan, pattern)
        if count:
            self.processing_stats["shots_simulated"] += plan.total_shots
        return length_table(samples)

    def _fit(self, table: pd.DataFrame, model: str, label: str, point: Dict[str, Any]) -> DecayFit:
        fit = fit_decay_table(table, model)
        self.processing_stats["fits"] += 1
        if not fit.converged:
            self.processing_stats["fits_flagged"] += 1
            point["warnings"].append(f"fit '{label}' did not converge")
        elif not fit.in_physical_range:
            point["warnings"].append(f"fit '{label}' decay {fit.decay:.6g} outside [0, 1]")
        return fit

    def _tag(self, plan: ExperimentPlan, table: pd.DataFrame) -> pd.DataFrame:
        tagged = table[["m", "mean", "stderr", "shots"]].copy()
        tagged.insert(0, "noise_param", plan.noise.primary_parameter)
        tagged.insert(0, "noise_kind", plan.noise.kind)
        tagged.insert(0, "n", plan.n)
        tagged.insert(0, "protocol", plan.protocol)
        return tagged[LENGTH_COLUMNS]

    def _run_rb(self, point: Dict[str, Any], noise: NoiseSpec):
        plan = self.build_plan(noise)
        samples = None
        if not self.exact:
            if plan.protocol == "dihedral-rb":
                samples = run_dihedral_rb(plan, self.workers)
            else:
                _, samples = run_clifford_protocol(plan, self.workers)
        table = self._signal_table(plan, samples)
        self.length_tables.append(self._tag(plan, table))
        point["fits"][plan.protocol] = self._fit(table, self.config['fit_model'], plan.protocol, point).to_dict()

    def _calibration_fit(self, point: Dict[str, Any], noise: NoiseSpec, protocol: str) -> DecayFit:
        """Separate RB run whose decay calibrates the shadow frame"""
        plan = self.build_plan(noise, protocol=protocol, lengths=self.config['calibration_lengths'])
        samples = None
        if not self.exact:
            samples = run_dihedral_rb(plan, self.workers) if protocol == "dihedral-rb" \
                else run_clifford_protocol(plan, self.workers)[1]
        table = self._signal_table(plan, samples)
        self.calibration_tables.setdefault(protocol, []).append(self._tag(plan, table))
        fit = self._fit(table, "exp_offset", protocol, point)
        point["fits"][protocol] = fit.to_dict()
        return fit

    def _powered_frames(self, fit: DecayFit, lengths: List[int], scheme: str, source: str,
                        point: Dict[str, Any]) -> Optional[Dict[int, FrameOperator]]:
        provenance = {"protocol": source, "sigma_lambda": fit.sigma_decay}
        try:
            if scheme == "dihedral":
                return {L: build_frame("global-powered", fit.decay, self.n, m=L - 1, scheme="dihedral",
                                       provenance=provenance) for L in lengths}
            return {L: build_frame("global-powered", fit.decay, self.n, m=L, scheme="clifford",
                                   provenance=provenance) for L in lengths}
        except (CalibrationError, ValidationError) as e:
            point["warnings"].append(f"calibration from {source} skipped: {e}")
            return None

    def _run_global_shadow(self, point: Dict[str, Any], index: int, noise: NoiseSpec):
        plan = self.build_plan(noise)
        records, samples = [], None
        if not self.exact:
            runner = run_selfcal_shadow if plan.protocol == "selfcal-dihedral-shadow" else run_clifford_protocol
            records, samples = runner(plan, self.workers)
        table = self._signal_table(plan, samples)
        self.length_tables.append(self._tag(plan, table))
        fit = self._fit(table, self.config['fit_model'], plan.protocol, point)
        point["fits"][plan.protocol] = fit.to_dict()

        lengths = [int(L) for L in table["m"]]
        variants: List[Tuple[str, FrameChoice, Optional[DecayFit]]] = [("uncalibrated", ideal_frame(self.n), None)]
        scheme = "dihedral" if plan.protocol == "selfcal-dihedral-shadow" else "clifford"
        frames = self._powered_frames(fit, lengths, scheme, plan.protocol, point)
        if frames:
            variants.append(("calibrated", frames, fit))
        for protocol in self.config['calibrations']:
            separate = self._calibration_fit(point, noise, protocol)
            frames = self._powered_frames(separate, lengths, "clifford", protocol, point)
            if frames:
                variants.append((f"calibrated-{protocol}", frames, separate))

        ordered = round_robin(records, lengths) if records else []
        point["estimates"] = self._estimate_all(plan, index, ordered, variants)
        point["targets"] = self._targets(plan)
        point["variance"] = self._variance_summary(plan, fit, samples)

    def _run_local_patterns(self, point: Dict[str, Any], plan: ExperimentPlan,
                            patterns: List[SupportPattern]) -> Dict[str, LocalFit]:
        """Gate-set correlators and per-pattern fits for the given patterns"""
        cap = self.config['pattern_cap']
        for pattern in patterns:
            check_pattern_cap(pattern, cap)
        samples = {} if self.exact else run_local_gateset(plan, patterns, self.workers, cap)
        fits = {}
        for pattern in patterns:
            # one simulation serves every pattern
            table = self._signal_table(plan, samples.get(pattern.label), pattern.label, count=False)
            self.pattern_tables.setdefault(pattern.label, []).append(self._tag(plan, table))
            fits[pattern.label] = LocalFit(pattern, self._fit(table, "exp", f"w={pattern.label}", point))
        if not self.exact:
            self.processing_stats["shots_simulated"] += plan.total_shots

        oracle = self._oracle_coefficients(plan.noise, patterns)
        point["local_fits"] = {}
        for label, local in fits.items():
            entry = local.to_dict()
            entry["c_w_oracle"] = oracle.get(label)
            point["local_fits"][label] = entry
        return fits

    def _oracle_coefficients(self, noise: NoiseSpec, patterns: List[SupportPattern]) -> Dict[str, float]:
        if not noise.gate_independent or self.n > config.DENSE_SUPEROP_CAP:
            return {}
        model = realize(noise, self.n)
        return {p.label: c_w_oracle(model, p, self.n) for p in patterns}

    def _local_patterns(self) -> List[SupportPattern]:
        if self.config['patterns']:
            return [SupportPattern.parse(label, self.n) for label in self.config['patterns']]
        if self.observables:
            return patterns_for_observables(self.observables, self.n, self.config['pattern_cap'])
        cap = self.config['pattern_cap']
        return all_patterns(self.n, default_pattern_cap(self.n) if cap is None else cap)

    def _run_local_gateset(self, point: Dict[str, Any], noise: NoiseSpec):
        plan = self.build_plan(noise)
        fits = self._run_local_patterns(point, plan, self._local_patterns())
        for label, local in fits.items():
            point["fits"][f"w={label}"] = local.fit.to_dict()

    def _run_local_shadow(self, point: Dict[str, Any], index: int, noise: NoiseSpec):
        calibration = self.config['local_calibration']
        cal_plan = self.build_plan(noise, protocol="local-gateset", lengths=calibration['lengths'],
                                   shots_per_length=calibration['shots_per_length'])
        patterns = patterns_for_observables(self.observables, self.n, self.config['pattern_cap'])
        fits = self._run_local_patterns(point, cal_plan, patterns)

        plan = self.build_plan(noise)
        records = []
        if not self.exact:
            records = run_local_shadow(plan, self.workers)
            self.processing_stats["shots_simulated"] += plan.total_shots
        variants: List[Tuple[str, FrameChoice, Optional[DecayFit]]] = [
            ("uncalibrated", ideal_local_frame(self.n, self.observables), None),
        ]
        try:
            variants.append(("calibrated", build_local_frame(fits, self.observables, self.n), None))
        except CalibrationError as e:
            point["warnings"].append(f"local calibration skipped: {e}")
        point["estimates"] = self._estimate_all(plan, index, records, variants)
        point["targets"] = self._targets(plan)

    # ------------------------------------------------------------------
    # Estimates
    # ------------------------------------------------------------------

    def _estimate_all(self, plan: ExperimentPlan, index: int, records: List[Any],
                      variants: List[Tuple[str, FrameChoice, Optional[DecayFit]]]) -> List[Dict[str, Any]]:
        mom, resamples = self.config['mom'], self.config['bootstrap']['resamples']
        reports = []
        for obs_index, observable in enumerate(self.observables):
            for variant_index, (variant, frame, fit) in enumerate(variants):
                calibration = self._calibration_info(frame, fit)
                predicted = self._predicted(plan, observable, frame)
                if self.exact:
                    report = EstimateReport(observable.name, variant, predicted, 0.0, mom['K'], 0, 0, 0,
                                            calibration, notes=["exact expectation"])
                else:
                    rng = shot_rng(plan.seed, plan.protocol_id, BOOTSTRAP_STREAM + index,
                                   obs_index * 64 + variant_index)
                    values = estimate_observable(records, frame, observable)
                    report = summarize_estimates(values, observable.name, variant, mom['K'], mom['N'], resamples,
                                                 rng, calibration)
                report.predicted = predicted
                if fit is not None and isinstance(frame, dict):
                    exponents = [f.provenance["exponent"] for f in frame.values()]
                    report.calibration_sigma = calibration_sigma(
                        report.estimate, observable.trace / observable.dim, fit.decay, fit.sigma_decay, exponents)
                reports.append(report.to_dict())
        return reports

    @staticmethod
    def _calibration_info(frame: FrameChoice, fit: Optional[DecayFit]) -> Dict[str, Any]:
        sample = next(iter(frame.values())) if isinstance(frame, dict) else frame
        info = {"kind": sample.kind, **sample.provenance}
        if fit is not None:
            info["lambda"] = fit.decay
            info["sigma_lambda"] = fit.sigma_decay
        info.pop("exponent", None)
        return info

    def _predicted(self, plan: ExperimentPlan, observable: Observable, frame: FrameChoice) -> Optional[float]:
        """Exact expectation of the estimate, when an oracle exists"""
        try:
            return bruteoracle.exact_estimate(plan, observable, frame)
        except (OracleUnavailableError, CapExceededError):
            if self.exact:
                raise
            return None

    @staticmethod
    def _targets(plan: ExperimentPlan) -> Dict[str, float]:
        rho = plan.initial_state().entries
        return {observable.name: observable.expectation(rho) for observable in plan.observables}

    def _variance_summary(self, plan: ExperimentPlan, fit: DecayFit, samples) -> Dict[str, Any]:
        summary: Dict[str, Any] = {}
        if fit.decay > 0:
            for observable in plan.observables:
                dihedral, clifford = variance_bounds(observable, fit.decay, plan.n)
                summary[observable.name] = {"dihedral_bound": dihedral, "clifford_bound": clifford}
        if samples:
            filter_observable = plan.filter_observable or Observable(
                "prepared_state", plan.n, plan.initial_state().entries)
            summary["filter_variance"] = filter_variance([s.value for s in samples], filter_observable)
        return summary

    def _closed_form(self, noise: NoiseSpec) -> Optional[Dict[str, float]]:
        """Closed-form decay parameters, when the noise has them"""
        try:
            lambda_z, lambda_adj = closed_form_lambdas(noise, self.n)
        except OracleUnavailableError:
            return None
        return {"lambda_z": lambda_z, "lambda_adj": lambda_adj}

    def _bias_predictions(self, point: Dict[str, Any], noise: NoiseSpec) -> Dict[str, Dict[str, Any]]:
        """Predicted uncalibrated and Clifford-calibrated biases, from closed forms or else from this point's fits"""
        if not self.observables:
            return {}
        closed = point["closed_form"]
        if closed is not None:
            lambda_z, lambda_adj, source = closed["lambda_z"], closed["lambda_adj"], "closed-form"
        else:
            lambda_z = self._fitted_decay(point, LAMBDA_Z_FITS)
            lambda_adj = self._fitted_decay(point, LAMBDA_ADJ_FITS)
            source = "fitted"
        rho = self.build_plan(noise).initial_state().entries
        predictions = {}
        for observable in self.observables:
            uncalibrated = calibrated = None
            if lambda_z is not None:
                uncalibrated = predict_uncalibrated_bias(lambda_z, observable, rho)
                if lambda_adj:
                    calibrated = predict_calibrated_bias(lambda_z, lambda_adj, observable, rho)
            predictions[observable.name] = {
                "source": source,
                "lambda_z": lambda_z,
                "lambda_adj": lambda_adj,
                "uncalibrated_bias": uncalibrated,
                "clifford_calibrated_bias": calibrated,
            }
        return predictions

    @staticmethod
    def _fitted_decay(point: Dict[str, Any], protocols: Tuple[str, ...]) -> Optional[float]:
        for protocol in protocols:
            fit = point["fits"].get(protocol)
            if fit and fit["converged"] and np.isfinite(fit["lambda"]) and fit["lambda"] > 0:
                return float(fit["lambda"])
        return None

    # ------------------------------------------------------------------
    # Artifacts
    # ------------------------------------------------------------------

    def manifest(self) -> Dict[str, Any]:
        """Everything needed to re-run the experiment exactly"""
        resolved = {key: value for key, value in self.config.items() if key != 'workers'}
        resolved['exact'] = self.exact
        return {
            "code_version": __version__,
            "config": resolved,
            "seed": self.config['seed'],
            "protocol_ids": dict(PROTOCOL_IDS),
            "shot_split": "even over the length grid",
            "shot_order": "round robin over lengths before grouping",
            "rng": "Philox substreams keyed (seed, protocol id, length index, shot index)",
            "overrotation_decomposition": OVERROTATION_DECOMPOSITION,
            "local_scale": LOCAL_SCALE_CONVENTION,
        }

    def manifest_digest(self) -> str:
        encoded = ReportExporter.to_json(self.manifest(), pretty=False).encode()
        return hashlib.sha256(encoded).hexdigest()

    def summary(self) -> Dict[str, Any]:
        warnings = [f"point {p['index']}: {w}" for p in self.points for w in p["warnings"]]
        return {
            "experiment": self.config['name'],
            "protocol": self.protocol,
            "n": self.n,
            "exact": self.exact,
            "points": self.points,
            "warnings": warnings,
            "fits_flagged": self.processing_stats["fits_flagged"],
            "manifest_digest": self.manifest_digest(),
        }

    def estimates_table(self) -> pd.DataFrame:
        """One row per (noise point, observable, variant); the plot-ready sweep table"""
        rows = []
        for point in self.points:
            targets = point.get("targets", {})
            for estimate in point["estimates"]:
                rows.append({
                    "protocol": self.protocol,
                    "n": self.n,
                    "noise_kind": point["noise"]["kind"],
                    "noise_param": point["noise_param"],
                    "observable": estimate["observable"],
                    "variant": estimate["variant"],
                    "estimate": estimate["estimate"],
                    "sigma": estimate["sigma"],
                    "calibration_sigma": estimate["calibration_sigma"],
                    "predicted": estimate["predicted"],
                    "target": targets.get(estimate["observable"]),
                    "shots": estimate["shots"],
                })
        columns = ["protocol", "n", "noise_kind", "noise_param", "observable", "variant", "estimate", "sigma",
                   "calibration_sigma", "predicted", "target", "shots"]
        return pd.DataFrame(rows, columns=columns)

    def save_results(self, output_dir: str = "results") -> List[Path]:
        """Write manifest, summary and CSV tables; no timestamps enter any file"""
        directory = Path(output_dir)
        directory.mkdir(parents=True, exist_ok=True)
        written = []

        def write(name: str, content: str):
            path = directory / name
            path.write_text(content)
            written.append(path)

        write("manifest.json", ReportExporter.to_json(self.manifest()))
        write("summary.json", ReportExporter.to_json(self.summary()))
        if self.length_tables:
            write("lengths.csv", ReportExporter.to_csv(pd.concat(self.length_tables, ignore_index=True)))
        for protocol, tables in sorted(self.calibration_tables.items()):
            write(f"calibration_{protocol}.csv", ReportExporter.to_csv(pd.concat(tables, ignore_index=True)))
        for label, tables in sorted(self.pattern_tables.items()):
            write(f"lengths_w={label}.csv", ReportExporter.to_csv(pd.concat(tables, ignore_index=True)))
        if any(point["estimates"] for point in self.points):
            write("estimates.csv", ReportExporter.to_csv(self.estimates_table()))

        logger.info("Results saved to: %s", directory)
        return written


def load_summary(path: str) -> Dict[str, Any]:
    """Read summary.json from a run directory (or the file itself)"""
    target = Path(path)
    if target.is_dir():
        target = target / "summary.json"
    with open(target, 'r') as f:
        return json.load(f)


def compare(summary_a: Dict[str, Any], summary_b: Dict[str, Any], tolerance: float = 1e-9) -> pd.DataFrame:
    """Bias table of two runs over their shared (noise point, observable, variant) rows

    oracle_bias: exact expectation minus target (NaN without an oracle)
    predicted_*: bias predictors evaluated on closed-form decays, or on fitted ones for gate-dependent noise
    """
    def rows(summary):
        table = {}
        for point in summary["points"]:
            targets = point.get("targets", {})
            predictions = point.get("bias_predictions", {})
            for estimate in point["estimates"]:
                name = estimate["observable"]
                key = (point["noise_param"], name, estimate["variant"])
                table[key] = (estimate, targets.get(name), predictions.get(name, {}))
        return table

    def value(number):
        return np.nan if number is None else number

    rows_a, rows_b = rows(summary_a), rows(summary_b)
    observables_a = {key[1] for key in rows_a}
    observables_b = {key[1] for key in rows_b}
    if observables_a != observables_b:
        raise ValidationError(f"Runs estimate different observables: {sorted(observables_a)} vs {sorted(observables_b)}")

    records = []
    for key in sorted(set(rows_a) & set(rows_b), key=lambda k: (k[0], k[1], k[2])):
        (a, target, predictions), (b, _, _) = rows_a[key], rows_b[key]
        difference = b["estimate"] - a["estimate"]
        spread = float(np.hypot(a["sigma"], b["sigma"]))
        predicted = a.get("predicted")
        records.append({
            "noise_param": key[0],
            "observable": key[1],
            "variant": key[2],
            "target": target,
            "estimate_a": a["estimate"],
            "estimate_b": b["estimate"],
            "difference": difference,
            "sigma_a": a["sigma"],
            "sigma_b": b["sigma"],
            "bias_a": a["estimate"] - target if target is not None else np.nan,
            "bias_b": b["estimate"] - target if target is not None else np.nan,
            "oracle_bias": predicted - target if predicted is not None and target is not None else np.nan,
            "predicted_uncalibrated_bias": value(predictions.get("uncalibrated_bias")),
            "predicted_calibrated_bias": value(predictions.get("clifford_calibrated_bias")),
            "prediction_source": predictions.get("source"),
            "passed": bool(abs(difference) <= max(tolerance, 3 * spread)),
        })
    return pd.DataFrame(records)


def run_experiment(config_path: str, output_dir: str = "results", exact: Optional[bool] = None,
                   workers: Optional[int] = None) -> ExperimentOrchestrator:
    """Run one experiment config end to end"""
    logger.info("=" * 80)
    logger.info("SHADOW CALIBRATION EXPERIMENT")
    logger.info("=" * 80)

    logger.info("[1/4] Loading experiment config...")
    orchestrator = ExperimentOrchestrator.from_file(config_path, exact=exact, workers=workers)
    logger.info("Protocol %s on n=%d, %s noise, %s mode", orchestrator.protocol, orchestrator.n,
                orchestrator.config['noise']['kind'], "exact" if orchestrator.exact else "sampled")

    logger.info("[2/4] Running %d noise point(s)...", len(orchestrator.noise_points()))
    summary = orchestrator.run()

    logger.info("[3/4] Saving results...")
    orchestrator.save_results(output_dir)

    logger.info("[4/4] Summary")
    logger.info("=" * 80)
    for point in summary["points"]:
        for name, fit in sorted(point["fits"].items()):
            logger.info("  p=%-8g %-28s lambda=%.6f +/- %.6f (r2=%.6f)", point["noise_param"], name,
                        fit["lambda"], fit["sigma_lambda"], fit["r2"])
        for estimate in point["estimates"]:
            logger.info("  p=%-8g %-20s %-28s %.6f +/- %.6f", point["noise_param"], estimate["observable"],
                        estimate["variant"], estimate["estimate"], estimate["sigma"])
    stats = orchestrator.processing_stats
    logger.info("Shots simulated: %d; fits: %d (%d flagged)", stats["shots_simulated"], stats["fits"],
                stats["fits_flagged"])
    for warning in summary["warnings"]:
        logger.warning(warning)
    logger.info("=" * 80)
    return orchestrator


if __name__ == "__main__":
    logging.basicConfig(level=config.LOG_LEVEL, format="%(message)s")
    run_experiment("configs/selfcal_depolarizing_n2.json", "results/selfcal_depolarizing_n2")
