"""
File Handlers for Shadow Calibration Experiments
Handles experiment config parsing and result export (CSV/JSON/Excel)
"""
import io
import json
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from shadowcal import config
from shadowcal.errors import ConfigError, ShadowCalError
from shadowcal.noisechan import NoiseSpec
from shadowcal.pauliliouville import Observable
from shadowcal.rbengine import FIT_MODELS, PROTOCOL_IDS, RB_PROTOCOLS

LENGTH_COLUMNS = ["protocol", "n", "noise_kind", "noise_param", "m", "mean", "stderr", "shots"]
SWEEP_PARAMETERS = ("p", "gamma", "theta", "ratio")
OBSERVABLE_KINDS = ("ghz-fidelity", "pauli-sum", "dense-file")


class ConfigLoader:
    """Parses experiment configs (JSON) into a resolved, fully-defaulted dict"""

    REQUIRED_FIELDS = ['protocol', 'n', 'noise']
    OPTIONAL_FIELDS = [
        'lengths', 'shots_per_length', 'total_shots', 'observables', 'mom',
        'bootstrap', 'seed', 'exact', 'pattern_cap', 'patterns', 'state', 'probe',
        'filter_observable', 'sweep', 'calibrations', 'calibration_lengths',
        'local_calibration', 'fit_model', 'workers', 'name'
    ]

    @classmethod
    def load(cls, filepath: str) -> Dict[str, Any]:
        """Read and resolve a config file"""
        path = Path(filepath)
        try:
            content = path.read_text()
        except FileNotFoundError:
            raise ConfigError(f"Config file not found at {filepath}")
        return cls.parse_json(content, base_dir=path.parent)

    @classmethod
    def parse_json(cls, content: str, base_dir: Optional[Path] = None) -> Dict[str, Any]:
        try:
            raw = json.loads(content)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config is not valid JSON: {e}")
        if not isinstance(raw, dict):
            raise ConfigError("Config must be a JSON object")
        return cls.resolve(raw, base_dir)

    @classmethod
    def resolve(cls, raw: Dict[str, Any], base_dir: Optional[Path] = None) -> Dict[str, Any]:
        """Validate a raw config and fill in every default"""
        for field_name in cls.REQUIRED_FIELDS:
            if field_name not in raw:
                raise ConfigError(f"Config is missing required field '{field_name}'")
        unknown = set(raw) - set(cls.REQUIRED_FIELDS) - set(cls.OPTIONAL_FIELDS)
        if unknown:
            raise ConfigError(f"Unknown config fields {sorted(unknown)}")

        protocol = raw['protocol']
        if protocol not in PROTOCOL_IDS:
            raise ConfigError(f"Unknown protocol {protocol!r}; expected one of {sorted(PROTOCOL_IDS)}")
        n = cls._parse_int(raw['n'], 'n', minimum=1)

        try:
            noise = NoiseSpec.from_dict(raw['noise']).to_dict()
        except (ShadowCalError, TypeError, AttributeError) as e:
            raise ConfigError(f"Invalid noise spec: {e}")

        lengths = cls._parse_lengths(raw.get('lengths'), protocol)
        total_shots = cls._parse_int(raw.get('total_shots', config.DEFAULT_TOTAL_SHOTS), 'total_shots', minimum=1)
        if 'shots_per_length' in raw:
            shots_per_length = cls._parse_int(raw['shots_per_length'], 'shots_per_length', minimum=1)
        else:
            # Even split of the total budget over the length grid
            shots_per_length = max(1, total_shots // len(lengths))

        mom = dict(raw.get('mom', {}))
        bootstrap = dict(raw.get('bootstrap', {}))
        resolved = {
            'name': str(raw.get('name', protocol)),
            'protocol': protocol,
            'n': n,
            'noise': noise,
            'lengths': lengths,
            'shots_per_length': shots_per_length,
            'total_shots': shots_per_length * len(lengths),
            'observables': [cls._parse_observable_entry(o, n, base_dir) for o in raw.get('observables', [])],
            'mom': {
                'K': cls._parse_int(mom.get('K', config.DEFAULT_MOM_GROUPS), 'mom.K', minimum=1),
                'N': cls._parse_int(mom.get('N', config.DEFAULT_MOM_GROUP_SIZE), 'mom.N', minimum=1),
            },
            'bootstrap': {
                'resamples': cls._parse_int(bootstrap.get('resamples', config.DEFAULT_BOOTSTRAP_RESAMPLES),
                                            'bootstrap.resamples', minimum=2),
            },
            'seed': cls._parse_int(raw.get('seed', 0), 'seed', minimum=0),
            'exact': cls._parse_bool(raw.get('exact', False)),
            'pattern_cap': raw.get('pattern_cap'),
            'patterns': [str(p) for p in raw.get('patterns', [])],
            'state': raw.get('state'),
            'probe': raw.get('probe', 'zeros'),
            'filter_observable': None,
            'sweep': cls._parse_sweep(raw.get('sweep')),
            'calibrations': cls._parse_calibrations(raw.get('calibrations', []), protocol),
            'calibration_lengths': cls._parse_lengths(raw.get('calibration_lengths'), 'clifford-rb'),
            'local_calibration': cls._parse_local_calibration(raw.get('local_calibration', {}), total_shots),
            'fit_model': raw.get('fit_model', 'exp_offset' if protocol in RB_PROTOCOLS else 'exp'),
            'workers': cls._parse_int(raw.get('workers', config.DEFAULT_WORKERS), 'workers', minimum=1),
        }
        if resolved['pattern_cap'] is not None:
            resolved['pattern_cap'] = cls._parse_int(resolved['pattern_cap'], 'pattern_cap', minimum=0)
        if raw.get('filter_observable') is not None:
            resolved['filter_observable'] = cls._parse_observable_entry(raw['filter_observable'], n, base_dir)
        if resolved['fit_model'] not in FIT_MODELS:
            raise ConfigError(f"Unknown fit_model {resolved['fit_model']!r}; expected one of {FIT_MODELS}")
        if resolved['state'] not in (None, 'zeros', 'ghz'):
            raise ConfigError(f"Unknown state {resolved['state']!r}; expected zeros or ghz")
        if resolved['probe'] not in ('zeros', 'ghz'):
            raise ConfigError(f"Unknown probe {resolved['probe']!r}; expected zeros or ghz")
        if protocol == 'local-shadow' and lengths != [1]:
            raise ConfigError("local-shadow runs a single gate layer; lengths must be [1]")
        return resolved

    @staticmethod
    def _parse_int(value, name: str, minimum: Optional[int] = None) -> int:
        """Parse an integer field, rejecting booleans and fractions"""
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ConfigError(f"Field '{name}' must be an integer, got {value!r}")
        try:
            number = float(value)
        except ValueError:
            raise ConfigError(f"Field '{name}' must be an integer, got {value!r}")
        if not number.is_integer():
            raise ConfigError(f"Field '{name}' must be an integer, got {value!r}")
        if minimum is not None and number < minimum:
            raise ConfigError(f"Field '{name}' must be >= {minimum}, got {value!r}")
        return int(number)

    @staticmethod
    def _parse_bool(value) -> bool:
        """Parse various boolean representations"""
        if isinstance(value, bool):
            return value
        if isinstance(value, str):
            return value.lower() in ('true', 'yes', '1', 'y')
        return bool(value)

    @classmethod
    def _parse_lengths(cls, value, protocol: str) -> List[int]:
        if value is None:
            if protocol == 'local-gateset':
                return list(config.DEFAULT_LOCAL_LENGTHS)
            if protocol == 'local-shadow':
                return [1]
            return list(config.DEFAULT_LENGTHS)
        if not isinstance(value, list) or not value:
            raise ConfigError("Field 'lengths' must be a non-empty list of integers")
        lengths = [cls._parse_int(v, 'lengths', minimum=0) for v in value]
        if any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise ConfigError(f"Field 'lengths' must be strictly increasing: {lengths}")
        return lengths

    @classmethod
    def _parse_sweep(cls, value) -> Optional[Dict[str, Any]]:
        if value is None:
            return None
        if not isinstance(value, dict) or 'values' not in value:
            raise ConfigError("Field 'sweep' needs a 'values' list")
        parameter = value.get('parameter', 'p')
        if parameter not in SWEEP_PARAMETERS:
            raise ConfigError(f"Cannot sweep {parameter!r}; expected one of {SWEEP_PARAMETERS}")
        values = value['values']
        if not isinstance(values, list) or not values:
            raise ConfigError("Field 'sweep.values' must be a non-empty list")
        try:
            return {'parameter': parameter, 'values': [float(v) for v in values]}
        except (TypeError, ValueError):
            raise ConfigError(f"Field 'sweep.values' must be numeric: {values!r}")

    @staticmethod
    def _parse_calibrations(value, protocol: str) -> List[str]:
        if not isinstance(value, list):
            raise ConfigError("Field 'calibrations' must be a list of RB protocols")
        for name in value:
            if name not in RB_PROTOCOLS:
                raise ConfigError(f"Calibration protocol {name!r} is not one of {RB_PROTOCOLS}")
        if value and protocol not in ('selfcal-dihedral-shadow', 'clifford-shadow'):
            raise ConfigError("Separate calibrations apply to global shadow protocols only")
        return list(value)

    @classmethod
    def _parse_local_calibration(cls, value, total_shots: int) -> Dict[str, Any]:
        if not isinstance(value, dict):
            raise ConfigError("Field 'local_calibration' must be an object")
        lengths = cls._parse_lengths(value.get('lengths'), 'local-gateset')
        shots = value.get('shots_per_length', max(1, total_shots // len(lengths)))
        return {'lengths': lengths, 'shots_per_length': cls._parse_int(shots, 'local_calibration.shots_per_length',
                                                                       minimum=1)}

    @classmethod
    def _parse_observable_entry(cls, entry, n: int, base_dir: Optional[Path]) -> Dict[str, Any]:
        """Normalize an observable entry; building it checks the payload early"""
        if not isinstance(entry, dict) or 'kind' not in entry:
            raise ConfigError(f"Observable entries need a 'kind': {entry!r}")
        kind = entry['kind']
        if kind not in OBSERVABLE_KINDS:
            raise ConfigError(f"Unknown observable kind {kind!r}; expected one of {OBSERVABLE_KINDS}")
        normalized = {'name': str(entry.get('name', kind)), 'kind': kind}
        if kind == 'pauli-sum':
            terms = entry.get('terms')
            if not isinstance(terms, list) or not terms:
                raise ConfigError(f"pauli-sum observable {normalized['name']!r} needs a non-empty 'terms' list")
            normalized['terms'] = [{'pauli': str(t['pauli']), 'coeff': float(t.get('coeff', 1.0))} for t in terms]
        elif kind == 'dense-file':
            if 'path' not in entry:
                raise ConfigError(f"dense-file observable {normalized['name']!r} needs a 'path'")
            path = Path(entry['path'])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            normalized['path'] = str(path)
        cls.build_observable(normalized, n)
        return normalized

    @staticmethod
    def build_observable(entry: Dict[str, Any], n: int) -> Observable:
        try:
            if entry['kind'] == 'ghz-fidelity':
                return Observable.ghz_fidelity(n, entry['name'])
            if entry['kind'] == 'pauli-sum':
                return Observable.pauli_sum([(t['pauli'], t['coeff']) for t in entry['terms']], n, entry['name'])
            matrix = np.load(entry['path'])
        except FileNotFoundError:
            raise ConfigError(f"Observable file not found at {entry['path']}")
        except ShadowCalError as e:
            raise ConfigError(f"Invalid observable {entry['name']!r}: {e}")
        observable = Observable.dense(matrix, entry['name'])
        if observable.n != n:
            raise ConfigError(f"Observable {entry['name']!r} acts on {observable.n} qubits, config has n={n}")
        return observable


class ReportExporter:
    """Handles exporting experiment results to various formats"""

    @classmethod
    def to_csv(cls, table: pd.DataFrame, filepath: Optional[str] = None) -> str:
        """Write a table as CSV with fixed float formatting"""
        content = table.to_csv(index=False, float_format="%.12g", lineterminator="\n")
        if filepath:
            Path(filepath).write_text(content)
        return content

    @classmethod
    def to_json(cls, results: Dict[str, Any], pretty: bool = True) -> str:
        """Export results to JSON with sorted keys"""
        if pretty:
            return json.dumps(results, indent=2, sort_keys=True, default=_json_default) + "\n"
        return json.dumps(results, sort_keys=True, default=_json_default)

    @classmethod
    def to_excel(cls, summary: Dict[str, Any], bias_table: Optional[pd.DataFrame] = None) -> bytes:
        """Export estimates (and an optional bias table) to an Excel workbook"""
        try:
            import openpyxl
            from openpyxl.styles import Font, PatternFill
        except ImportError:
            raise ValueError("Excel export requires openpyxl. Install with: pip install openpyxl")

        wb = openpyxl.Workbook()
        ws_estimates = wb.active
        ws_estimates.title = "Estimates"
        header_fill = PatternFill(start_color="4472C4", end_color="4472C4", fill_type="solid")
        header_font = Font(color="FFFFFF", bold=True)

        headers = ['Noise Param', 'Observable', 'Variant', 'Estimate', 'Sigma', 'Predicted', 'Shots']
        for col, header in enumerate(headers, 1):
            cell = ws_estimates.cell(row=1, column=col, value=header)
            cell.fill = header_fill
            cell.font = header_font
        row_idx = 2
        for point in summary.get('points', []):
            for estimate in point.get('estimates', []):
                values = [point.get('noise_param'), estimate['observable'], estimate['variant'],
                          estimate['estimate'], estimate['sigma'], estimate.get('predicted'), estimate['shots']]
                for col, value in enumerate(values, 1):
                    ws_estimates.cell(row=row_idx, column=col, value=value)
                row_idx += 1
        for col in range(1, len(headers) + 1):
            ws_estimates.column_dimensions[chr(64 + col)].width = 16

        if bias_table is not None:
            ws_bias = wb.create_sheet("Bias Table")
            for col, header in enumerate(bias_table.columns, 1):
                cell = ws_bias.cell(row=1, column=col, value=str(header))
                cell.fill = header_fill
                cell.font = header_font
            for row_idx, row in enumerate(bias_table.itertuples(index=False), 2):
                for col, value in enumerate(row, 1):
                    ws_bias.cell(row=row_idx, column=col, value=_excel_value(value))

        output = io.BytesIO()
        wb.save(output)
        output.seek(0)
        return output.getvalue()


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def _excel_value(value):
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value
