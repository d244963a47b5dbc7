"""
Experiment reports.

A Report collects per-level rows in the fixed CSV schema, a nested summary
for the JSON side, hard assertions (exact claims) and tolerance-band
checks (asymptotic claims). Every JSON report embeds its spec entries and
a hash of the geometry library sources.
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

logger = logging.getLogger(__name__)

CSV_COLUMNS = ['experiment', 'fixture', 'param1', 'param2', 'level', 'count', 'value']
LIBRARY_DIR = Path(__file__).resolve().parent.parent / 'fractal_lab' / 'geometry'


def code_version(directory=LIBRARY_DIR):
    """SHA-256 over the library sources, in sorted file order."""
    digest = hashlib.sha256()
    for path in sorted(Path(directory).glob('*.py')):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


@dataclass
class Report:
    experiment: str
    specs: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)
    bands: list = field(default_factory=list)

    def add_row(self, fixture, param1, param2, level, count, value):
        self.rows.append({'experiment': self.experiment, 'fixture': fixture, 'param1': param1,
                          'param2': param2, 'level': level, 'count': count, 'value': value})

    def assert_exact(self, name, ok, detail=None):
        """Record a hard assertion; a failure makes the command exit 1."""
        ok = bool(ok)
        self.assertions.append({'name': name, 'ok': ok, 'detail': detail})
        if not ok:
            logger.error(f"{self.experiment}: exact assertion {name} failed: {detail}")
        return ok

    def check_band(self, name, value, target, tolerance):
        """Record |value - target| <= tolerance; misses are warnings, not failures."""
        ok = value is not None and abs(value - target) <= tolerance
        self.bands.append({'name': name, 'value': value, 'target': target, 'tolerance': tolerance,
                           'ok': ok, 'source': 'engineering tolerance'})
        if not ok:
            logger.warning(f"{self.experiment}: {name} = {value} outside {target} +/- {tolerance}")
        return ok

    @property
    def passed(self):
        return all(a['ok'] for a in self.assertions)

    @property
    def failures(self):
        return [a for a in self.assertions if not a['ok']]

    @property
    def band_misses(self):
        return [b for b in self.bands if not b['ok']]

    def extend(self, other):
        self.specs.extend(other.specs)
        self.rows.extend(other.rows)
        self.assertions.extend(other.assertions)
        self.bands.extend(other.bands)
        self.summary.update(other.summary)

    def frame(self):
        return pd.DataFrame(self.rows, columns=CSV_COLUMNS)

    def to_dict(self):
        return {
            'experiment': self.experiment,
            'code_version': code_version(),
            'specs': self.specs,
            'summary': self.summary,
            'assertions': self.assertions,
            'bands': self.bands,
            'passed': self.passed,
        }

    def write(self, out_dir):
        """Write <out>/<experiment>.csv and <out>/<experiment>.json; returns both paths."""
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, f'{self.experiment}.csv')
        json_path = os.path.join(out_dir, f'{self.experiment}.json')
        self.frame().to_csv(csv_path, index=False)
        with open(json_path, 'w') as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True, default=str)
        logger.info(f"Report written to {csv_path} and {json_path}")
        return csv_path, json_path


def merge(experiment, reports):
    """One report from per-entry reports, in spec order."""
    merged = Report(experiment)
    for report in reports:
        merged.extend(report)
    return merged
