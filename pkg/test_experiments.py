#!/usr/bin/env python

"""
Tests for the experiment harness: spec parsing, fixtures, runners, reports and commands
"""

import json
import logging
import os
import sys

import pandas as pd
import pytest

# Set up logging
logging.basicConfig(level=logging.INFO,
                    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger('experiments_test')

# Add project root to path
project_root = os.path.abspath(os.path.dirname(__file__))
if project_root not in sys.path:
    sys.path.append(project_root)

# Set up Django environment
import django
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'fractal_lab.settings')
django.setup()

from django.core.management import call_command
from django.core.management.base import CommandError

import run_experiment
from experiments import runners, specs
from experiments.fixtures import FixtureError, fixture_radix, intset_fixture, subshift_fixture
from experiments.reports import CSV_COLUMNS, Report, merge


def entry(text, kind=None):
    return specs.loads(text, kind)[0]


def test_spec_parsing():
    assert specs.parse_int('2^20') == 2 ** 20
    assert specs.parse_ints('1..3, 7') == [1, 2, 3, 7]
    assert specs.parse_list('digits:4:0,3; digits:5:0,4') == ['digits:4:0,3', 'digits:5:0,4']
    spec = entry(specs.DEFAULT_SPECS['sumset_dim'])
    assert spec.kind == 'sumset_dim'
    assert spec.fixtures == ['digits:4:0,3', 'digits:5:0,4']
    assert spec.levels == list(range(1, 13))
    assert spec.option('ladder', cast=int) == 4
    assert spec.to_dict()['grid'] == ['1/2', '1', '3/2', '2']
    pipeline_spec = entry(specs.DEFAULT_SPECS['pipeline'])
    assert pipeline_spec.options['N'] == '4'


def test_spec_errors():
    with pytest.raises(specs.SpecError):
        specs.loads("[x]\nkind = nonsense\n")
    with pytest.raises(specs.SpecError):
        specs.loads("[x]\nkind = dims\nlevels = ten\n")
    with pytest.raises(specs.SpecError):
        specs.loads("not an ini file")
    with pytest.raises(specs.SpecError):
        specs.loads(specs.DEFAULT_SPECS['dims'], kind='pipeline')
    with pytest.raises(specs.SpecError):
        specs.load('/nonexistent/spec.ini')
    assert [s.name for s in specs.loads(specs.DEFAULT_SPECS['dims'], kind='dims')] == ['golden', 'even', 'prime_gap']


def test_fixtures():
    assert len(intset_fixture('digits:3:0,2', 27)) == 8
    assert intset_fixture('zero', 10).elements == (0,)
    assert len(intset_fixture('full', 10)) == 10
    assert len(intset_fixture('shift:golden', 2 ** 6)) == 21
    assert fixture_radix('digits:5:0,4') == 5
    assert fixture_radix('counterexample:3') == 3
    assert fixture_radix('full') is None
    assert subshift_fixture('golden').radix == 2
    with pytest.raises(FixtureError):
        intset_fixture('nonsense', 10)
    with pytest.raises(FixtureError):
        intset_fixture('digits:3:5', 10)
    with pytest.raises(FixtureError):
        subshift_fixture('nonsense')


def test_digit_intersection():
    report = runners.run_digit_intersection(entry(specs.DEFAULT_SPECS['digit_intersection']))
    assert report.passed
    assert report.summary['folklore']['intersection'] == [0, 1, 82000]
    # two bases leave every base-3 {0,1} number: 16 with four digits, 8 more below 100 = (10201)_3
    small = runners.run_digit_intersection(entry("[small]\nkind = digit_intersection\nbases = 2, 3\nbound = 100\n"))
    found = small.summary['small']['intersection']
    assert len(found) == 24
    assert {0, 1} < set(found)


def test_iterated_sumset_counts():
    text = """
[digits_012]
kind = iterated_sumset
fixtures = digits:10:0,1,2
levels = 1..4
summands = 5

[full]
kind = iterated_sumset
fixtures = full
bases = 10
levels = 1..3
summands = 2

[zero]
kind = iterated_sumset
fixtures = zero
bases = 10
levels = 1..3
summands = 3
"""
    for spec in specs.loads(text):
        report = runners.run_iterated_sumset(spec)
        assert report.passed, report.failures
    report = runners.run_iterated_sumset(specs.loads(text)[0])
    fives = [row['count'] for row in report.rows if row['param1'] == 5]
    assert fives == [10 ** N for N in range(1, 5)]
    dims = report.summary['digits_012']['dimensions']
    assert dims == sorted(dims)


def test_counterexample():
    report = runners.run_counterexample(entry("[small]\nkind = counterexample\nbases = 2, 3\nlevels = 1..12\n"))
    assert report.passed, report.failures
    names = [a['name'] for a in report.assertions]
    assert 'small:A:scaling' in names and 'small:B:phi_fixed' in names and 'small:sumset_bound' in names
    assert report.summary['small:A']['hausdorff_skipped'] == []
    assert 0.0 <= report.summary['small:A']['hausdorff_dimension'] <= 1.0
    assert report.summary['small:A+B']['density'][12] < 1.0
    with pytest.raises(specs.SpecError):
        runners.run_counterexample(entry("[bad]\nkind = counterexample\nbases = 3, 2\n"))


def test_furstenberg_closures():
    text = "[seeds]\nkind = furstenberg\nbases = 2, 3\nbound = 2^12\nelements = 0, 5\nword_length = 3\n"
    report = runners.run_furstenberg(entry(text))
    assert report.passed, report.failures
    assert report.summary['seeds:0']['size'] == 1
    assert report.summary['seeds:5']['initial_interval'] >= 7
    with pytest.raises(specs.SpecError):
        runners.run_furstenberg(entry("[big]\nkind = furstenberg\nbound = 16\nelements = 20\n"))


def test_same_base_sumset():
    text = """
[same_base]
kind = sumset_dim
fixtures = digits:10:0,1,2; digits:10:0,1,2
levels = 1..4
ladder = 10
independent = no
exact_power = 5
"""
    report = runners.run_sumset_dim(entry(text))
    assert report.passed, report.failures
    counts = [row['count'] for row in report.rows]
    assert counts == [5 ** N for N in range(1, 5)]
    with pytest.raises(specs.SpecError):
        runners.run_sumset_dim(entry("[one]\nkind = sumset_dim\nfixtures = digits:10:0,1\nlevels = 1\n"))


def test_dims_prefix_check():
    text = "[golden]\nkind = dims\nfixtures = golden\nlevels = 12\nexpect_prefix = 0, 1, 2, 4, 5, 8\n"
    report = runners.run_dims(entry(text))
    assert report.passed


def test_reports(tmp_path):
    report = Report('demo', specs=[{'name': 'demo'}])
    report.add_row('golden', 2, '', 1, 2, 1.0)
    assert report.check_band('close', 0.70, 0.6942, 0.01)
    assert not report.check_band('far', 0.5, 0.6942, 0.01)
    report.assert_exact('holds', True)
    assert report.passed
    assert [b['name'] for b in report.band_misses] == ['far']
    csv_path, json_path = report.write(str(tmp_path))
    assert list(pd.read_csv(csv_path).columns) == CSV_COLUMNS
    with open(json_path) as handle:
        data = json.load(handle)
    assert len(data['code_version']) == 64
    assert data['passed'] is True
    other = Report('demo')
    other.assert_exact('breaks', False, 'detail')
    merged = merge('demo', [report, other])
    assert not merged.passed
    assert [a['name'] for a in merged.failures] == ['breaks']


def test_run_specs_merges_per_kind():
    text = ("[a]\nkind = digit_intersection\nbases = 2, 3\nbound = 100\n\n"
            "[b]\nkind = iterated_sumset\nfixtures = zero\nbases = 10\nlevels = 1..2\nsummands = 2\n\n"
            "[c]\nkind = digit_intersection\nbases = 2, 5\nbound = 100\n")
    reports = runners.run_specs(specs.loads(text))
    assert [r.experiment for r in reports] == ['digit_intersection', 'iterated_sumset']
    assert [s['name'] for s in reports[0].specs] == ['a', 'c']


def test_command_exit_codes(tmp_path):
    out = str(tmp_path / 'reports')
    spec = tmp_path / 'intersection.ini'
    spec.write_text("[ok]\nkind = digit_intersection\nbases = 2, 3, 4, 5\nbound = 10^5\nexpect = 0, 1, 82000\n")
    call_command('digit_intersection', spec=str(spec), out=out)
    assert os.path.exists(os.path.join(out, 'digit_intersection.json'))

    spec.write_text("[wrong]\nkind = digit_intersection\nbases = 2, 3, 4, 5\nbound = 10^5\nexpect = 0, 1\n")
    with pytest.raises(CommandError) as info:
        call_command('digit_intersection', spec=str(spec), out=out)
    assert info.value.returncode == 1

    with pytest.raises(CommandError) as info:
        call_command('digit_intersection', spec=str(tmp_path / 'missing.ini'), out=out)
    assert info.value.returncode == 2
    with pytest.raises(CommandError) as info:
        call_command('digit_intersection', out=out, threads=0)
    assert info.value.returncode == 2

    spec.write_text("[dependent]\nkind = furstenberg\nbases = 2, 4\n")
    with pytest.raises(CommandError) as info:
        call_command('furstenberg', spec=str(spec), out=out)
    assert info.value.returncode == 2


def test_pipeline_config_file(tmp_path):
    config = tmp_path / 'bad.cfg'
    config.write_text("m = 4\nbogus = 1\n")
    with pytest.raises(CommandError) as info:
        call_command('pipeline', config=str(config), out=str(tmp_path))
    assert info.value.returncode == 2


def test_subcommand_usage():
    assert run_experiment.main([]) == 2
    assert run_experiment.main(['nonsense']) == 2
    assert run_experiment.SUBCOMMANDS['sumset-dim'] == 'sumset_dim'


if __name__ == "__main__":
    logger.info("Starting experiment harness tests")
    test_spec_parsing()
    test_spec_errors()
    test_fixtures()
    test_digit_intersection()
    test_iterated_sumset_counts()
    test_counterexample()
    test_furstenberg_closures()
    test_same_base_sumset()
    test_dims_prefix_check()
    test_run_specs_merges_per_kind()
    test_subcommand_usage()
    logger.info("Experiment harness tests completed (tests using tmp_path run under pytest only)")
