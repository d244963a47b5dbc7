"""
Experiment runners.

One run_<kind>(spec, out_dir) per experiment kind, each returning a
Report. run_specs runs independent spec entries in a joblib pool and
merges the reports per kind in spec order.
"""

import itertools
import logging
import math
import os
from dataclasses import replace
from fractions import Fraction

import numpy as np
from django.conf import settings
from joblib import Parallel, delayed

from fractal_lab.geometry import intset, pipeline, setting, subshift
from fractal_lab.geometry.digits import begins_with, floor_log, phi, to_digits
from fractal_lab.geometry.fractal import cover_dp_integer
from fractal_lab.geometry.intset import HAUSDORFF_POINT_CAP
from fractal_lab.geometry.subshift import fit_slope
from fractal_lab.geometry.projection import WordSearchError, find_beginning_with, require_independent

from .fixtures import fixture_radix, intset_fixture, subshift_fixture
from .reports import Report, merge
from .specs import SpecError, parse_ints

logger = logging.getLogger(__name__)

DEFAULT_LEVELS = 40
CONTENT_WINDOW_CAP = 2 ** 13
FURSTENBERG_MAPS = ('phi', 'psi')


def tolerance(name):
    return settings.EXPERIMENT_TOLERANCES[name]


def _new_report(spec):
    return Report(spec.kind, specs=[spec.to_dict()])


# Single-set dimensions

def run_dims(spec, out_dir=None):
    """Per-level language counts, counting slope and spectral cross-check."""
    report = _new_report(spec)
    levels = max(spec.levels) if spec.levels else DEFAULT_LEVELS
    band = tolerance('single_set')
    for name in spec.fixtures:
        sigma = subshift_fixture(name)
        estimate = subshift.entropy(sigma, levels)
        key = f'{spec.name}:{name}'
        if estimate.slope is None:
            report.assert_exact(f'{key}:nonempty', False, f'empty language at level {levels}')
            continue
        for N, count, value in estimate.levels:
            report.add_row(name, sigma.radix, '', N, count, value)
        report.summary[key] = {'slope': estimate.slope, 'spectral': estimate.spectral, 'levels': levels}
        report.check_band(f'{key}:spectral_agreement', estimate.slope, estimate.spectral, band)

        target = spec.option('target', None, float)
        if target is not None:
            report.check_band(f'{key}:target', estimate.slope, target, band)
        compare = spec.option('compare')
        if compare:
            other = subshift.entropy(subshift_fixture(compare), levels)
            report.summary[key]['compare'] = {'fixture': compare, 'slope': other.slope}
            report.check_band(f'{key}:same_as_{compare}', estimate.slope, other.slope, band)
        prefix = spec.option('expect_prefix', None, parse_ints)
        if prefix:
            found = list(subshift.embed(sigma, prefix[-1] + 1).elements[:len(prefix)])
            report.assert_exact(f'{key}:first_elements', found == prefix, found)
        logger.info(f"{key}: slope {estimate.slope:.4f} at level {levels}")
    return report


# Sumset dimensions

def _pair(spec):
    if len(spec.fixtures) != 2:
        raise SpecError(f"[{spec.name}]: sumset_dim needs exactly two fixtures")
    bases = spec.bases or [fixture_radix(name) for name in spec.fixtures]
    if len(bases) != 2 or None in bases:
        raise SpecError(f"[{spec.name}]: sumset_dim needs the two bases")
    return spec.fixtures, bases


def _content_ratio(A, B, lam, eta, W):
    """H^1 content of the level-W sumset rescaled to [0, 1), or None above the point cap."""
    S = intset.floor_affine_sumset(A, B, lam, eta, W)
    if len(S) > HAUSDORFF_POINT_CAP:
        return None
    return cover_dp_integer(np.asarray(S.elements, dtype=float), 1.0) / W


def run_sumset_dim(spec, out_dir=None):
    """Counts of floor(λA + ηB) per window over the λ, η grid, with the grid minimum per level."""
    report = _new_report(spec)
    (fix_a, fix_b), (r, s) = _pair(spec)
    if spec.option('independent', 'yes') != 'no':
        require_independent(r, s)
    if not spec.levels:
        raise SpecError(f"[{spec.name}]: sumset_dim needs levels")
    ladder = spec.option('ladder', r, int)
    windows = [ladder ** N for N in spec.levels]
    grid = spec.grid or [Fraction(1)]
    # deep enough that nothing beyond the truncation lands below the top window
    reach = math.ceil(max(windows) / min(grid)) + 1
    A = intset_fixture(fix_a, reach)
    B = intset_fixture(fix_b, reach)
    if len(A) * len(B) > setting('SUMSET_PAIR_CEILING'):
        raise SpecError(f"[{spec.name}]: {len(A) * len(B)} candidate pairs exceed the pair ceiling")
    fixture = f'{fix_a}+{fix_b}'
    logger.info(f"{spec.name}: |A| = {len(A)}, |B| = {len(B)} below {reach}, {len(grid) ** 2} grid points")

    log_windows = [math.log(W) for W in windows]
    slopes = {}
    counts_by_pair = {}
    for lam, eta in itertools.product(grid, grid):
        counts = intset.sumset_level_counts(A, B, lam, eta, windows)
        counts_by_pair[(lam, eta)] = counts
        ratios = {}
        for N, W, count in zip(spec.levels, windows, counts):
            report.add_row(fixture, str(lam), str(eta), N, count, math.log(max(count, 1)) / math.log(W))
            if W <= CONTENT_WINDOW_CAP:
                ratio = _content_ratio(A, B, lam, eta, W)
                if ratio is not None:
                    ratios[N] = ratio
        slope = fit_slope(log_windows, [math.log(max(c, 1)) for c in counts])
        slopes[(lam, eta)] = slope
        report.summary[f'{spec.name}:{lam},{eta}'] = {'slope': slope, 'content_ratio': ratios}
        logger.debug(f"{spec.name}: lambda={lam} eta={eta} slope {slope:.4f}")

    diagonal = (Fraction(1), Fraction(1)) if Fraction(1) in grid else (grid[0], grid[0])
    band = tolerance(spec.option('tolerance', 'sumset'))
    target = spec.option('target', None, float)
    if target is not None:
        report.check_band(f'{spec.name}:diagonal_slope', slopes[diagonal], target, band)

    if len(grid) > 1:
        minima = [min(counts[i] for counts in counts_by_pair.values()) for i in range(len(windows))]
        for N, W, count in zip(spec.levels, windows, minima):
            report.add_row(fixture, 'min', 'min', N, count, math.log(max(count, 1)) / math.log(W))
        grid_min = fit_slope(log_windows, [math.log(max(c, 1)) for c in minima])
        # a grid proxy for the infimum over the compact parameter interval
        report.summary[f'{spec.name}:grid_min'] = {'slope': grid_min, 'grid': [str(g) for g in grid]}
        report.check_band(f'{spec.name}:grid_uniformity', grid_min, slopes[diagonal], tolerance('grid_uniformity'))

    power = spec.option('exact_power', None, int)
    if power is not None:
        counts = counts_by_pair[diagonal]
        expected = [power ** N for N in spec.levels]
        report.assert_exact(f'{spec.name}:exact_counts', counts == expected, {'counts': counts, 'expected': expected})
    return report


# Two-base counterexample

def _digit_map_checks(report, label, S, radix, bound):
    """rS ⊆ S and Φ_r(S) = S on the truncation."""
    scaled = intset.scale(S, radix, bound)
    report.assert_exact(f'{label}:scaling', scaled.is_subset(S))
    images = {phi(a, radix) for a in S.elements}
    inside = images <= S.members
    onto = all(a in images for a in S.elements if a * radix < bound)
    report.assert_exact(f'{label}:phi_fixed', inside and onto, {'inside': inside, 'onto': onto})


def run_counterexample(spec, out_dir=None):
    """Properties of the two-base counterexample on [0, r^N) and its sumset counting bound."""
    report = _new_report(spec)
    r, s = spec.bases or [2, 3]
    if not 2 <= r < s:
        raise SpecError(f"[{spec.name}]: counterexample needs 2 <= r < s, got {r}, {s}")
    levels = spec.levels or list(range(1, 31))
    top = r ** max(levels)
    A, B = intset.counterexample_pair(r, s, top)
    logger.info(f"{spec.name}: |A| = {len(A)}, |B| = {len(B)} below {top}")

    band = tolerance('counterexample_dim')
    for label, S, radix in (('A', A, r), ('B', B, s)):
        _digit_map_checks(report, f'{spec.name}:{label}', S, radix, top)
        estimate = intset.mass_dimension(S, radix)
        for N, count, value in estimate.levels:
            report.add_row(label, radix, '', N, count, value)
        hausdorff = intset.hausdorff_dimension(S, radix)
        report.summary[f'{spec.name}:{label}'] = {
            'mass_dimension': estimate.slope,
            'hausdorff_dimension': hausdorff.slope,
            'hausdorff_skipped': hausdorff.skipped,
            'radix': radix,
        }
        report.check_band(f'{spec.name}:{label}:dimension', estimate.slope, 0.5, band)

    windows = [r ** N for N in levels]
    counted = intset.counterexample_sumset_counts(r, s, windows)
    violations = []
    for N, (W, count) in zip(levels, counted):
        report.add_row('A+B', r, s, N, count, math.log(max(count, 1), r) / N)
        # |(A+B) ∩ [0, r^N)| <= 4 N^4 r^(4N/5), raised to the fifth power
        if count ** 5 > (4 * N ** 4) ** 5 * r ** (4 * N):
            violations.append({'level': N, 'count': count, 'window': W})
    report.assert_exact(f'{spec.name}:sumset_bound', not violations, violations)
    report.summary[f'{spec.name}:A+B'] = {
        'slope': fit_slope(levels, [math.log(max(c, 1), r) for (_, c) in counted]),
        'density': {N: count / W for N, (W, count) in zip(levels, counted)},
    }
    return report


# Closure under the four digit maps

def _orbit(seed, r, s, bound):
    """{seed r^a s^b} ∩ [0, bound)."""
    if seed == 0:
        return [0]
    values = []
    x = seed
    while x < bound:
        y = x
        while y < bound:
            values.append(y)
            y *= s
        x *= r
    return values


def _initial_interval(S):
    """Largest K with [0, K] ⊆ S, or -1 when 0 is missing."""
    arr = S.array
    gaps = np.flatnonzero(arr != np.arange(len(arr)))
    return int(gaps[0] if len(gaps) else len(arr)) - 1


def _word_checks(report, key, C, r, s, length):
    """Every base-r word of length <= length leads some element of C."""
    missing = []
    for k in range(1, length + 1):
        for word in itertools.product(range(r), repeat=k):
            if word[0] == 0:
                continue
            try:
                found = find_beginning_with(C, word, r, s)
            except WordSearchError:
                missing.append(word)
                continue
            if found not in C.members or not begins_with(found, word, r):
                missing.append(word)
    report.assert_exact(f'{key}:leading_words', not missing, [list(w) for w in missing])


def run_furstenberg(spec, out_dir=None):
    """Closures of seed orbits under Φ_r, Ψ_r, Φ_s, Ψ_s inside [0, bound)."""
    report = _new_report(spec)
    r, s = spec.bases or [2, 3]
    require_independent(r, s)
    bound = spec.bound or 2 ** 20
    maps = [(kind, radix) for radix in (r, s) for kind in FURSTENBERG_MAPS]
    expected = spec.option('expect_interval', None, int)
    word_length = spec.option('word_length', 0, int)
    ladder = [r ** N for N in spec.levels if r ** N < bound] + [bound]
    for seed in spec.elements or [0]:
        if seed >= bound:
            raise SpecError(f"[{spec.name}]: seed {seed} is not below the bound {bound}")
        key = f'{spec.name}:{seed}'
        for cap in ladder:
            if seed >= cap:
                continue
            C = intset.closure(_orbit(seed, r, s, cap), maps, cap)
            K = _initial_interval(C)
            report.add_row(f'seed:{seed}', r, s, floor_log(cap, r), len(C), K)
            logger.info(f"{key}: closure below {cap} has {len(C)} elements, [0, {K}] inside")
        report.summary[key] = {'bound': bound, 'size': len(C), 'initial_interval': K}
        if seed == 0:
            report.assert_exact(f'{key}:fixed_point', C.elements == (0,), list(C.elements[:10]))
            continue
        if expected is not None:
            report.assert_exact(f'{key}:initial_interval', K >= expected, {'K': K, 'expected': expected})
        if word_length:
            _word_checks(report, key, C, r, s, word_length)
    return report


# Iterated sumsets

def _expected_count(name, r, k, N):
    """Exact |kA ∩ [0, r^N)| for full, zero and digit sets {0, ..., d}; None otherwise."""
    key, _, rest = name.partition(':')
    if key == 'zero':
        return 1
    if key == 'full':
        return r ** N
    if key != 'digits':
        return None
    radix, digits = rest.split(':')
    radix, digits = int(radix), sorted(int(d) for d in digits.split(','))
    if digits != list(range(len(digits))):
        return None
    top = k * digits[-1]
    # digit sums below the radix never carry
    return (top + 1) ** N if top < radix else radix ** N


def run_iterated_sumset(spec, out_dir=None):
    """Counts and dimensions of A, A+A, ..., up to `summands` copies."""
    report = _new_report(spec)
    if len(spec.fixtures) != 1:
        raise SpecError(f"[{spec.name}]: iterated_sumset needs one fixture")
    name = spec.fixtures[0]
    r = spec.bases[0] if spec.bases else fixture_radix(name) or 10
    levels = spec.levels or list(range(1, 7))
    summands = spec.option('summands', 5, int)
    top = r ** max(levels)
    A = intset_fixture(name, top)
    windows = [r ** N for N in levels]

    S = A
    previous = None
    dims = []
    for k in range(1, summands + 1):
        if k > 1:
            S = intset.sumset(S, A, top)
        counts = [S.count_below(W) for W in windows]
        for N, count in zip(levels, counts):
            report.add_row(name, k, r, N, count, math.log(max(count, 1), r) / N)
        dim = fit_slope(levels, [math.log(max(c, 1), r) for c in counts])
        dims.append(dim)
        expected = [_expected_count(name, r, k, N) for N in levels]
        if None not in expected:
            report.assert_exact(f'{spec.name}:{k}:exact_counts', counts == expected,
                                {'counts': counts, 'expected': expected})
        if previous is not None and 0 in A.members:
            grown = all(c >= p for c, p in zip(counts, previous))
            report.assert_exact(f'{spec.name}:{k}:monotone', grown, {'counts': counts, 'previous': previous})
        previous = counts
        logger.info(f"{spec.name}: {k}-fold sumset dimension {dim:.4f}")
    report.summary[spec.name] = {'fixture': name, 'radix': r, 'dimensions': dims}
    return report


# Digit intersections

def run_digit_intersection(spec, out_dir=None):
    """Integers below bound whose digits lie in D in every listed base."""
    report = _new_report(spec)
    bases = sorted(spec.bases or [2, 3, 4, 5])
    bound = spec.bound or 10 ** 7
    digits = set(spec.option('digits', [0, 1], parse_ints))
    if bound < 10 ** 5:
        logger.warning(f"{spec.name}: bound {bound} is below 10^5")
    # the largest base has the sparsest candidate set
    candidates = intset.restricted_digits(bases[-1], digits, bound)
    found = [n for n in candidates.elements
             if all(set(to_digits(n, b).digits) <= digits for b in bases[:-1])]
    report.add_row(f'digits:{",".join(map(str, sorted(digits)))}', ','.join(map(str, bases)), '',
                   floor_log(bound, 10), len(found), ' '.join(map(str, found)))
    report.summary[spec.name] = {'bases': bases, 'bound': bound, 'candidates': len(candidates),
                                 'intersection': found}
    expected = spec.option('expect', None, parse_ints)
    if expected is not None:
        report.assert_exact(f'{spec.name}:intersection', found == expected, found)
    logger.info(f"{spec.name}: {len(found)} integers below {bound} in bases {bases}")
    return report


# Tree construction pipeline

PIPELINE_LISTS = ('m', 'N', 't')


def _pipeline_configs(spec):
    """One PipelineConfig per combination of the listed m, N and t values."""
    base = {k: v for k, v in spec.options.items() if k in pipeline.CONFIG_PARSERS and k not in PIPELINE_LISTS}
    text = '\n'.join(f'{k} = {v}' for k, v in base.items())
    try:
        config = pipeline.PipelineConfig.from_text(text)
        axes = {
            'm': [int(v) for v in spec.options.get('m', str(config.m)).split(',')],
            'N': [int(v) for v in spec.options.get('N', str(config.N)).split(',')],
            't': [Fraction(v.strip()) for v in spec.options.get('t', str(config.t)).split(',')],
        }
    except ValueError as e:
        raise SpecError(f"[{spec.name}]: {e}") from e
    return [replace(config, m=m, N=N, t=t, seed=spec.seed)
            for m, N, t in itertools.product(axes['m'], axes['N'], axes['t'])]


def run_pipeline(spec, out_dir=None):
    """Build and check Γ'' for every configuration of the entry."""
    report = _new_report(spec)
    sweep = spec.option('sweep', 0, int)
    for index, config in enumerate(_pipeline_configs(spec)):
        key = f'{spec.name}:m={config.m}:N={config.N}:t={config.t}'
        tree_dir = os.path.join(out_dir, f'{spec.name}_{index}') if out_dir else None
        result = pipeline.run(config, out_dir=tree_dir)
        fixture = f'{config.x_fixture}x{config.y_fixture}'
        report.add_row(fixture, config.m, str(config.t), config.N, result.leaves, result.concentration)
        report.summary[key] = result.to_dict()
        for check, ok in result.checks.items():
            report.assert_exact(f'{key}:{check}', ok)
        if result.below_regime:
            logger.warning(f"{key}: {'; '.join(result.regime_notes)}")
        if sweep:
            rows, worst = pipeline.concentration_sweep(config, sweep)
            for row in rows:
                report.add_row(fixture, config.m, row['t'], config.N, int(row['passed']), row['concentration'])
            report.summary[f'{key}:sweep'] = {'rows': rows, 'max_concentration': worst}
            report.assert_exact(f'{key}:sweep', all(row['passed'] for row in rows),
                                [row['t'] for row in rows if not row['passed']])
    return report


RUNNERS = {
    'dims': run_dims,
    'sumset_dim': run_sumset_dim,
    'counterexample': run_counterexample,
    'furstenberg': run_furstenberg,
    'iterated_sumset': run_iterated_sumset,
    'digit_intersection': run_digit_intersection,
    'pipeline': run_pipeline,
}


def run_entry(spec, out_dir=None):
    try:
        return RUNNERS[spec.kind](spec, out_dir)
    except Exception as e:
        logger.error(f"[{spec.name}] failed: {type(e).__name__}: {e}")
        raise


def run_specs(specs, threads=1, out_dir=None):
    """Run the entries in a joblib pool; returns one merged Report per kind, in spec order."""
    results = Parallel(n_jobs=threads)(delayed(run_entry)(spec, out_dir) for spec in specs)
    kinds = list(dict.fromkeys(spec.kind for spec in specs))
    return [merge(kind, [rep for rep in results if rep.experiment == kind]) for kind in kinds]
