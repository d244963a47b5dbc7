import logging

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from fractal_lab.geometry.pipeline import GridOverflowError, InfeasibleConfigError
from fractal_lab.geometry.projection import DependentBasesError

from experiments import specs
from experiments.fixtures import FixtureError
from experiments.runners import run_specs

logger = logging.getLogger(__name__)

USAGE_ERRORS = (specs.SpecError, FixtureError, InfeasibleConfigError, GridOverflowError, DependentBasesError)


class ExperimentCommand(BaseCommand):
    """Shared flags and exit codes; subclasses set `kind` and `help`."""

    kind = None

    def add_arguments(self, parser):
        parser.add_argument(
            '--spec',
            default=None,
            help='INI spec file (defaults to the built-in spec for this experiment)',
        )
        parser.add_argument(
            '--out',
            default=str(settings.REPORTS_DIR),
            help='Directory for the CSV and JSON reports',
        )
        parser.add_argument(
            '--seed',
            type=int,
            default=settings.DEFAULT_SEED,
            help='Seed recorded in every spec entry that does not set its own',
        )
        parser.add_argument(
            '--threads',
            type=int,
            default=settings.DEFAULT_THREADS,
            help='Number of spec entries run in parallel',
        )

    def load_specs(self, options):
        if options['spec']:
            return specs.load(options['spec'], self.kind, options['seed'])
        return specs.loads(specs.DEFAULT_SPECS[self.kind], self.kind, options['seed'])

    def handle(self, *args, **options):
        if options['threads'] < 1:
            raise CommandError('--threads must be at least 1', returncode=2)
        try:
            entries = self.load_specs(options)
            self.stdout.write(f"Running {len(entries)} {self.kind} entries...")
            reports = run_specs(entries, options['threads'], options['out'])
        except USAGE_ERRORS as e:
            logger.error(f"{self.kind}: {e}")
            raise CommandError(str(e), returncode=2)

        failed = False
        for report in reports:
            csv_path, json_path = report.write(options['out'])
            for band in report.band_misses:
                self.stdout.write(self.style.WARNING(
                    f"{band['name']}: {band['value']} outside {band['target']} +/- {band['tolerance']}"
                ))
            if report.passed:
                self.stdout.write(self.style.SUCCESS(
                    f"{report.experiment}: {len(report.assertions)} exact assertions passed; "
                    f"reports at {csv_path} and {json_path}"
                ))
            else:
                failed = True
                for failure in report.failures:
                    self.stdout.write(self.style.ERROR(f"{failure['name']} failed: {failure['detail']}"))
        if failed:
            raise CommandError(f'{self.kind}: an exact assertion failed', returncode=1)
