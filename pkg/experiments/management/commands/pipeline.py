import os

from fractal_lab.geometry.pipeline import PipelineConfig

from experiments.specs import ExperimentSpec, SpecError

from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Build the projected tree construction and check its invariants'
    kind = 'pipeline'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--config',
            default=None,
            help='Key-value pipeline config file, used instead of --spec',
        )

    def load_specs(self, options):
        path = options['config']
        if not path:
            return super().load_specs(options)
        try:
            with open(path) as handle:
                config = PipelineConfig.from_text(handle.read())
        except OSError as e:
            raise SpecError(f"cannot read config {path}: {e}") from e
        values = {}
        for key, value in config.to_dict().items():
            if value is None or key == 'seed':
                continue
            values[key] = ', '.join(value) if isinstance(value, list) else str(value)
        name = os.path.splitext(os.path.basename(path))[0]
        return [ExperimentSpec(name=name, kind=self.kind, seed=config.seed, options=values)]
