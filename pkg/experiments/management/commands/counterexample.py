from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Two-base counterexample: invariance properties and the sumset counting bound'
    kind = 'counterexample'
