from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Counts and dimensions of iterated sumsets of one invariant set'
    kind = 'iterated_sumset'
