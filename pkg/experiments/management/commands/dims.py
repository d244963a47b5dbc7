from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Dimensions of subshift language sets from transfer-matrix counts'
    kind = 'dims'
