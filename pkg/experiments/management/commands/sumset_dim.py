from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Dimensions of floor(lambda A + eta B) over a grid of lambda, eta'
    kind = 'sumset_dim'
