from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Closures of seed orbits under the four digit maps of two independent bases'
    kind = 'furstenberg'
