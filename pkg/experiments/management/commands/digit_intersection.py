from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Integers with restricted digits in several bases at once'
    kind = 'digit_intersection'
