#!/usr/bin/env python
"""
Experiment runner.

Maps the hyphenated subcommands onto the experiments app's management
commands, so these are equivalent:

    - python run_experiment.py sumset-dim --spec specs/sumset.ini --out reports
    - python manage.py sumset_dim --spec specs/sumset.ini --out reports

Exit codes: 0 when every exact assertion passes, 1 when one fails, 2 on
usage or configuration errors.
"""
import os
import sys

# Setup Django environment
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'fractal_lab.settings')
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

SUBCOMMANDS = {
    'dims': 'dims',
    'sumset-dim': 'sumset_dim',
    'counterexample': 'counterexample',
    'furstenberg': 'furstenberg',
    'iterated-sumset': 'iterated_sumset',
    'digit-intersection': 'digit_intersection',
    'pipeline': 'pipeline',
}


def usage():
    return f"usage: {os.path.basename(sys.argv[0])} {{{' | '.join(SUBCOMMANDS)}}} [--spec FILE] [--out DIR] " \
           f"[--seed N] [--threads N]"


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if not argv or argv[0] not in SUBCOMMANDS:
        print(usage(), file=sys.stderr)
        return 2
    from django.core.management import execute_from_command_line

    # CommandError exits with its returncode
    execute_from_command_line([sys.argv[0], SUBCOMMANDS[argv[0]], *argv[1:]])
    return 0


if __name__ == "__main__":
    sys.exit(main())
