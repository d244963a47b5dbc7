"""Discrete Fractal Geometry Library

Exact digit arithmetic, subshift presentations, truncated integer sets,
discrete Hausdorff content, leveled trees, projections and the tree
construction pipeline. The modules only need Django for their tunables;
without configured settings the defaults below apply.
"""

import logging

logger = logging.getLogger(__name__)

DEFAULTS = {
    'HAUSDORFF_RATIO_FLOOR': 0.1,
    'HAUSDORFF_GAMMA_STEPS': 64,
    'DECIMAL_PRECISION': 60,
    'SEPARATION_SLACK': 2.0 ** -64,
    'SUMSET_MASK_CEILING': 2 ** 24,
    'SUMSET_PAIR_CEILING': 10 ** 8,
    'TREE_NODE_CAP': 10 ** 6,
    'INDEPENDENCE_EXPONENT_CAP': 64,
}


def setting(name):
    """Look up a numeric tunable in settings.FRACTAL_LAB, falling back to DEFAULTS.

    Args:
        name: key of the FRACTAL_LAB settings dict

    Returns:
        The configured value
    """
    try:
        from django.conf import settings
        if settings.configured:
            return getattr(settings, 'FRACTAL_LAB', {}).get(name, DEFAULTS[name])
    except ImportError:
        logger.debug("Django not importable, using library defaults")
    return DEFAULTS[name]
