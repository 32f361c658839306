"""Sample distances and bound verification."""

from .bound_verifier import BoundReport, verify_bounds
from .distances import sliced_w1, tv_to_uniform, w1_1d

__all__ = ['BoundReport', 'verify_bounds', 'sliced_w1', 'tv_to_uniform', 'w1_1d']
