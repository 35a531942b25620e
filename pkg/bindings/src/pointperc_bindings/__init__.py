"""Flat-array boundary over the core point-loss, codec and metric routines.

External training frameworks talk to this layer with plain contiguous
double-precision buffers ([x1, y1, ..., xK, yK]) and JSON-like records.
Every call delegates to the in-process implementation; no numeric logic
lives on this side of the boundary.  Failures surface as
:class:`BoundaryError` carrying a structured error record, never as
process aborts.
"""

from .boundary import (
    ABI_VERSION,
    BoundaryError,
    abi_version,
    bound_ap,
    bound_encode_mask,
    bound_oks,
    bound_point_loss,
    flat_to_points,
    points_to_flat,
)

__all__ = [
    "ABI_VERSION",
    "BoundaryError",
    "abi_version",
    "bound_ap",
    "bound_encode_mask",
    "bound_oks",
    "bound_point_loss",
    "flat_to_points",
    "points_to_flat",
]
