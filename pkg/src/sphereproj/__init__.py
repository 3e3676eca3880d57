"""Spherical depth and contour projections of 3-D meshes, and the
view-invariant classifiers built on them."""

import os as _os

import numba as _numba

# the default layer probes TBB first and warns when its version is too old
_numba.config.THREADING_LAYER = _os.environ.get("NUMBA_THREADING_LAYER", "workqueue")

__version__ = "0.1.0"
