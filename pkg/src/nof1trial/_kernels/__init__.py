"""Simulation kernel backends.

The compiled extension is preferred when it imported cleanly; the pure-Python
loop is the reference implementation and the fallback. Both produce identical
trajectories bit for bit. Set NOF1TRIAL_PURE_PYTHON=1 to force the fallback.
"""

from __future__ import annotations

import os

from . import pyloop

segment_loop_callback = pyloop.segment_loop_callback
fill_burn_in = pyloop.fill_burn_in
python_segment_loop = pyloop.segment_loop

if os.environ.get("NOF1TRIAL_PURE_PYTHON", "") == "1":
    _native = None
else:
    try:
        from . import _native
    except ImportError:
        _native = None

if _native is not None:
    segment_loop = _native.segment_loop
    BACKEND = "native"
else:
    segment_loop = pyloop.segment_loop
    BACKEND = "python"

native_segment_loop = _native.segment_loop if _native is not None else None
