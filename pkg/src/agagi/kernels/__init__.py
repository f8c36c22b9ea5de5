"""Kernel backend selection.

The compiled Cython extension is used when it built successfully; otherwise
the pure-numpy implementation in ``pyref`` takes over.  Set AGAGI_PURE_PYTHON=1
to force the fallback (the benchmark and the parity tests use this seam).
"""

import os

from . import pyref

if os.environ.get("AGAGI_PURE_PYTHON"):
    _impl = pyref
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = pyref

BACKEND = _impl.NAME

conv1d_fwd = _impl.conv1d_fwd
conv1d_bwd = _impl.conv1d_bwd
lstm_fwd = _impl.lstm_fwd
lstm_bwd = _impl.lstm_bwd
