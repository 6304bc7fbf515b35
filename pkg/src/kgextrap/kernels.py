"""Kernel backend selection.

The compiled extension is used when it was built; otherwise (or when
``KGEXTRAP_PURE_PYTHON=1``) the numpy fallback is loaded. Both expose
``segment_sum``, ``rpg_adjacency`` and ``random_walk``.
"""
import os

from . import _pykernels

if os.environ.get("KGEXTRAP_PURE_PYTHON") == "1":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

segment_sum = _impl.segment_sum
rpg_adjacency = _impl.rpg_adjacency
random_walk = _impl.random_walk

python_backend = _pykernels


def compiled_backend():
    """Return the compiled kernel module, or None when it was not built."""
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels
