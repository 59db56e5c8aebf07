"""Kernel backend selection.

The compiled ``_kernels`` extension is used when it imports; setting the
environment variable IBPL_PURE_PYTHON=1 forces the numpy fallback.
"""

import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

_compiled = None
if not os.environ.get("IBPL_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError as exc:  # extension not built
        log.debug("compiled kernels unavailable (%s); using pure-Python fallback", exc)
        _compiled = None

kernels = _compiled if _compiled is not None else _pykernels
BACKEND = "compiled" if _compiled is not None else "python"


def get(name):
    """Return a kernel module by name: 'compiled', 'python', or 'auto'."""
    if name == "auto":
        return kernels
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _kernels  # raises ImportError when not built

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def compiled_available():
    try:
        get("compiled")
    except ImportError:
        return False
    return True
