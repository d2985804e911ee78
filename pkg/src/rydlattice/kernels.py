"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``RYDLATTICE_PURE_PYTHON`` is set to a non-empty value
other than ``0``, the pure-Python versions are used.
"""

from __future__ import annotations

import logging
import os

from . import _kernels_py

logger = logging.getLogger(__name__)


def _load():
    if os.environ.get("RYDLATTICE_PURE_PYTHON", "") not in ("", "0"):
        return _kernels_py
    try:
        from . import _kernels
    except ImportError as exc:
        logger.info("compiled kernels unavailable (%s); using Python fallback", exc)
        return _kernels_py
    return _kernels


backend = _load()
BACKEND = backend.BACKEND
python_backend = _kernels_py

liouvillian_apply = backend.liouvillian_apply
drive_apply = backend.drive_apply
kmc_sample = backend.kmc_sample
qjmc_propagate = backend.qjmc_propagate
shell_dress = backend.shell_dress
shell_forward = backend.shell_forward
shell_backward = backend.shell_backward
