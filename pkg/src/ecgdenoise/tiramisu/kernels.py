"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; set
``ECGDENOISE_BACKEND=numpy`` or ``=compiled`` to force one. The two backends
compute the same quantities (within floating-point reassociation) and are
benchmarked against each other by ``benchmarks/bench_backends.py``.
"""

from __future__ import annotations

import os

from . import kernels_numpy

_FUNCTIONS = (
    "conv1d_forward",
    "conv1d_backward",
    "convtr1d_forward",
    "convtr1d_backward",
    "maxpool2_forward",
    "maxpool2_backward",
)

_requested = os.environ.get("ECGDENOISE_BACKEND", "auto").lower()
if _requested not in ("auto", "compiled", "numpy"):
    raise ImportError(f"ECGDENOISE_BACKEND must be auto, compiled or numpy, not {_requested!r}")

_impl = None
if _requested in ("auto", "compiled"):
    try:
        from . import _corekern as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "ECGDENOISE_BACKEND=compiled but the _corekern extension is not built"
            ) from None
if _impl is None:
    _impl = kernels_numpy

BACKEND = "compiled" if _impl is not kernels_numpy else "numpy"


def backend_name() -> str:
    return BACKEND


conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward
convtr1d_forward = _impl.convtr1d_forward
convtr1d_backward = _impl.convtr1d_backward
maxpool2_forward = _impl.maxpool2_forward
maxpool2_backward = _impl.maxpool2_backward
