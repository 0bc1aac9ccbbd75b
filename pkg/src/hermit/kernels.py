"""Kernel backend selection.

The compiled extension (hermit._native) is preferred; the numpy fallback
(hermit._kernels_py) is used when the extension is missing or when the
HERMIT_PURE_PYTHON=1 environment variable forces it.  Both backends expose:

    fit_line(ms, ns) -> (slope, intercept, status)
    scan_outliers(ms, ns, slope, intercept, band, max_outliers) -> idx | None
    route_values(ms, inner_bounds) -> int64 array

Status codes: FIT_OK, FIT_DEGENERATE (zero variance), FIT_EMPTY.
"""

from __future__ import annotations

import os

from hermit import _kernels_py

FIT_OK = _kernels_py.FIT_OK
FIT_DEGENERATE = _kernels_py.FIT_DEGENERATE
FIT_EMPTY = _kernels_py.FIT_EMPTY

if os.environ.get("HERMIT_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from hermit import _native as _impl  # type: ignore[no-redef]

        BACKEND = "native"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

fit_line = _impl.fit_line
scan_outliers = _impl.scan_outliers
route_values = _impl.route_values


def available_backends() -> dict:
    """Importable backends by name; used by the kernel benchmark."""
    backends = {"python": _kernels_py}
    try:
        from hermit import _native

        backends["native"] = _native
    except ImportError:
        pass
    return backends
