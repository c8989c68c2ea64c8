"""Selects the kernel backend at import time.

The compiled Cython extension is preferred when it has been built; otherwise
the numpy implementation in :mod:`survmediate._kernels_py` is used. Set the
environment variable ``SURVMEDIATE_BACKEND`` to ``python`` or ``compiled`` to
force one side (``compiled`` raises if the extension is unavailable).
"""

from __future__ import annotations

import os

from . import _kernels_py

_forced = os.environ.get("SURVMEDIATE_BACKEND", "").strip().lower()

if _forced in {"python", "py"}:
    kernels = _kernels_py
elif _forced == "compiled":
    from . import _kernels as kernels  # type: ignore[attr-defined]
elif _forced:
    raise ValueError(
        f"SURVMEDIATE_BACKEND={_forced!r} not understood; use 'python' or 'compiled'"
    )
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined,no-redef]
    except ImportError:
        kernels = _kernels_py


def backend_name() -> str:
    """Name of the active kernel backend ('compiled' or 'python')."""
    return kernels.BACKEND
