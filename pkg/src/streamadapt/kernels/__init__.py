"""Training-kernel backend selection.

The compiled extension is used when it imported cleanly; otherwise the
pure-python reference takes over.  Setting ``STREAMADAPT_PURE`` to a
non-empty value other than ``0`` forces the reference backend.
"""

from __future__ import annotations

import os

_force_pure = os.environ.get("STREAMADAPT_PURE", "") not in ("", "0")

if _force_pure:
    from streamadapt.kernels import _ref as _impl
else:
    try:
        from streamadapt.kernels import _hot as _impl  # type: ignore[no-redef]
    except ImportError:
        from streamadapt.kernels import _ref as _impl  # type: ignore[no-redef]

BACKEND: str = "pure" if _impl.__name__.endswith("_ref") else "compiled"

ce_sgd_step = _impl.ce_sgd_step
discriminative_pass = _impl.discriminative_pass

__all__ = ["BACKEND", "ce_sgd_step", "discriminative_pass"]
