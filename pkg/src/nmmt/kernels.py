"""Gibbs kernel selection: compiled extension when available, pure Python otherwise.

Set ``NMMT_PURE_PYTHON=1`` to force the fallback.  Both kernels produce
bit-identical draws for the same inputs; ``nmmt bench`` measures the speed
difference and asserts the agreement.
"""

from __future__ import annotations

import os

from . import _gibbs_py

try:
    from . import _gibbs as _gibbs_ext
except ImportError:  # pragma: no cover - depends on the build environment
    _gibbs_ext = None


def available_kernels() -> dict:
    """Name -> module map of importable kernels."""
    out = {"python": _gibbs_py}
    if _gibbs_ext is not None:
        out["compiled"] = _gibbs_ext
    return out


def active_kernel():
    """The kernel module the sampler will use."""
    if os.environ.get("NMMT_PURE_PYTHON", "") not in ("", "0"):
        return _gibbs_py
    return _gibbs_ext if _gibbs_ext is not None else _gibbs_py


def active_kernel_name() -> str:
    return active_kernel().KERNEL_NAME
