"""Simulation kernels with a compiled core and a numpy fallback.

The backend is chosen once at import.  ``DTDCVA_BACKEND`` may be set to
``python`` or ``cython`` to force one; the default picks the compiled module
when it was built and falls back to numpy otherwise.
"""
from __future__ import annotations

import os

from . import _pykernels

_EXPORTS = (
    "philox4x64", "uniforms", "tail_kernel", "survival_threshold", "advance",
    "conditional_pair", "bvnu", "bvn_lower", "cds_unit_value",
)


def _load_compiled():
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


def get_backend(name: str = "auto"):
    """Return a kernel module by name (``auto``, ``python`` or ``cython``)."""
    if name == "python":
        return _pykernels
    compiled = _load_compiled()
    if name == "cython":
        if compiled is None:
            raise ImportError("compiled kernels are not built; reinstall with Cython available")
        return compiled
    if name != "auto":
        raise ValueError(f"unknown kernel backend {name!r}")
    return compiled if compiled is not None else _pykernels


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _load_compiled() is not None else [])


_impl = get_backend(os.environ.get("DTDCVA_BACKEND", "auto").strip().lower() or "auto")
BACKEND = _impl.BACKEND
TAIL_SWITCH = _pykernels.TAIL_SWITCH
BARRIER_EPS = _pykernels.BARRIER_EPS

philox4x64 = _impl.philox4x64
uniforms = _impl.uniforms
tail_kernel = _impl.tail_kernel
survival_threshold = _impl.survival_threshold
advance = _impl.advance
conditional_pair = _impl.conditional_pair
bvnu = _impl.bvnu
bvn_lower = _impl.bvn_lower
cds_unit_value = _impl.cds_unit_value

__all__ = ["BACKEND", "TAIL_SWITCH", "BARRIER_EPS", "get_backend", "available_backends", *_EXPORTS]
