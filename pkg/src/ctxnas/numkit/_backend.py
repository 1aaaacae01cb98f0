"""Kernel backend selection.

The compiled extension is preferred when present; `CTXNAS_BACKEND=python`
(or `cython`) forces a choice, and forcing the compiled backend when it is
missing is an error rather than a silent fallback.
"""
import os

_forced = os.environ.get("CTXNAS_BACKEND", "").strip().lower()

if _forced in ("python", "py"):
    from . import _pykernels as kernels
    BACKEND = "python"
elif _forced in ("", "cython", "c"):
    try:
        from . import _ckernels as kernels
        BACKEND = "cython"
    except ImportError:
        if _forced:
            raise
        from . import _pykernels as kernels
        BACKEND = "python"
else:
    raise RuntimeError(f"unknown CTXNAS_BACKEND value: {_forced!r}")

ACT_TANH = kernels.ACT_TANH
ACT_RELU = kernels.ACT_RELU
