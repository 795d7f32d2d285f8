"""Backend selection for the hot loops.

The compiled ``_kernels`` extension is used when it imports; otherwise, or
when ``MATCOMP_PURE_PYTHON=1`` is set, the numpy fallback is used.  Both
expose ``factor_gd`` and ``scatter_add`` with identical signatures.
"""
import os

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("MATCOMP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback

factor_gd = _impl.factor_gd
scatter_add = _impl.scatter_add


def available_backends():
    out = {"python": _fallback}
    try:
        from . import _kernels

        out["cython"] = _kernels
    except ImportError:
        pass
    return out
