"""Select the compiled core when importable, else the numpy fallback.

Set ``PIPSCREEN_BACKEND=python`` to force the fallback, or ``cython`` to
fail loudly when the extension is missing.
"""
import importlib
import os

_choice = os.environ.get("PIPSCREEN_BACKEND", "").strip().lower()

if _choice == "python":
    from . import _fallback as impl
else:
    try:
        from . import _core as impl
    except ImportError:
        if _choice == "cython":
            raise
        from . import _fallback as impl

BACKEND = impl.NAME
corr_matrix = impl.corr_matrix
gasp_loglik = impl.gasp_loglik


def load(name):
    """Return the kernel module for ``name`` ("cython" or "python")."""
    if name == "python":
        return importlib.import_module("pipscreen._fallback")
    if name == "cython":
        return importlib.import_module("pipscreen._core")
    raise ValueError(f"unknown backend {name!r}")


def available():
    names = ["python"]
    try:
        load("cython")
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names
