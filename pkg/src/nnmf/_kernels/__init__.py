"""Backend selection for the hot training kernels.

The compiled Cython kernel is preferred when its module built; otherwise
the pure-NumPy fallback is used.  Set ``NNMF_BACKEND=numpy`` or
``NNMF_BACKEND=compiled`` to force a choice (forcing ``compiled`` raises
if the extension is unavailable).

Both backends compute the same quantities in float64; they may differ in
the last bits because summation orders differ.  Within one backend results
are bit-reproducible.
"""

import os

from . import _numpy_backend

try:
    from . import _core as _compiled_backend

    HAVE_COMPILED = True
except ImportError:
    _compiled_backend = None
    HAVE_COMPILED = False

_forced = os.environ.get("NNMF_BACKEND", "").strip().lower()
if _forced == "numpy":
    _active = _numpy_backend
elif _forced == "compiled":
    if not HAVE_COMPILED:
        raise ImportError(
            "NNMF_BACKEND=compiled but the nnmf._kernels._core extension is not built"
        )
    _active = _compiled_backend
elif _forced == "":
    _active = _compiled_backend if HAVE_COMPILED else _numpy_backend
else:
    raise ValueError(f"unknown NNMF_BACKEND value {_forced!r}")


def backend_name() -> str:
    return _active.NAME


def get_backend(name=None):
    """Return a kernel backend module: the active one, 'numpy' or 'compiled'."""
    if name is None:
        return _active
    if name == "numpy":
        return _numpy_backend
    if name == "compiled":
        if not HAVE_COMPILED:
            raise ImportError("compiled kernel backend is not built")
        return _compiled_backend
    raise ValueError(f"unknown backend {name!r}")


forward = _active.forward
fused_gradient = _active.fused_gradient
build_inputs = _numpy_backend.build_inputs
sigmoid = _numpy_backend.sigmoid
