"""Convolution kernel backends.

Two interchangeable implementations of the conv2d forward/backward
arithmetic live here:

* ``compiled`` - Cython packing loops calling BLAS directly (built at
  install time, skipped gracefully if no compiler was available);
* ``numpy`` - im2col with strided views and numpy matmul.

The compiled backend is preferred when importable. Selection happens
once at import and can be forced with ``FPSR_KERNELS=compiled|numpy``.
Both backends are deterministic; they agree with each other to float
rounding (tests pin 1e-5).

``benchmarks/bench_conv.py`` compares the two.
"""

import os

from ..errors import ConfigError
from . import _numpy_impl

_choice = os.environ.get("FPSR_KERNELS", "auto")
if _choice not in ("auto", "compiled", "numpy"):
    raise ConfigError(f"FPSR_KERNELS must be auto|compiled|numpy, got {_choice!r}")

_compiled = None
if _choice in ("auto", "compiled"):
    try:
        from . import _compiled_impl as _compiled
    except ImportError:
        if _choice == "compiled":
            raise ConfigError(
                "FPSR_KERNELS=compiled but the extension is not built; "
                "reinstall with a C compiler or unset FPSR_KERNELS")
        _compiled = None

_impl = _compiled if _compiled is not None else _numpy_impl

conv2d_forward = _impl.conv2d_forward
conv2d_grad_input = _impl.conv2d_grad_input
conv2d_grad_weight = _impl.conv2d_grad_weight


def backend_name():
    """Name of the backend selected at import ('compiled' or 'numpy')."""
    return _impl.NAME


def get_backend(name):
    """Fetch a specific backend module (for tests and benchmarks)."""
    if name == "numpy":
        return _numpy_impl
    if name == "compiled":
        from . import _compiled_impl
        return _compiled_impl
    raise ConfigError(f"unknown kernel backend {name!r}")
