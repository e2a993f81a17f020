"""Frequency-partitioned super-resolution toolkit.

Splits an image into its four Haar sub-bands, super-resolves each band
with its own adversarially trained generator, re-weights the bands with
a learnable gate and recomposes them through a trainable inverse wavelet
transform. Ships a small reverse-mode autodiff engine so the whole
pipeline trains end-to-end on a plain CPU.
"""

import os

# On small machines OpenBLAS oversubscription makes the many tiny GEMMs
# issued per training step slower, not faster. Pin to one thread unless
# the user chose otherwise. Must happen before numpy is first imported.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS"):
    os.environ.setdefault(_var, "1")
del _var, os

from .autodiff import Tensor, Tape, backward  # noqa: E402
from .errors import (  # noqa: E402
    CheckpointError,
    ConfigError,
    DataError,
    FpsrError,
    NumericError,
    ShapeError,
)

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "FpsrError",
    "ShapeError",
    "NumericError",
    "ConfigError",
    "DataError",
    "CheckpointError",
    "__version__",
]
