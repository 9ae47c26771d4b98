"""t-SNE, conditional t-SNE and revised conditional t-SNE."""

import numba as _numba

# the TBB layer shipped in this environment is too old; avoid the warning
_numba.config.THREADING_LAYER = "workqueue"

from .core import (  # noqa: E402
    DataMatrix,
    EmbedConfig,
    Embedding,
    LabelVector,
    SparseAffinity,
    ValidationError,
    validate_inputs,
)
from .pipeline import embed  # noqa: E402

__all__ = [
    "DataMatrix",
    "EmbedConfig",
    "Embedding",
    "LabelVector",
    "SparseAffinity",
    "ValidationError",
    "embed",
    "validate_inputs",
]
