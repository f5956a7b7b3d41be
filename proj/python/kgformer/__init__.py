"""Knowledge-graph transformer: Python access to the C++ core."""

from ._kgformer import (
    compute_metrics,
    evaluate,
    kernel_error_sweep,
    model_gradcheck,
    rank_answer,
    train,
    wl_colors,
)

__all__ = [
    "compute_metrics",
    "evaluate",
    "kernel_error_sweep",
    "model_gradcheck",
    "rank_answer",
    "train",
    "wl_colors",
]
