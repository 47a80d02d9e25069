"""Active kernel set.

``cranopt._kernels_loops`` holds loop-style kernels that numba compiles;
``cranopt._kernels_numpy`` holds vectorized twins. The environment flag
``CRANOPT_DISABLE_NUMBA`` (see ``cranopt._accel``) picks which set backs the
names re-exported here. Both sets stay importable for cross-checking and for
``benchmarks/kernel_bench.py``.
"""

from ._accel import NUMBA_ENABLED
from . import _kernels_loops as loops
from . import _kernels_numpy as vectorized

impl = loops if NUMBA_ENABLED else vectorized

chol_factor = impl.chol_factor
chol_solve = impl.chol_solve
build_system_matrix = impl.build_system_matrix
rates_forward = impl.rates_forward
rates_backward = impl.rates_backward
scale_stats = impl.scale_stats
recover_forward = impl.recover_forward
recover_backward = impl.recover_backward
sumrate_only = impl.sumrate_only
sumrate_with_grad = impl.sumrate_with_grad
one_ring_channel_kernel = impl.one_ring_channel_kernel
bf_search = impl.bf_search

__all__ = [
    "NUMBA_ENABLED",
    "impl",
    "loops",
    "vectorized",
    "chol_factor",
    "chol_solve",
    "build_system_matrix",
    "rates_forward",
    "rates_backward",
    "scale_stats",
    "recover_forward",
    "recover_backward",
    "sumrate_only",
    "sumrate_with_grad",
    "one_ring_channel_kernel",
    "bf_search",
]
