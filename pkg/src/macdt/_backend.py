"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy
fallback. Set ``MACDT_BACKEND=python`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if os.environ.get("MACDT_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernels = _compiled
        BACKEND = "cython"

bfs_distances = kernels.bfs_distances
greedy_search = kernels.greedy_search
exact_search = kernels.exact_search
