"""Hot numeric kernels, compiled when available.

The Cython extension ``memetron._ckernels`` is preferred; the pure-Python
module ``memetron._pykernels`` is used when the extension is missing or the
environment variable ``MEMETRON_PURE_PYTHON`` is set to a non-empty value.
``BACKEND`` names the implementation in use.
"""

from __future__ import annotations

import os

if os.environ.get("MEMETRON_PURE_PYTHON"):
    from ._pykernels import dominance_counts, levenshtein, mann_whitney_null_counts

    BACKEND = "python"
else:
    try:
        from ._ckernels import dominance_counts, levenshtein, mann_whitney_null_counts

        BACKEND = "cython"
    except ImportError:
        from ._pykernels import dominance_counts, levenshtein, mann_whitney_null_counts

        BACKEND = "python"

__all__ = ["BACKEND", "dominance_counts", "levenshtein", "mann_whitney_null_counts"]
