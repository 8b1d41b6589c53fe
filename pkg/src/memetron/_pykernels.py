"""Pure-Python reference versions of the hot kernels.

Used when the compiled extension is unavailable or ``MEMETRON_PURE_PYTHON``
is set. Semantics must match ``_ckernels`` exactly.
"""

from __future__ import annotations

from typing import Sequence


def levenshtein(a: str, b: str) -> int:
    """Unit-cost insert/delete/substitute edit distance."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def dominance_counts(a: Sequence[float], b: Sequence[float]) -> tuple[int, int]:
    """``(#{a_i > b_j}, #{a_i < b_j})`` over all cross pairs."""
    gt = lt = 0
    for x in a:
        for y in b:
            if x > y:
                gt += 1
            elif x < y:
                lt += 1
    return gt, lt


def mann_whitney_null_counts(m: int, n: int) -> list[int]:
    """Number of rank arrangements giving each U in ``0..m*n`` (no ties)."""
    if m < 0 or n < 0:
        raise ValueError("sample sizes must be non-negative")
    # f[j][u]: arrangements of i x-values and j y-values with U = u; roll over i.
    f = [[1] for _ in range(n + 1)]
    for i in range(1, m + 1):
        g = [[1]]
        for j in range(1, n + 1):
            size = i * j + 1
            row = [0] * size
            left = g[j - 1]  # last element is a y: U unchanged
            for u, c in enumerate(left):
                row[u] += c
            up = f[j]  # last element is an x: it beats all j y-values
            for u, c in enumerate(up):
                row[u + j] += c
            g.append(row)
        f = g
    return f[n]
