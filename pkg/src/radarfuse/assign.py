"""Minimum-cost one-to-one assignment on (possibly rectangular) cost matrices."""
from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

# Pairings with this cost (or any non-finite cost) are never returned.
FORBIDDEN = np.inf


def solve_assignment(costs) -> list[tuple[int, int]]:
    """Return the (row, col) pairs of a minimum-total-cost matching.

    Forbidden entries (``inf``/``nan``) are replaced by a finite cost larger
    than any achievable sum of real entries, solved, then stripped from the
    output. Pairs are sorted by row.
    """
    C = np.asarray(costs, dtype=float)
    if C.ndim != 2 or C.size == 0:
        return []
    allowed = np.isfinite(C)
    if not allowed.any():
        return []
    finite = C[allowed]
    span = float(finite.max() - min(finite.min(), 0.0))
    big = (span + 1.0) * (min(C.shape) + 1) + abs(float(finite.max()))
    work = np.where(allowed, C, big)
    rows, cols = linear_sum_assignment(work)
    return [(int(r), int(c)) for r, c in zip(rows, cols) if allowed[r, c]]


def total_cost(costs, pairs) -> float:
    C = np.asarray(costs, dtype=float)
    return float(sum(C[r, c] for r, c in pairs))
