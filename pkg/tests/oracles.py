"""Brute-force reference implementations the tests compare against.

These are deliberately written differently from the library code paths they
check (character walks, per-row dot products, full sorts).
"""

import numpy as np


def sliding_windows(length, size, overlap):
    """Walk every character offset; open a window at each multiple of the step
    until some window has reached the end of the text."""
    step = size - overlap
    spans = []
    reached_end = False
    for pos in range(length):
        if reached_end:
            break
        if pos % step == 0:
            end = pos + size if pos + size < length else length
            spans.append((pos, end))
            reached_end = end == length
    return spans


def brute_force_top_k(matrix, query, k):
    """Score each row on its own, then fully sort by (-score, insertion index)."""
    q = np.asarray(query, dtype=np.float64)
    scored = [(float(np.dot(np.asarray(row, dtype=np.float64), q)), i) for i, row in enumerate(matrix)]
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [i for _, i in scored[:k]]
