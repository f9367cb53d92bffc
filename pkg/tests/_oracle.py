"""Slow, independent reference implementations used to cross-check the
library's vectorized kernels.

Everything here is deliberately written in plain Python loops over floats so
that a bug in the package's numpy code cannot hide in a shared kernel.
"""

from __future__ import annotations

import math


def dot(a, b) -> float:
    return math.fsum(float(x) * float(y) for x, y in zip(a, b))


def norm(a) -> float:
    return math.sqrt(math.fsum(float(x) * float(x) for x in a))


def euclidean(a, b) -> float:
    return math.sqrt(math.fsum((float(x) - float(y)) ** 2 for x, y in zip(a, b)))


def angular(a, b) -> float:
    na, nb = norm(a), norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("angular distance undefined for zero vectors")
    cos = dot(a, b) / (na * nb)
    cos = max(-1.0, min(1.0, cos))
    return math.sqrt(max(0.0, 2.0 - 2.0 * cos))


def distance(a, b, metric: str) -> float:
    if metric == "angular":
        return angular(a, b)
    if metric == "euclidean":
        return euclidean(a, b)
    raise ValueError(metric)


def top_k(items, q, k: int, metric: str) -> list[tuple[int, float]]:
    """Exact k nearest items, ties broken by ascending item id."""
    scored = [(distance(row, q, metric), i) for i, row in enumerate(items)]
    scored.sort(key=lambda pair: (pair[0], pair[1]))
    return [(i, d) for d, i in scored[:k]]
