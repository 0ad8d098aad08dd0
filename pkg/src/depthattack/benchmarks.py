"""Standard bi-objective benchmark pieces used to sanity-check the optimizer."""

from __future__ import annotations

import numpy as np


def zdt1(x: np.ndarray) -> np.ndarray:
    """Convex-front benchmark: f1 = x0, f2 = g * (1 - sqrt(f1 / g)).

    Variables live in [0, 1]; the optimal front is f2 = 1 - sqrt(f1) at
    x1.. = 0.
    """
    x = np.asarray(x, dtype=np.float64)
    f1 = float(x[0])
    g = 1.0 + 9.0 * float(np.sum(x[1:])) / max(len(x) - 1, 1)
    f2 = g * (1.0 - np.sqrt(f1 / g))
    return np.array([f1, f2])


def zdt1_evaluator(x: np.ndarray) -> tuple[np.ndarray, float]:
    """zdt1 wrapped in the engine's evaluator contract (always feasible)."""
    return zdt1(x), 0.0


def hypervolume_2d(front: np.ndarray, ref_point: tuple[float, float] = (1.1, 1.1)) -> float:
    """Dominated area between a minimization front and a reference point.

    Points not strictly better than the reference in both objectives
    contribute nothing.  Exact for two objectives: sort by f1 and sum the
    staircase rectangles.
    """
    front = np.asarray(front, dtype=np.float64)
    if front.size == 0:
        return 0.0
    rx, ry = ref_point
    pts = front[(front[:, 0] < rx) & (front[:, 1] < ry)]
    if pts.shape[0] == 0:
        return 0.0
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    # staircase scan: each point adds the rectangle between its f2 and the
    # best f2 seen at smaller f1
    best_before = np.minimum.accumulate(np.concatenate([[ry], pts[:, 1]]))[:-1]
    heights = np.maximum(best_before - pts[:, 1], 0.0)
    return float(np.sum((rx - pts[:, 0]) * heights))
