"""Geometry of the periodic unit box [0,1)^d: wrapping, minimal displacement, distance.

All positions live on the flat d-dimensional torus with side length 1.  Points are
plain numpy arrays whose last axis has length d; every function broadcasts over
leading axes, so a single point, a particle cloud (N, d) or a displacement matrix
(N, N, d) all work.
"""

from __future__ import annotations

import numpy as np


def wrap(v: np.ndarray) -> np.ndarray:
    """Map coordinates to their canonical representative in [0,1).

    Parameters
    ----------
    v : array_like
        Real coordinates, any shape.

    Returns
    -------
    ndarray with every entry in [0,1), congruent to ``v`` mod 1.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot wrap non-finite coordinates")
    w = v - np.floor(v)
    # floor(v) can round such that w == 1.0 for tiny negative v; fold that edge back
    return np.where(w >= 1.0, w - 1.0, w)


def min_displacement(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Representative of x − y with every coordinate in [−1/2, 1/2).

    Ties at exactly 1/2 map to −1/2, so the result is deterministic.
    """
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return (d + 0.5) - np.floor(d + 0.5) - 0.5


def torus_distance(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Geodesic (wrap-around Euclidean) distance between points on the torus.

    Bounded by sqrt(d)/2.  Broadcasts: for ``x`` of shape (N, 1, d) and ``y`` of
    shape (M, d) this returns the full (N, M) distance matrix.
    """
    disp = min_displacement(x, y)
    return np.sqrt(np.sum(disp * disp, axis=-1))
