from typing import Optional

import numpy as np


def consensus_error(x: np.ndarray, average: float) -> float:
    """Mean squared deviation from the average: (1/n) e'e with e = x - 1*average"""
    e = np.asarray(x, dtype=float) - average
    return float(e @ e) / e.size


def iterations_to_tolerance(error: np.ndarray, tol: float) -> Optional[int]:
    """First k with error(k) < tol, or None if the horizon ends first"""
    hits = np.flatnonzero(np.asarray(error) < tol)
    return int(hits[0]) if hits.size else None
