"""
Eigenvalue-modulus analysis of the one-step system matrix M(k).

The spectral gap is |lambda_1| - |lambda_2|; a larger gap means faster
convergence. With delays M(k) changes every round, so a "mean gap" is the
average over independently sampled snapshots.
"""

import logging
from typing import Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from app.errors import DimensionError
from app.models import SpectrumSummary, SweepRow, SweepTable
from app.services.augmented_service import (
    ArrivalSnapshot,
    build_snapshot_matrices,
    random_snapshot,
    snapshot_from_schedule,
)
from app.services.delay_service import DelaySchedule
from app.services.graph_service import Digraph, build_push_weights, min_push_weight

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-12
DEFAULT_SAMPLES = 100

SnapshotSource = Union[ArrivalSnapshot, Tuple[DelaySchedule, int], np.random.Generator]


def eigenvalues(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"Expected a square matrix, got shape {A.shape}")
    return scipy.linalg.eigvals(A)


def eigen_moduli(A: np.ndarray) -> SpectrumSummary:
    moduli = np.sort(np.abs(eigenvalues(A)))[::-1]
    # a 1x1 matrix has no second eigenvalue; treat it as 0
    second = moduli[1] if moduli.size > 1 else 0.0
    gap = float(moduli[0] - second)
    if gap < TIE_TOLERANCE:
        gap = 0.0
    return SpectrumSummary(moduli=moduli.tolist(), gap=gap)


def spectral_radius(A: np.ndarray) -> float:
    return float(np.abs(eigenvalues(A)).max())


def spectra_match(a: np.ndarray, b: np.ndarray, tol: float = 1e-8, cluster_radius: float = 0.1) -> bool:
    """
    Multiset equality of two spectra. Both spectra are pooled and grouped by
    proximity first; each group must hold as many eigenvalues from a as from b,
    with centroids within tol. Defective eigenvalues scatter by about
    eps**(1/size) around the true value but the centroid of the scattered
    group stays accurate.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.size != b.size:
        return False
    if a.size == 0:
        return True

    points = np.concatenate([a, b])
    adjacency = np.abs(points[:, None] - points[None, :]) < cluster_radius
    _, labels = connected_components(adjacency, directed=False)
    labels_a, labels_b = labels[:a.size], labels[a.size:]
    for label in np.unique(labels):
        group_a = a[labels_a == label]
        group_b = b[labels_b == label]
        if group_a.size != group_b.size:
            logger.debug("spectra differ: cluster near %s has %d vs %d eigenvalues",
                         np.round(points[labels == label].mean(), 6), group_a.size, group_b.size)
            return False
        if abs(group_a.mean() - group_b.mean()) >= tol:
            logger.debug("spectra differ: cluster centroids %s vs %s", group_a.mean(), group_b.mean())
            return False
    return True


def _resolve_snapshot(g: Digraph, tau_bar: int, source: SnapshotSource) -> ArrivalSnapshot:
    if isinstance(source, ArrivalSnapshot):
        return source
    if isinstance(source, np.random.Generator):
        return random_snapshot(g, tau_bar, source)
    schedule, k = source
    return snapshot_from_schedule(g, schedule, k, tau_bar)


def spectral_gap_of(g: Digraph, gamma: float, tau_bar: int, snapshot_source: SnapshotSource) -> float:
    snapshot = _resolve_snapshot(g, tau_bar, snapshot_source)
    sm = build_snapshot_matrices(g, snapshot, gamma)
    return eigen_moduli(sm.M).gap


def _snapshots(g: Digraph, tau_bar: int, samples: int, rng: np.random.Generator):
    # without delays every snapshot is the same matrix
    count = 1 if tau_bar == 0 else samples
    return [random_snapshot(g, tau_bar, rng) for _ in range(count)]


def _mean_gap(g: Digraph, gamma: float, snapshots: Sequence[ArrivalSnapshot]) -> float:
    gaps = [eigen_moduli(build_snapshot_matrices(g, snap, gamma).M).gap for snap in snapshots]
    return float(np.mean(gaps))


def sweep_gamma(
    g: Digraph,
    tau_bar: int,
    gamma_grid: Sequence[float],
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> SweepTable:
    """Mean gap per gamma. All gammas share one set of sampled snapshots."""
    snapshots = _snapshots(g, tau_bar, samples, np.random.default_rng([seed, tau_bar]))
    table = SweepTable(parameter="gamma")
    for gamma in gamma_grid:
        table.rows.append(SweepRow(value=float(gamma), mean_gap=_mean_gap(g, gamma, snapshots)))
        logger.debug("tau_bar=%d gamma=%g mean_gap=%g", tau_bar, gamma, table.rows[-1].mean_gap)
    return table


def mean_gap_vs_delay(
    g: Digraph,
    gamma: float,
    tau_bar_list: Sequence[int],
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> SweepTable:
    table = SweepTable(parameter="tau_bar")
    for tau_bar in tau_bar_list:
        snapshots = _snapshots(g, tau_bar, samples, np.random.default_rng([seed, tau_bar]))
        table.rows.append(SweepRow(value=float(tau_bar), mean_gap=_mean_gap(g, gamma, snapshots)))
        logger.debug("gamma=%g tau_bar=%d mean_gap=%g", gamma, tau_bar, table.rows[-1].mean_gap)
    return table


def gamma_upper_bound(g: Digraph) -> float:
    """
    Conservative gain bound c_min: below it the top-left block of C~(k) - H
    keeps a positive diagonal, which guarantees rho(C~(k) - H) < 1 over
    tau_bar + 1 steps. Larger gains may still converge.
    """
    return min_push_weight(build_push_weights(g))


def best_gamma(table: SweepTable) -> SweepRow:
    """Row of a gamma sweep with the largest mean gap"""
    if table.parameter != "gamma" or not table.rows:
        raise ValueError("best_gamma needs a non-empty gamma sweep")
    return max(table.rows, key=lambda row: row.mean_gap)
