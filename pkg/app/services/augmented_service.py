"""
Augmented delay system.

Each node gets tau_bar virtual buffer copies. With n_t = n * (tau_bar + 1):

    x~ = (x, x^(1), ..., x^(tau_bar))    x^(d)(k) = x(k - d)
    s~ = (s, s^(1), ..., s^(tau_bar))    s^(d)(k) = surplus due in d more rounds

and one synchronous round is [x~; s~](k+1) = M(k) [x~; s~](k) with

    M(k) = [[R~(k), H], [J(k), C~(k) - H]].

The surplus layer C^(d)(k) holds the push weight of link (j, i) when the
message sent at k on that link has delay d (send-time indexing).
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from app.errors import DimensionError, SnapshotError
from app.services.delay_service import DelaySchedule
from app.services.graph_service import Digraph, build_push_weights
from app.services.protocol_service import Trajectory, validate_gamma, warn_if_disconnected
from app.utils.metrics import consensus_error

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ArrivalSnapshot:
    """
    arrivals[j, i, d]: a message sent on link (j, i) at k - d with delay d
    arrives at j at k.
    send_layers[j, i, d]: the message sent on link (j, i) at k has delay d.
    """

    arrivals: np.ndarray
    send_layers: np.ndarray

    @property
    def n(self) -> int:
        return self.arrivals.shape[0]

    @property
    def tau_bar(self) -> int:
        return self.arrivals.shape[2] - 1

    def virtual_in_degree(self) -> np.ndarray:
        return self.arrivals.sum(axis=(1, 2))


@dataclass(frozen=True)
class SystemMatrices:
    R_tilde: np.ndarray
    H: np.ndarray
    J: np.ndarray
    C_tilde: np.ndarray
    M: np.ndarray
    R_layers: Tuple[np.ndarray, ...]
    C_layers: Tuple[np.ndarray, ...]
    gamma: float
    n: int
    tau_bar: int

    @property
    def n_tilde(self) -> int:
        return self.n * (self.tau_bar + 1)


@dataclass
class AugmentedTrajectory(Trajectory):
    s_tilde: Optional[np.ndarray] = None

    def augmented_mass(self) -> np.ndarray:
        return self.x.sum(axis=1) + self.s_tilde.sum(axis=1)


def _edge_mask(g: Digraph) -> np.ndarray:
    mask = np.zeros((g.n, g.n), dtype=bool)
    for j, i in g.edges:
        mask[j, i] = True
    return mask


def snapshot_from_schedule(g: Digraph, schedule: DelaySchedule, k: int, tau_bar: Optional[int] = None) -> ArrivalSnapshot:
    tau_bar = schedule.tau_bar if tau_bar is None else tau_bar
    arrivals = np.zeros((g.n, g.n, tau_bar + 1), dtype=bool)
    send_layers = np.zeros((g.n, g.n, tau_bar + 1), dtype=bool)

    for j, i in g.edges:
        sent = schedule.delay((j, i), k)
        if sent > tau_bar:
            raise SnapshotError(f"Delay {sent} on link ({j}, {i}) exceeds tau_bar={tau_bar}")
        send_layers[j, i, sent] = True
        # send times before 0 do not exist
        for d in range(min(tau_bar, k) + 1):
            if schedule.delay((j, i), k - d) == d:
                arrivals[j, i, d] = True

    return ArrivalSnapshot(arrivals=arrivals, send_layers=send_layers)


def random_snapshot(g: Digraph, tau_bar: int, rng: np.random.Generator) -> ArrivalSnapshot:
    """
    Free-standing snapshot with i.i.d. uniform statistics: one send delay per
    link drawn from {0..tau_bar}, each arrival flag set with probability
    1 / (tau_bar + 1).
    """
    mask = _edge_mask(g)
    arrivals = (rng.random((g.n, g.n, tau_bar + 1)) < 1.0 / (tau_bar + 1)) & mask[:, :, None]
    chosen = rng.integers(0, tau_bar + 1, size=(g.n, g.n))
    send_layers = (np.arange(tau_bar + 1)[None, None, :] == chosen[:, :, None]) & mask[:, :, None]
    return ArrivalSnapshot(arrivals=arrivals, send_layers=send_layers)


def _check_snapshot(g: Digraph, snapshot: ArrivalSnapshot) -> None:
    shape = (g.n, g.n, snapshot.tau_bar + 1)
    if snapshot.arrivals.shape != shape or snapshot.send_layers.shape != shape:
        raise SnapshotError(f"Snapshot shape {snapshot.arrivals.shape} does not match graph with n={g.n}")

    mask = _edge_mask(g)
    if (snapshot.arrivals & ~mask[:, :, None]).any() or (snapshot.send_layers & ~mask[:, :, None]).any():
        raise SnapshotError("Snapshot marks a pair that is not a link of the graph")

    per_edge = snapshot.send_layers.sum(axis=2)
    bad = np.argwhere(mask & (per_edge != 1))
    if bad.size:
        j, i = bad[0]
        raise SnapshotError(f"Link ({j}, {i}) has {per_edge[j, i]} send delays at one step; exactly one expected")


def _assemble(R_tilde: np.ndarray, H: np.ndarray, J: np.ndarray, C_tilde: np.ndarray) -> np.ndarray:
    shapes = {R_tilde.shape, H.shape, J.shape, C_tilde.shape}
    if len(shapes) != 1 or R_tilde.shape[0] != R_tilde.shape[1]:
        raise DimensionError(f"Block shapes disagree: {sorted(shapes)}")
    return np.block([[R_tilde, H], [J, C_tilde - H]])


def build_snapshot_matrices(g: Digraph, snapshot: ArrivalSnapshot, gamma: float) -> SystemMatrices:
    _check_snapshot(g, snapshot)

    n, tau_bar = g.n, snapshot.tau_bar
    n_t = n * (tau_bar + 1)
    C = build_push_weights(g)
    eye = np.eye(n)

    w = 1.0 / (1 + snapshot.virtual_in_degree())
    R_layers = []
    C_layers = []
    for d in range(tau_bar + 1):
        R_d = snapshot.arrivals[:, :, d] * w[:, None]
        C_d = np.where(snapshot.send_layers[:, :, d], C, 0.0)
        if d == 0:
            R_d = R_d + np.diag(w)
            C_d = C_d + np.diag(np.diag(C))
        R_layers.append(R_d)
        C_layers.append(C_d)

    R_tilde = np.zeros((n_t, n_t))
    C_tilde = np.zeros((n_t, n_t))
    R_tilde[:n, :] = np.hstack(R_layers)
    C_tilde[:, :n] = np.vstack(C_layers)
    for d in range(1, tau_bar + 1):
        # x^(d)(k+1) = x^(d-1)(k)
        R_tilde[d * n:(d + 1) * n, (d - 1) * n:d * n] = eye
        # s^(d-1)(k+1) picks up s^(d)(k)
        C_tilde[(d - 1) * n:d * n, d * n:(d + 1) * n] = eye

    H = np.zeros((n_t, n_t))
    H[:n, :n] = gamma * eye

    J = np.zeros((n_t, n_t))
    J[:n, :] = -np.hstack(R_layers)
    J[:n, :n] += eye

    return SystemMatrices(
        R_tilde=R_tilde,
        H=H,
        J=J,
        C_tilde=C_tilde,
        M=_assemble(R_tilde, H, J, C_tilde),
        R_layers=tuple(R_layers),
        C_layers=tuple(C_layers),
        gamma=gamma,
        n=n,
        tau_bar=tau_bar,
    )


def assemble_M(sm: SystemMatrices) -> np.ndarray:
    return _assemble(sm.R_tilde, sm.H, sm.J, sm.C_tilde)


def split_M0_M1(sm: SystemMatrices) -> Tuple[np.ndarray, np.ndarray]:
    """M = M0 + M1 with M1 = [[0, H], [0, 0]] carrying only the surplus gain"""
    n_t = sm.n_tilde
    M = assemble_M(sm)
    M0 = M.copy()
    M0[:n_t, n_t:] = 0.0
    M1 = np.zeros_like(M)
    M1[:n_t, n_t:] = sm.H
    return M0, M1


def run_matrix_form(
    g: Digraph,
    delays: DelaySchedule,
    gamma: float,
    x0: Sequence[float],
    K: int,
    force_gamma: bool = False,
) -> AugmentedTrajectory:
    validate_gamma(gamma, build_push_weights(g), force_gamma)
    warn_if_disconnected(g)

    n, tau_bar = g.n, delays.tau_bar
    n_t = n * (tau_bar + 1)
    x0 = np.asarray(x0, dtype=float)
    average = float(np.mean(x0))

    # pre-history buffers hold x(0); no message has a negative send time
    z = np.concatenate([np.tile(x0, tau_bar + 1), np.zeros(n_t)])

    x = np.zeros((K + 1, n))
    s = np.zeros((K + 1, n))
    s_tilde = np.zeros((K + 1, n_t))
    x[0] = x0

    for k in range(K):
        sm = build_snapshot_matrices(g, snapshot_from_schedule(g, delays, k, tau_bar), gamma)
        z = sm.M @ z
        x[k + 1] = z[:n]
        s[k + 1] = z[n_t:n_t + n]
        s_tilde[k + 1] = z[n_t:]

    logger.debug("matrix form: n=%d tau_bar=%d size=%d K=%d", n, tau_bar, 2 * n_t, K)
    error = np.array([consensus_error(row, average) for row in x])
    return AugmentedTrajectory(
        x=x,
        s=s,
        inflight_surplus=s_tilde[:, n:].sum(axis=1),
        error=error,
        average=average,
        s_tilde=s_tilde,
    )


def backward_products(matrices: Iterable[SystemMatrices]) -> Tuple[np.ndarray, np.ndarray]:
    """(R~(k+b)...R~(k+1), (C~(k+b)-H)...(C~(k+1)-H)) for matrices given oldest first"""
    R_bar = None
    E_bar = None
    for sm in matrices:
        E = sm.C_tilde - sm.H
        R_bar = sm.R_tilde if R_bar is None else sm.R_tilde @ R_bar
        E_bar = E if E_bar is None else E @ E_bar
    if R_bar is None:
        raise DimensionError("Empty word: at least one step is required")
    return R_bar, E_bar


def word_products(
    g: Digraph,
    delays: DelaySchedule,
    gamma: float,
    k_start: int,
    beta: int,
) -> Tuple[np.ndarray, np.ndarray]:
    if beta < 1:
        raise DimensionError(f"Word length must be >= 1, got {beta}")
    steps = (
        build_snapshot_matrices(g, snapshot_from_schedule(g, delays, k_start + t), gamma)
        for t in range(1, beta + 1)
    )
    return backward_products(steps)


def random_word_products(
    g: Digraph,
    tau_bar: int,
    gamma: float,
    beta: int,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    steps = (build_snapshot_matrices(g, random_snapshot(g, tau_bar, rng), gamma) for _ in range(beta))
    return backward_products(steps)
