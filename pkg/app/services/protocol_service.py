"""
Message-level execution of the delay-robust push-pull surplus protocol.

Every round k is synchronous: each node broadcasts (x_j(k), c_lj * s_j(k)) to
its out-neighbors, the messages due at k are delivered, then every node
updates. A node weights itself and each message that arrived in this round
equally, so the pull weights of a round always sum to 1.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from app.errors import GammaBoundError
from app.services.delay_service import DelaySchedule, delay_of
from app.services.graph_service import (
    Digraph,
    build_pull_weights,
    build_push_weights,
    is_strongly_connected,
    min_push_weight,
)
from app.utils.metrics import consensus_error

logger = logging.getLogger(__name__)


@dataclass
class NodeState:
    x: float
    s: float = 0.0


@dataclass(frozen=True)
class Message:
    sender: int
    receiver: int
    send_time: int
    x_payload: float
    surplus_payload: float  # already scaled by the sender's push weight


class InFlightQueue:
    """Messages keyed by arrival round"""

    def __init__(self):
        self._due: Dict[int, List[Message]] = defaultdict(list)

    def push(self, message: Message, arrival: int):
        self._due[arrival].append(message)

    def pop_due(self, k: int) -> List[Message]:
        due = self._due.pop(k, [])
        return sorted(due, key=lambda m: (m.receiver, m.sender, m.send_time))

    def surplus_in_transit(self) -> float:
        return math.fsum(m.surplus_payload for msgs in self._due.values() for m in msgs)

    def __len__(self) -> int:
        return sum(len(msgs) for msgs in self._due.values())


@dataclass
class Trajectory:
    """Row k of each array holds the values at iteration k; row 0 is the initial state."""

    x: np.ndarray
    s: np.ndarray
    inflight_surplus: np.ndarray
    error: np.ndarray
    average: float

    @property
    def iterations(self) -> int:
        return self.x.shape[0] - 1

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def mass(self) -> np.ndarray:
        """Total state plus surplus, including surplus still in transit"""
        return self.x.sum(axis=1) + self.s.sum(axis=1) + self.inflight_surplus


def validate_gamma(gamma: float, C: np.ndarray, force: bool = False) -> None:
    bound = min_push_weight(C)
    if 0 < gamma < bound:
        return
    if force:
        logger.warning("gamma=%g outside (0, %g); convergence is not guaranteed", gamma, bound)
        return
    raise GammaBoundError(f"gamma={gamma} must satisfy 0 < gamma < {bound:.6g} (use force to override)")


def initial_states(x0: Sequence[float]) -> List[NodeState]:
    return [NodeState(x=float(v), s=0.0) for v in x0]


def step(
    states: List[NodeState],
    inflight: InFlightQueue,
    g: Digraph,
    schedule: DelaySchedule,
    C: np.ndarray,
    gamma: float,
    k: int,
) -> Tuple[List[NodeState], InFlightQueue]:
    # broadcast
    for i, state in enumerate(states):
        for l in g.out_adj[i]:
            message = Message(
                sender=i,
                receiver=l,
                send_time=k,
                x_payload=state.x,
                surplus_payload=C[l, i] * state.s,
            )
            inflight.push(message, k + delay_of(schedule, (l, i), k))

    # deliver
    received: Dict[int, List[Message]] = defaultdict(list)
    for message in inflight.pop_due(k):
        received[message.receiver].append(message)

    # update
    updated = []
    for j, state in enumerate(states):
        arrived = received.get(j, [])
        r = 1.0 / (1 + len(arrived))
        x_next = gamma * state.s + r * (state.x + sum(m.x_payload for m in arrived))
        s_next = state.x - x_next + C[j, j] * state.s + sum(m.surplus_payload for m in arrived)
        updated.append(NodeState(x=x_next, s=s_next))

    return updated, inflight


def warn_if_disconnected(g: Digraph) -> None:
    if not is_strongly_connected(g):
        logger.warning("Graph is not strongly connected; average consensus will not be reached")


def run_rppac(
    g: Digraph,
    delays: DelaySchedule,
    gamma: float,
    x0: Sequence[float],
    K: int,
    force_gamma: bool = False,
) -> Trajectory:
    C = build_push_weights(g)
    validate_gamma(gamma, C, force_gamma)
    warn_if_disconnected(g)

    states = initial_states(x0)
    inflight = InFlightQueue()
    average = float(np.mean(x0))

    x = np.zeros((K + 1, g.n))
    s = np.zeros((K + 1, g.n))
    transit = np.zeros(K + 1)
    x[0] = x0

    for k in range(K):
        states, inflight = step(states, inflight, g, delays, C, gamma, k)
        x[k + 1] = [st.x for st in states]
        s[k + 1] = [st.s for st in states]
        transit[k + 1] = inflight.surplus_in_transit()

    error = np.array([consensus_error(row, average) for row in x])
    return Trajectory(x=x, s=s, inflight_surplus=transit, error=error, average=average)


def run_ppac(
    g: Digraph,
    gamma: float,
    x0: Sequence[float],
    K: int,
    force_gamma: bool = False,
) -> Trajectory:
    """Delay-free iteration with the static pull matrix R and push matrix C"""
    R = build_pull_weights(g)
    C = build_push_weights(g)
    validate_gamma(gamma, C, force_gamma)

    average = float(np.mean(x0))
    x = np.zeros((K + 1, g.n))
    s = np.zeros((K + 1, g.n))
    x[0] = x0

    for k in range(K):
        x[k + 1] = gamma * s[k] + R @ x[k]
        s[k + 1] = x[k] - x[k + 1] + C @ s[k]

    error = np.array([consensus_error(row, average) for row in x])
    return Trajectory(x=x, s=s, inflight_surplus=np.zeros(K + 1), error=error, average=average)


def final_surplus_bound(traj: Trajectory) -> Tuple[float, float]:
    """(max_j |s_j|, max_j |x_j - average|) at the last iterate"""
    return (
        float(np.abs(traj.s[-1]).max()),
        float(np.abs(traj.x[-1] - traj.average).max()),
    )
