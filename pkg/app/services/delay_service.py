"""
Per-link delay schedules.

A schedule answers delay((receiver, sender), send_time) with an integer in
[0, tau_bar_ji]. Uniform delays come from a counter-addressed generator: the
draw for (edge, k) depends only on (seed, edge id, k // BLOCK), so queries are
random-access and the node-level and matrix-form simulators see the same
realization whatever order they ask in.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from app.errors import DelaySpecError, DelayTraceError, FileAccessError, UnknownEdgeError
from app.models import DelayKind, DelaySpec
from app.services.graph_service import Digraph, Edge

logger = logging.getLogger(__name__)

BLOCK = 256

Arrival = Tuple[int, int, int]  # (sender, send_time, delay)


@dataclass(frozen=True)
class DelaySchedule:
    graph: Digraph
    spec: DelaySpec
    bounds: Dict[Edge, int]
    # Memo of generated uniform blocks; filling it is idempotent.
    _blocks: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict, compare=False, repr=False)

    @property
    def tau_bar(self) -> int:
        return self.spec.tau_bar

    def delay(self, edge: Edge, k: int) -> int:
        if edge[0] == edge[1]:
            return 0
        bound = self.bounds.get(edge)
        if bound is None:
            raise UnknownEdgeError(f"No link {edge} (receiver, sender) in the graph")

        kind = self.spec.kind
        if kind == DelayKind.ZERO:
            return 0
        if kind == DelayKind.CONSTANT:
            return bound
        if kind == DelayKind.UNIFORM:
            return self._uniform(edge, k, bound)

        try:
            return self.spec.trace[(edge[0], edge[1], k)]
        except (KeyError, TypeError):
            raise DelayTraceError(f"Trace has no delay for link {edge} at k={k}")

    def _uniform(self, edge: Edge, k: int, bound: int) -> int:
        if bound == 0:
            return 0
        edge_id = self.graph.edge_ids[edge]
        key = (edge_id, k // BLOCK)
        block = self._blocks.get(key)
        if block is None:
            rng = np.random.default_rng([self.spec.seed, edge_id, key[1]])
            block = rng.integers(0, bound + 1, size=BLOCK)
            self._blocks[key] = block
        return int(block[k % BLOCK])


def make_schedule(spec: DelaySpec, g: Digraph) -> DelaySchedule:
    if spec.per_link_bounds is not None:
        missing = [e for e in g.sorted_edges() if e not in spec.per_link_bounds]
        if missing:
            raise DelaySpecError(f"Per-link bounds missing for links {missing}")
        bounds = {e: spec.per_link_bounds[e] for e in g.sorted_edges()}
    else:
        bounds = {e: spec.tau_bar for e in g.sorted_edges()}

    for e, bound in bounds.items():
        if bound < 0 or bound > spec.tau_bar:
            raise DelaySpecError(f"Bound {bound} on link {e} outside [0, tau_bar={spec.tau_bar}]")

    if spec.kind == DelayKind.TRACE:
        for (j, i, k), delay in (spec.trace or {}).items():
            if (j, i) not in bounds:
                raise UnknownEdgeError(f"Trace entry for unknown link ({j}, {i})")
            if not 0 <= delay <= bounds[(j, i)]:
                raise DelaySpecError(f"Trace delay {delay} on link ({j}, {i}) at k={k} exceeds its bound")

    logger.debug("Delay schedule kind=%s tau_bar=%d seed=%d", spec.kind.value, spec.tau_bar, spec.seed)
    return DelaySchedule(graph=g, spec=spec, bounds=bounds)


def delay_of(s: DelaySchedule, e: Edge, k: int) -> int:
    return s.delay(e, k)


def arrivals_at(s: DelaySchedule, g: Digraph, j: int, k: int) -> List[Arrival]:
    """
    Messages from in-neighbors of j that arrive exactly at k, as
    (sender, send_time, delay). The implicit self message is not included.
    """
    found = []
    for i in g.in_adj[j]:
        bound = s.bounds[(j, i)]
        for delta in range(min(bound, k) + 1):
            if s.delay((j, i), k - delta) == delta:
                found.append((i, k - delta, delta))
    return sorted(found)


def load_trace_file(path: str) -> Dict[Tuple[int, int, int], int]:
    """Lines "<sender> <receiver> <k> <delay>", 1-based nodes; returns 0-based trace keys"""
    trace = {}
    try:
        with open(path, "r") as f:
            lines = f.readlines()
    except OSError as e:
        raise FileAccessError(f"Cannot read trace file {path}: {e}")

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            sender, receiver, k, delay = (int(v) for v in line.split())
        except ValueError:
            raise DelaySpecError(f"{path}:{lineno}: expected '<sender> <receiver> <k> <delay>'")
        trace[(receiver - 1, sender - 1, k)] = delay
    return trace
