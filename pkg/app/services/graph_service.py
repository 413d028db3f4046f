"""
Directed network model.

Nodes are 0-based internally. An edge is stored as (receiver j, sender i):
node i transmits to node j. Self-loops are never stored; every node implicitly
hears itself, which is where the "+1" in the weight rules comes from.
"""

import logging
import os
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from app.errors import FileAccessError, GraphFormatError
from app.models import GraphInfo

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]


@dataclass(frozen=True)
class Digraph:
    n: int
    edges: FrozenSet[Edge]
    in_adj: Tuple[Tuple[int, ...], ...]
    out_adj: Tuple[Tuple[int, ...], ...]
    edge_ids: Dict[Edge, int]

    @property
    def m(self) -> int:
        return len(self.edges)

    def in_degree(self, j: int) -> int:
        return len(self.in_adj[j])

    def out_degree(self, j: int) -> int:
        return len(self.out_adj[j])

    def has_edge(self, receiver: int, sender: int) -> bool:
        return (receiver, sender) in self.edges

    def sorted_edges(self) -> List[Edge]:
        return sorted(self.edges)

    def to_networkx(self) -> nx.DiGraph:
        """Information-flow orientation: sender -> receiver"""
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from((i, j) for j, i in self.edges)
        return graph


@dataclass(frozen=True)
class WeightMatrices:
    R: np.ndarray
    C: np.ndarray


def _build(n: int, edges: Iterable[Edge]) -> Digraph:
    edge_set = frozenset(edges)
    in_adj = [[] for _ in range(n)]
    out_adj = [[] for _ in range(n)]
    for j, i in sorted(edge_set):
        in_adj[j].append(i)
        out_adj[i].append(j)
    return Digraph(
        n=n,
        edges=edge_set,
        in_adj=tuple(tuple(sorted(a)) for a in in_adj),
        out_adj=tuple(tuple(sorted(a)) for a in out_adj),
        edge_ids={edge: idx for idx, edge in enumerate(sorted(edge_set))},
    )


def from_edge_list(n: int, pairs: Sequence[Tuple[int, int]]) -> Digraph:
    """
    Build a graph from 1-based (receiver, sender) pairs, the labelling used
    in edge files and in the reference network.
    """
    if n < 1:
        raise GraphFormatError(f"Node count must be positive, got {n}")

    edges = []
    seen = set()
    for receiver, sender in pairs:
        if not (1 <= receiver <= n and 1 <= sender <= n):
            raise GraphFormatError(f"Edge ({receiver}, {sender}) out of range 1..{n}")
        if receiver == sender:
            raise GraphFormatError(f"Explicit self-loop on node {receiver}")
        if (receiver, sender) in seen:
            raise GraphFormatError(f"Duplicate edge ({receiver}, {sender})")
        seen.add((receiver, sender))
        edges.append((receiver - 1, sender - 1))

    return _build(n, edges)


def is_strongly_connected(g: Digraph) -> bool:
    return nx.is_strongly_connected(g.to_networkx())


def build_pull_weights(g: Digraph) -> np.ndarray:
    """Row-stochastic R: node j splits 1 equally over itself and its in-neighbors"""
    R = np.zeros((g.n, g.n))
    for j in range(g.n):
        w = 1.0 / (1 + g.in_degree(j))
        R[j, j] = w
        R[j, list(g.in_adj[j])] = w
    return R


def build_push_weights(g: Digraph) -> np.ndarray:
    """Column-stochastic C: node i splits its surplus equally over itself and its out-neighbors"""
    C = np.zeros((g.n, g.n))
    for i in range(g.n):
        w = 1.0 / (1 + g.out_degree(i))
        C[i, i] = w
        C[list(g.out_adj[i]), i] = w
    return C


def build_weights(g: Digraph) -> WeightMatrices:
    return WeightMatrices(R=build_pull_weights(g), C=build_push_weights(g))


def min_push_weight(C: np.ndarray) -> float:
    """Smallest positive push weight; gamma must stay strictly below it"""
    return float(C[C > 0].min())


def degree_table(g: Digraph) -> List[Tuple[int, int]]:
    return [(g.in_degree(j), g.out_degree(j)) for j in range(g.n)]


def graph_info(g: Digraph) -> GraphInfo:
    degrees = degree_table(g)
    return GraphInfo(
        n=g.n,
        m=g.m,
        in_degrees=[d[0] for d in degrees],
        out_degrees=[d[1] for d in degrees],
        strongly_connected=is_strongly_connected(g),
        min_push_weight=min_push_weight(build_push_weights(g)),
    )


def random_strongly_connected(n: int, p: float, rng: np.random.Generator) -> Digraph:
    """
    Random digraph that is strongly connected by construction: a directed
    cycle through a random node order plus each remaining ordered pair with
    probability p.
    """
    if n == 1:
        return _build(1, [])
    order = rng.permutation(n)
    edges = {(int(order[(t + 1) % n]), int(order[t])) for t in range(n)}
    for j in range(n):
        for i in range(n):
            if i != j and (j, i) not in edges and rng.random() < p:
                edges.add((j, i))
    return _build(n, edges)


def parse_edge_text(text: str, source: str = "<text>") -> Digraph:
    """
    Edge-list format: header "n=<count>" first, then one "<sender> <receiver>"
    per line, 1-based. Lines starting with '#' and blank lines are skipped.
    """
    n: Optional[int] = None
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if n is None:
            if not line.startswith("n="):
                raise GraphFormatError(f"{source}:{lineno}: expected header 'n=<count>'")
            try:
                n = int(line[2:])
            except ValueError:
                raise GraphFormatError(f"{source}:{lineno}: bad node count {line[2:]!r}")
            continue
        fields = line.split()
        if len(fields) != 2:
            raise GraphFormatError(f"{source}:{lineno}: expected '<sender> <receiver>'")
        try:
            sender, receiver = int(fields[0]), int(fields[1])
        except ValueError:
            raise GraphFormatError(f"{source}:{lineno}: non-integer node index")
        pairs.append((receiver, sender))

    if n is None:
        raise GraphFormatError(f"{source}: missing header 'n=<count>'")
    return from_edge_list(n, pairs)


def load_edge_file(path: str) -> Digraph:
    try:
        with open(path, "r") as f:
            text = f.read()
    except OSError as e:
        raise FileAccessError(f"Cannot read graph file {path}: {e}")

    g = parse_edge_text(text, source=os.path.basename(path))
    logger.debug("Loaded %s: n=%d m=%d", path, g.n, g.m)
    return g


def dump_edge_file(g: Digraph, path: str) -> None:
    lines = [f"n={g.n}"]
    lines += [f"{i + 1} {j + 1}" for j, i in sorted(g.edges, key=lambda e: (e[1], e[0]))]
    try:
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as e:
        raise FileAccessError(f"Cannot write graph file {path}: {e}")
