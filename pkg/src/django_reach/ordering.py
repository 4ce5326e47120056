"""
Variable orders: the combined dependency matrix, locality metrics and Sloan's profile reduction over the
variable co-occurrence graph.
"""
__author__ = "Thorin Schiffer"

import logging
from dataclasses import dataclass, replace
from typing import Dict, Sequence, Tuple

import networkx as nx

from django_reach.depmatrix import DependencyMatrices, permute_matrices
from django_reach.utils import permute

logger = logging.getLogger(__name__)

W1 = 1
W2 = 2

_INACTIVE, _PREACTIVE, _ACTIVE, _POSTACTIVE = range(4)


@dataclass(frozen=True)
class VariableOrder:
    """
    perm[p] is the original index of the variable placed at position p
    """

    perm: Tuple[int, ...]

    def __post_init__(self):
        if sorted(self.perm) != list(range(len(self.perm))):
            raise ValueError(f"{self.perm} is not a permutation")

    @classmethod
    def identity(cls, n: int):
        return cls(tuple(range(n)))

    @property
    def inverse(self) -> "VariableOrder":
        inv = [0] * len(self.perm)
        for p, j in enumerate(self.perm):
            inv[j] = p
        return VariableOrder(tuple(inv))

    def names(self, variables: Sequence[str]) -> Tuple[str, ...]:
        return tuple(permute(variables, self.perm))


def combined_matrix(dm: DependencyMatrices) -> Tuple[Tuple[int, ...], ...]:
    return tuple(tuple(r | w for r, w in zip(rr, wr)) for rr, wr in zip(dm.rm, dm.wm))


def variable_graph(cm, n: int = None) -> nx.Graph:
    """
    Variables as nodes, an edge between two variables whenever some group depends on both
    """
    n = len(cm[0]) if n is None and cm else (n or 0)
    graph = nx.Graph()
    graph.add_nodes_from(range(n))
    for row in cm:
        cols = [j for j, bit in enumerate(row) if bit]
        graph.add_edges_from((a, b) for i, a in enumerate(cols) for b in cols[i + 1 :])
    return graph


def metrics(cm, order: VariableOrder) -> Dict[str, int]:
    """
    Bandwidth of the variable graph and total event span of the rows under the order
    """
    pos = order.inverse.perm
    graph = variable_graph(cm, len(order.perm))
    bandwidth = max((abs(pos[a] - pos[b]) for a, b in graph.edges), default=0)
    span = 0
    for row in cm:
        placed = [pos[j] for j, bit in enumerate(row) if bit]
        if placed:
            span += max(placed) - min(placed) + 1
    return {"bandwidth": bandwidth, "total_event_span": span}


def _eccentric(graph: nx.Graph, start: int):
    distances = nx.single_source_shortest_path_length(graph, start)
    depth = max(distances.values())
    last = [v for v, d in distances.items() if d == depth]
    return depth, min(last, key=lambda v: (graph.degree[v], v))


def pseudo_peripheral_pair(graph: nx.Graph) -> Tuple[int, int]:
    """
    Start and end node for Sloan: repeated breadth first searches moving to a far node of least degree
    until the eccentricity stops growing
    """
    start = min(graph.nodes, key=lambda v: (graph.degree[v], v))
    depth, end = _eccentric(graph, start)
    while True:
        further, candidate = _eccentric(graph, end)
        if further <= depth:
            return start, end
        start, end, depth = end, candidate, further


def _sloan_component(graph: nx.Graph) -> Tuple[int, ...]:
    start, end = pseudo_peripheral_pair(graph)
    distance = nx.single_source_shortest_path_length(graph, end)
    priority = {v: W1 * distance[v] - W2 * (graph.degree[v] + 1) for v in graph.nodes}
    status = dict.fromkeys(graph.nodes, _INACTIVE)
    status[start] = _PREACTIVE
    queue = {start}
    order = []
    while queue:
        v = min(queue, key=lambda u: (-priority[u], u))
        queue.discard(v)
        if status[v] == _PREACTIVE:
            for u in graph.adj[v]:
                priority[u] += W2
                if status[u] == _INACTIVE:
                    status[u] = _PREACTIVE
                    queue.add(u)
        order.append(v)
        status[v] = _POSTACTIVE
        for u in graph.adj[v]:
            if status[u] != _PREACTIVE:
                continue
            status[u] = _ACTIVE
            priority[u] += W2
            for w in graph.adj[u]:
                if status[w] == _POSTACTIVE:
                    continue
                priority[w] += W2
                if status[w] == _INACTIVE:
                    status[w] = _PREACTIVE
                    queue.add(w)
    return tuple(order)


def sloan_order(cm, n: int = None) -> VariableOrder:
    """
    Sloan's ordering of the variables, component by component in order of their smallest variable.
    Falls back to the natural order when that has the smaller bandwidth.
    @param cm: combined M x N dependency matrix
    @param n: number of variables, needed when the matrix has no rows
    @return: the variable order
    """
    graph = variable_graph(cm, n)
    perm = []
    for component in sorted(nx.connected_components(graph), key=min):
        if len(component) == 1:
            perm.extend(component)
        else:
            perm.extend(_sloan_component(graph.subgraph(component)))
    order = VariableOrder(tuple(perm))
    natural = VariableOrder.identity(len(perm))
    widened, kept = metrics(cm, order)["bandwidth"], metrics(cm, natural)["bandwidth"]
    if widened > kept:
        logger.info("Sloan order %s has bandwidth %d > %d, keeping the natural order", list(order.perm), widened, kept)
        return natural
    return order


def apply_order(em, dm: DependencyMatrices, order: VariableOrder):
    """
    Permutes variables, domains, initial states and matrix columns consistently
    @return: (reordered machine, reordered matrices)
    """
    perm = order.perm
    reordered = replace(
        em,
        variables=tuple(permute(em.variables, perm)),
        domains=tuple(permute(em.domains, perm)),
        initial_states=tuple(sorted(tuple(permute(s, perm)) for s in em.initial_states)),
    )
    return reordered, permute_matrices(dm, perm)
