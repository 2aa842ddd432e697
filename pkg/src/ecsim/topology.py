"""Grid placement, 3x3-block connectivity, lazy random-walk mobility and
minimum-hop routing.

Two nodes are connected when their cells lie in the same 3x3 block centered
on either node's cell (the block truncates at grid borders); nodes sharing a
cell always connect. Mobility is a lazy random walk: with probability
``p_move`` per step a node hops to a uniformly chosen in-bounds 4-adjacent
cell.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator

from ecsim.core import NodeId


@dataclass(frozen=True)
class Position:
    x: int
    y: int


# Fixed scan order for candidate steps keeps trajectories reproducible.
_STEP_OFFSETS = ((0, -1), (0, 1), (-1, 0), (1, 0))


class Grid:
    """Rectangular cell grid with node occupancy; cells may hold many nodes."""

    def __init__(self, width: int, height: int):
        if width < 1 or height < 1:
            raise ValueError(f"grid dimensions must be >= 1, got {width}x{height}")
        self.width = width
        self.height = height
        self._where: dict[NodeId, Position] = {}
        self._cells: dict[Position, set[NodeId]] = {}

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def place(self, node: NodeId, pos: Position) -> None:
        if node in self._where:
            raise ValueError(f"node {node} already placed")
        if not self.in_bounds(pos.x, pos.y):
            raise ValueError(f"position {pos} outside {self.width}x{self.height} grid")
        self._where[node] = pos
        self._cells.setdefault(pos, set()).add(node)

    def remove(self, node: NodeId) -> None:
        pos = self.position_of(node)
        cell = self._cells[pos]
        cell.discard(node)
        if not cell:
            del self._cells[pos]
        del self._where[node]

    def move(self, node: NodeId, pos: Position) -> None:
        self.remove(node)
        self.place(node, pos)

    def position_of(self, node: NodeId) -> Position:
        try:
            return self._where[node]
        except KeyError:
            raise LookupError(f"node {node} is not placed") from None

    def is_placed(self, node: NodeId) -> bool:
        return node in self._where

    def nodes(self) -> list[NodeId]:
        return sorted(self._where)

    def block(self, pos: Position) -> Iterator[Position]:
        """Cells of the 3x3 block centered on ``pos``, truncated at borders."""
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                x, y = pos.x + dx, pos.y + dy
                if self.in_bounds(x, y):
                    yield Position(x, y)

    def neighbors(self, node: NodeId) -> set[NodeId]:
        """All other nodes whose cell lies in the 3x3 block around ``node``."""
        pos = self.position_of(node)
        out: set[NodeId] = set()
        for cell in self.block(pos):
            out |= self._cells.get(cell, set())
        out.discard(node)
        return out


def move_step(grid: Grid, node: NodeId, rng: random.Random, p_move: float) -> Position:
    """One mobility step; returns the (possibly unchanged) position.

    Draws from ``rng`` only when p_move > 0 so disabled mobility leaves the
    stream untouched.
    """
    if not 0.0 <= p_move <= 1.0:
        raise ValueError(f"p_move must lie in [0, 1], got {p_move}")
    pos = grid.position_of(node)
    if p_move == 0.0:
        return pos
    if rng.random() >= p_move:
        return pos
    candidates = [
        Position(pos.x + dx, pos.y + dy)
        for dx, dy in _STEP_OFFSETS
        if grid.in_bounds(pos.x + dx, pos.y + dy)
    ]
    if not candidates:
        return pos
    new_pos = candidates[rng.randrange(len(candidates))]
    grid.move(node, new_pos)
    return new_pos


class ConnectivityGraph:
    """Undirected adjacency over placed nodes (no self-loops)."""

    def __init__(self) -> None:
        self._adj: dict[NodeId, set[NodeId]] = {}

    def add_node(self, node: NodeId) -> None:
        self._adj.setdefault(node, set())

    def remove_node(self, node: NodeId) -> None:
        for other in self._adj.pop(node, set()):
            self._adj[other].discard(node)

    def add_edge(self, a: NodeId, b: NodeId) -> None:
        if a == b:
            return
        self._adj.setdefault(a, set()).add(b)
        self._adj.setdefault(b, set()).add(a)

    def remove_edge(self, a: NodeId, b: NodeId) -> None:
        self._adj.get(a, set()).discard(b)
        self._adj.get(b, set()).discard(a)

    def nodes(self) -> list[NodeId]:
        return sorted(self._adj)

    def neighbors_of(self, node: NodeId) -> set[NodeId]:
        return set(self._adj.get(node, set()))

    def degree(self, node: NodeId) -> int:
        return len(self._adj.get(node, ()))

    def has_edge(self, a: NodeId, b: NodeId) -> bool:
        return b in self._adj.get(a, set())


def build_connectivity(grid: Grid, nodes: Iterable[NodeId] | None = None) -> ConnectivityGraph:
    """Full rebuild of the connectivity graph from current positions."""
    graph = ConnectivityGraph()
    members = sorted(nodes) if nodes is not None else grid.nodes()
    member_set = set(members)
    for node in members:
        graph.add_node(node)
        for other in grid.neighbors(node):
            if other in member_set:
                graph.add_edge(node, other)
    return graph


def refresh_node(graph: ConnectivityGraph, grid: Grid, node: NodeId) -> None:
    """Incrementally re-derive one node's edges after it moved."""
    current = graph.neighbors_of(node)
    fresh = {n for n in grid.neighbors(node) if n in set(graph.nodes())}
    for gone in current - fresh:
        graph.remove_edge(node, gone)
    for new in fresh - current:
        graph.add_edge(node, new)


def connected_components(graph: ConnectivityGraph) -> list[set[NodeId]]:
    """Connected components, ordered by their smallest member id."""
    seen: set[NodeId] = set()
    components: list[set[NodeId]] = []
    for root in graph.nodes():
        if root in seen:
            continue
        comp = {root}
        queue = deque([root])
        while queue:
            cur = queue.popleft()
            for nxt in graph.neighbors_of(cur):
                if nxt not in comp:
                    comp.add(nxt)
                    queue.append(nxt)
        seen |= comp
        components.append(comp)
    return components


def shortest_hop_path(
    graph: ConnectivityGraph, src: NodeId, dst: NodeId
) -> list[NodeId] | None:
    """Minimum-hop path from src to dst, ties broken by smallest next-hop id.

    Returns None when disconnected; src == dst degenerates to [src].
    """
    if src == dst:
        return [src]
    dist = _bfs_distances(graph, dst)
    if src not in dist:
        return None
    path = [src]
    cur = src
    while cur != dst:
        want = dist[cur] - 1
        cur = min(n for n in graph.neighbors_of(cur) if dist.get(n) == want)
        path.append(cur)
    return path


def _bfs_distances(graph: ConnectivityGraph, root: NodeId) -> dict[NodeId, int]:
    dist = {root: 0}
    queue = deque([root])
    while queue:
        cur = queue.popleft()
        for nxt in sorted(graph.neighbors_of(cur)):
            if nxt not in dist:
                dist[nxt] = dist[cur] + 1
                queue.append(nxt)
    return dist
