"""CARP instances, shortest paths, solutions and cost accounting.

An instance is an undirected connected graph with a depot, a vehicle
capacity ``Q`` and a subset of edges that carry demand and must be served.
Costs and demands are integers throughout; this keeps the DP solvers and
the oracle comparisons free of floating-point ties.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

# sentinel for "no path yet" during Floyd-Warshall; additions of two
# sentinels must not overflow int64
_INF = np.int64(2) ** 40


class InstanceError(ValueError):
    """Raised for malformed instances or instance files."""


@dataclass(frozen=True)
class Edge:
    """Undirected edge; ``required`` edges carry positive demand."""

    u: int
    v: int
    cost: int
    demand: int = 0
    required: bool | None = None

    def __post_init__(self):
        if self.required is None:
            object.__setattr__(self, "required", self.demand > 0)

    def other(self, node: int) -> int:
        return self.v if node == self.u else self.u


@dataclass(frozen=True)
class Instance:
    name: str
    node_count: int
    depot: int
    capacity: int
    edges: tuple[Edge, ...]

    @property
    def required_edges(self) -> list[tuple[int, Edge]]:
        """(index, edge) pairs of the required subset, in input order."""
        return [(i, e) for i, e in enumerate(self.edges) if e.required]

    def service_cost_constant(self) -> int:
        """Direction-independent cost of serving every required edge once."""
        return sum(e.cost for e in self.edges if e.required)

    def total_demand(self) -> int:
        return sum(e.demand for e in self.edges if e.required)


@dataclass(frozen=True)
class DistanceMatrix:
    """All-pairs shortest path costs plus next-hop pointers."""

    dist: np.ndarray  # (|V|, |V|) int64
    next_hop: np.ndarray  # (|V|, |V|) int64, -1 where unreachable

    def path(self, a: int, b: int) -> list[int]:
        """One optimal node path from a to b (inclusive)."""
        if self.next_hop[a, b] < 0:
            raise InstanceError(f"no path between {a} and {b}")
        nodes = [a]
        while a != b:
            a = int(self.next_hop[a, b])
            nodes.append(a)
        return nodes


# A served arc is a (start_node, end_node) traversal of a required edge.
Route = list[tuple[int, int]]


@dataclass
class Solution:
    """Routes of served arcs; deadhead legs are implicit via shortest paths."""

    routes: list[Route]
    total_cost: int = 0
    deadhead_cost: int = 0

    def arc_count(self) -> int:
        return sum(len(r) for r in self.routes)


@dataclass
class Evaluation:
    total_cost: int
    deadhead_cost: int
    feasible: bool
    violations: list[str] = field(default_factory=list)

    def __iter__(self):
        return iter((self.total_cost, self.deadhead_cost, self.feasible))


def validate_instance(instance: Instance) -> list[str]:
    """Return all invariant violations; an empty list means valid."""
    out: list[str] = []
    n = instance.node_count
    if n <= 0:
        out.append(f"node_count must be positive, got {n}")
        return out
    if not 0 <= instance.depot < n:
        out.append(f"depot {instance.depot} out of range [0, {n})")
    if instance.capacity <= 0:
        out.append(f"capacity must be positive, got {instance.capacity}")
    adjacency: list[list[int]] = [[] for _ in range(n)]
    for i, e in enumerate(instance.edges):
        if not (0 <= e.u < n and 0 <= e.v < n):
            out.append(f"edge {i} endpoints ({e.u},{e.v}) out of range")
            continue
        if e.u == e.v:
            out.append(f"edge {i} is a self-loop at node {e.u}")
        if e.cost <= 0:
            out.append(f"edge {i} cost must be positive, got {e.cost}")
        if e.demand < 0:
            out.append(f"edge {i} demand must be nonnegative, got {e.demand}")
        if e.required != (e.demand > 0):
            out.append(f"edge {i} required flag inconsistent with demand {e.demand}")
        if e.required and e.demand > instance.capacity:
            out.append(
                f"edge {i} demand {e.demand} exceeds capacity {instance.capacity}"
            )
        adjacency[e.u].append(e.v)
        adjacency[e.v].append(e.u)
    if 0 <= instance.depot < n:
        seen = [False] * n
        seen[instance.depot] = True
        frontier = deque([instance.depot])
        while frontier:
            node = frontier.popleft()
            for nxt in adjacency[node]:
                if not seen[nxt]:
                    seen[nxt] = True
                    frontier.append(nxt)
        unreachable = [i for i, s in enumerate(seen) if not s]
        if unreachable:
            out.append(f"nodes unreachable from depot: {unreachable}")
    return out


def all_pairs_shortest_paths(instance: Instance) -> DistanceMatrix:
    """Floyd-Warshall over the undirected edge costs.

    Rejects disconnected graphs, naming one unreachable pair. Cubic in
    |V|, which stays negligible at the instance sizes this toolkit targets.
    """
    n = instance.node_count
    dist = np.full((n, n), _INF, dtype=np.int64)
    next_hop = np.full((n, n), -1, dtype=np.int64)
    np.fill_diagonal(dist, 0)
    next_hop[np.diag_indices(n)] = np.arange(n)
    for e in instance.edges:
        if e.cost < dist[e.u, e.v]:
            dist[e.u, e.v] = dist[e.v, e.u] = e.cost
            next_hop[e.u, e.v] = e.v
            next_hop[e.v, e.u] = e.u
    for k in range(n):
        via = dist[:, k, None] + dist[None, k, :]
        better = via < dist
        if better.any():
            dist[better] = via[better]
            rows = np.nonzero(better.any(axis=1))[0]
            for i in rows:
                next_hop[i, better[i]] = next_hop[i, k]
    if (dist >= _INF).any():
        i, j = np.argwhere(dist >= _INF)[0]
        raise InstanceError(f"graph is disconnected: no path between {i} and {j}")
    return DistanceMatrix(dist=dist, next_hop=next_hop)


def _required_by_pair(instance: Instance) -> dict[tuple[int, int], list[int]]:
    by_pair: dict[tuple[int, int], list[int]] = {}
    for i, e in instance.required_edges:
        by_pair.setdefault((min(e.u, e.v), max(e.u, e.v)), []).append(i)
    return by_pair


def evaluate_solution(
    instance: Instance, dist: DistanceMatrix, sol: Solution
) -> Evaluation:
    """Total cost, deadhead cost and feasibility of a solution.

    Each route starts and ends at the depot; gaps between consecutive
    served arcs are priced with shortest-path costs. Feasible means every
    required edge is served exactly once (in one direction) and every
    route's demand fits the capacity.
    """
    by_pair = _required_by_pair(instance)
    consumed: dict[tuple[int, int], int] = {pair: 0 for pair in by_pair}
    violations: list[str] = []
    depot = instance.depot
    service = 0
    deadhead = 0
    for r_idx, route in enumerate(sol.routes):
        load = 0
        here = depot
        for u, v in route:
            pair = (min(u, v), max(u, v))
            indices = by_pair.get(pair)
            if indices is None:
                violations.append(f"served arc ({u},{v}) is not a required edge")
                continue
            k = consumed[pair]
            edge = instance.edges[indices[min(k, len(indices) - 1)]]
            if k >= len(indices):
                violations.append(f"required edge ({u},{v}) served more than once")
            consumed[pair] = k + 1
            deadhead += int(dist.dist[here, u])
            service += edge.cost
            load += edge.demand
            here = v
        deadhead += int(dist.dist[here, depot])
        if load > instance.capacity:
            violations.append(
                f"route {r_idx} demand {load} exceeds capacity {instance.capacity}"
            )
    for pair, indices in by_pair.items():
        if consumed[pair] < len(indices):
            violations.append(f"required edge {pair} never served")
    return Evaluation(
        total_cost=service + deadhead,
        deadhead_cost=deadhead,
        feasible=not violations,
        violations=violations,
    )


# ---------------------------------------------------------------------------
# Text formats (line-oriented, bit-exact)
# ---------------------------------------------------------------------------


def format_instance(instance: Instance) -> str:
    lines = [
        f"NAME {instance.name}",
        f"VERTICES {instance.node_count}",
        f"DEPOT {instance.depot}",
        f"CAPACITY {instance.capacity}",
        f"EDGES {len(instance.edges)}",
    ]
    for e in instance.edges:
        lines.append(f"{e.u} {e.v} {e.cost} {e.demand} {1 if e.required else 0}")
    lines.append("END")
    return "\n".join(lines) + "\n"


def parse_instance(text: str) -> Instance:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    pos = 0

    def expect(keyword: str) -> str:
        nonlocal pos
        if pos >= len(lines):
            raise InstanceError(f"unexpected end of file, expected {keyword}")
        line = lines[pos]
        if not line.startswith(keyword + " "):
            raise InstanceError(f"line {pos + 1}: expected '{keyword} ...', got {line!r}")
        pos += 1
        return line[len(keyword) + 1 :]

    name = expect("NAME")
    try:
        vertices = int(expect("VERTICES"))
        depot = int(expect("DEPOT"))
        capacity = int(expect("CAPACITY"))
        n_edges = int(expect("EDGES"))
    except ValueError as exc:
        raise InstanceError(f"line {pos}: malformed integer field: {exc}") from exc
    edges = []
    for _ in range(n_edges):
        if pos >= len(lines):
            raise InstanceError(f"unexpected end of file after {len(edges)} edges")
        parts = lines[pos].split()
        if len(parts) != 5:
            raise InstanceError(f"line {pos + 1}: expected 5 edge fields, got {lines[pos]!r}")
        try:
            u, v, cost, demand, req = map(int, parts)
        except ValueError as exc:
            raise InstanceError(f"line {pos + 1}: malformed edge: {exc}") from exc
        edges.append(Edge(u=u, v=v, cost=cost, demand=demand, required=bool(req)))
        pos += 1
    if pos >= len(lines) or lines[pos] != "END":
        raise InstanceError(f"line {pos + 1}: expected END")
    return Instance(
        name=name,
        node_count=vertices,
        depot=depot,
        capacity=capacity,
        edges=tuple(edges),
    )


def load_instance(path) -> Instance:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_instance(fh.read())


def save_instance(instance: Instance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_instance(instance))


def format_solution(name: str, sol: Solution) -> str:
    lines = [
        f"SOLUTION {name}",
        f"TOTAL_COST {sol.total_cost}",
        f"DEADHEAD_COST {sol.deadhead_cost}",
        f"ROUTES {len(sol.routes)}",
    ]
    for i, route in enumerate(sol.routes):
        flat = " ".join(f"{u} {v}" for u, v in route)
        lines.append(f"ROUTE {i} {len(route)}" + (f" {flat}" if flat else ""))
    lines.append("END")
    return "\n".join(lines) + "\n"


def parse_solution(text: str) -> tuple[str, Solution]:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("SOLUTION "):
        raise InstanceError("solution file must start with 'SOLUTION <name>'")
    name = lines[0][len("SOLUTION ") :]
    try:
        total = int(lines[1].split()[1])
        deadhead = int(lines[2].split()[1])
        n_routes = int(lines[3].split()[1])
    except (IndexError, ValueError) as exc:
        raise InstanceError(f"malformed solution header: {exc}") from exc
    routes: list[Route] = []
    for k in range(n_routes):
        parts = lines[4 + k].split()
        if len(parts) < 3 or parts[0] != "ROUTE":
            raise InstanceError(f"line {5 + k}: expected 'ROUTE <i> <n> ...'")
        n_arcs = int(parts[2])
        nums = list(map(int, parts[3:]))
        if len(nums) != 2 * n_arcs:
            raise InstanceError(f"line {5 + k}: route wants {n_arcs} arcs, got {len(nums) // 2}")
        routes.append([(nums[2 * i], nums[2 * i + 1]) for i in range(n_arcs)])
    if lines[4 + n_routes] != "END":
        raise InstanceError("solution file missing END")
    return name, Solution(routes=routes, total_cost=total, deadhead_cost=deadhead)


def save_solution(name: str, sol: Solution, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_solution(name, sol))


def load_solution(path) -> tuple[str, Solution]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_solution(fh.read())
