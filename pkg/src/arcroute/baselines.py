"""Classic five-rule Path-Scanning construction heuristic.

Greedy construction from the depot: always move to the nearest unserved
arc that still fits the remaining capacity, break distance ties with the
active rule, and return to the depot when nothing fits. Residual ties are
broken uniformly at random, so a seeded generator makes runs reproducible.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .arcgraph import ArcGraph
from .instance import DistanceMatrix, Instance, Solution


class PsRule(Enum):
    MAXIMIZE_DEPOT_DISTANCE = "max-depot-distance"
    MINIMIZE_DEPOT_DISTANCE = "min-depot-distance"
    MAXIMIZE_DEMAND_COST_RATIO = "max-demand-cost-ratio"
    MINIMIZE_DEMAND_COST_RATIO = "min-demand-cost-ratio"
    HYBRID_HALF_CAPACITY = "hybrid-half-capacity"


ALL_RULES = tuple(PsRule)


def _rule_key(rule: PsRule, arc, dist: DistanceMatrix, depot: int, remaining: int, capacity: int) -> float:
    """Score to maximize among distance-tied candidates."""
    to_depot = float(dist.dist[arc.end, depot])
    ratio = arc.demand / arc.cost
    if rule is PsRule.MAXIMIZE_DEPOT_DISTANCE:
        return to_depot
    if rule is PsRule.MINIMIZE_DEPOT_DISTANCE:
        return -to_depot
    if rule is PsRule.MAXIMIZE_DEMAND_COST_RATIO:
        return ratio
    if rule is PsRule.MINIMIZE_DEMAND_COST_RATIO:
        return -ratio
    if remaining > capacity / 2:
        return to_depot
    return -to_depot


def path_scanning(
    instance: Instance,
    graph: ArcGraph,
    dist: DistanceMatrix,
    rule: PsRule,
    rng: np.random.Generator,
) -> Solution:
    depot = instance.depot
    capacity = instance.capacity
    unserved = set(range(1, graph.n_arcs))
    routes: list[list[tuple[int, int]]] = []
    deadhead = 0
    service = 0
    while unserved:
        node = depot
        remaining = capacity
        route: list[tuple[int, int]] = []
        while True:
            fits = [a for a in sorted(unserved) if graph.arcs[a].demand <= remaining]
            if not fits:
                break
            dists = {a: int(dist.dist[node, graph.arcs[a].start]) for a in fits}
            d_min = min(dists.values())
            tied = [a for a in fits if dists[a] == d_min]
            if len(tied) > 1:
                keys = {
                    a: _rule_key(rule, graph.arcs[a], dist, depot, remaining, capacity)
                    for a in tied
                }
                k_max = max(keys.values())
                tied = [a for a in tied if keys[a] == k_max]
            choice = tied[0] if len(tied) == 1 else tied[int(rng.integers(len(tied)))]
            arc = graph.arcs[choice]
            deadhead += d_min
            service += arc.cost
            remaining -= arc.demand
            route.append((arc.start, arc.end))
            node = arc.end
            unserved.discard(choice)
            unserved.discard(arc.reverse_id)
        deadhead += int(dist.dist[node, depot])
        routes.append(route)
    return Solution(routes=routes, total_cost=service + deadhead, deadhead_cost=deadhead)


def ps_best_of_rules(
    instance: Instance,
    graph: ArcGraph,
    dist: DistanceMatrix,
    seed: int = 0,
) -> Solution:
    """Run each rule with its own fixed seed, keep the cheapest solution."""
    best: Solution | None = None
    for idx, rule in enumerate(ALL_RULES):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(idx,)))
        sol = path_scanning(instance, graph, dist, rule, rng)
        if best is None or sol.total_cost < best.total_cost:
            best = sol
    return best
