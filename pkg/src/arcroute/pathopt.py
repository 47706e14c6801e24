"""Depot-return re-optimization by dynamic programming, and beam decoding.

Given a fixed depot-free service order, the split DP chooses where to
insert capacity-resetting depot returns so the added deadhead is minimal.
The decode procedure runs beam search under both the capacity-constrained
and the unconstrained mask, re-splits every candidate order, and keeps
the cheapest reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .arcgraph import ArcGraph, EnvState, initial_state, legal_actions, sequence_cost, step
from .instance import Solution
from .model import PolicyParams, Prepared, action_distribution, rollout


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class ServiceOrder:
    """Depot-free ordered arc ids; each required edge once, one direction."""

    arcs: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.arcs)


@dataclass(frozen=True)
class SplitResult:
    positions: tuple[int, ...]  # a depot return is inserted after each index
    f_value: int  # minimal added deadhead
    g_value: int  # cost of the unsplit order
    total: int

    def route_slices(self, length: int) -> list[tuple[int, int]]:
        bounds = [0, *[p + 1 for p in self.positions], length]
        return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]


def order_cost(order: ServiceOrder, graph: ArcGraph) -> int:
    """Cost of serving the order as one depot-to-depot tour (no resets)."""
    seq = list(order.arcs) + [0]
    total, _ = sequence_cost(graph, seq)
    return total


def _split_ingredients(arcs: tuple[int, ...], graph: ArcGraph, capacity: int):
    """Prefix demands, per-position insertion deltas, and the unsplit cost."""
    w = graph.weights
    demands = graph.demands
    prefix = [0]
    for a in arcs:
        d = int(demands[a])
        if d > capacity:
            raise SplitError(
                f"arc {a} demand {d} exceeds capacity {capacity}; no split can be feasible"
            )
        prefix.append(prefix[-1] + d)
    arr = np.fromiter(arcs, dtype=np.int64, count=len(arcs))
    g = int(w[0, arr[0]] + w[arr[:-1], arr[1:]].sum() + w[arr[-1], 0]) + int(
        graph.costs[arr].sum()
    )
    deltas = (w[arr[:-1], 0] + w[0, arr[1:]] - w[arr[:-1], arr[1:]]).tolist()
    return prefix, deltas, g


def dp_split_total(order: ServiceOrder, graph: ArcGraph, capacity: int) -> int:
    """Minimum total cost of the order after optimal depot-return insertion."""
    arcs = order.arcs
    if not arcs:
        return 0
    prefix, deltas, g = _split_ingredients(arcs, graph, capacity)
    n = len(arcs)
    INF = 1 << 60
    f = [0] * n
    for k in range(n):
        best = 0 if prefix[k + 1] <= capacity else INF
        floor = prefix[k + 1] - capacity
        for i in range(k - 1, -1, -1):
            if prefix[i + 1] < floor:
                break
            cand = f[i] + deltas[i]
            if cand < best:
                best = cand
        f[k] = best
    if f[n - 1] >= INF:
        raise SplitError("no feasible split exists for this order")
    return f[n - 1] + g


def dp_split(order: ServiceOrder, graph: ArcGraph, capacity: int) -> SplitResult:
    """Optimal depot-return insertion for a fixed service order.

    The recursion prices inserting a return after position i as
    w(a_i, depot) + w(depot, a_{i+1}) - w(a_i, a_{i+1}) and requires every
    resulting segment's demand to fit the capacity; a prefix that fits
    outright costs nothing extra. Ties prefer fewer insertions, then the
    lexicographically smallest position set.
    """
    arcs = order.arcs
    n = len(arcs)
    if n == 0:
        return SplitResult(positions=(), f_value=0, g_value=0, total=0)
    prefix, deltas, g = _split_ingredients(arcs, graph, capacity)
    INF = (1 << 60, 1 << 60, ())
    best: list[tuple[int, int, tuple[int, ...]]] = [INF] * n
    for k in range(n):
        if prefix[k + 1] <= capacity:
            best[k] = (0, 0, ())
        floor = prefix[k + 1] - capacity
        for i in range(k):
            if prefix[i + 1] < floor:
                continue
            fi, ci, pi = best[i]
            if fi >= INF[0]:
                continue
            cand = (fi + deltas[i], ci + 1, pi + (i,))
            if cand < best[k]:
                best[k] = cand
    f, _, positions = best[n - 1]
    if f >= INF[0]:
        raise SplitError("no feasible split exists for this order")
    return SplitResult(positions=positions, f_value=f, g_value=g, total=f + g)


def split_to_sequence(order: ServiceOrder, split: SplitResult) -> list[int]:
    """Terminal arc sequence with depot returns at the split positions."""
    seq: list[int] = []
    cut = set(split.positions)
    for idx, a in enumerate(order.arcs):
        seq.append(a)
        if idx in cut:
            seq.append(0)
    seq.append(0)
    return seq


def split_to_solution(order: ServiceOrder, split: SplitResult, graph: ArcGraph) -> Solution:
    routes = []
    for lo, hi in split.route_slices(len(order.arcs)):
        if lo == hi:
            continue
        routes.append([(graph.arcs[a].start, graph.arcs[a].end) for a in order.arcs[lo:hi]])
    service = sum(graph.arcs[a].cost for a in order.arcs)
    return Solution(routes=routes, total_cost=split.total, deadhead_cost=split.total - service)


def strip_depot_arcs(sequence: list[int]) -> ServiceOrder:
    return ServiceOrder(arcs=tuple(a for a in sequence if a != 0))


# ---------------------------------------------------------------------------
# beam decode
# ---------------------------------------------------------------------------


@dataclass
class _Beam:
    state: EnvState
    score: float
    sequence: tuple[int, ...]

    @property
    def done(self) -> bool:
        return self.state.done


def beam_search(
    prep: Prepared,
    params: PolicyParams,
    width: int,
    constrained: bool,
) -> list[int]:
    """Best terminal sequence by cumulative action log-probability.

    Completed beams stay in the candidate pool at their final score, so
    beams of different lengths compete on equal terms. Ties fall to the
    lexicographically smallest action sequence, which makes width 1
    coincide with greedy decoding.
    """
    beams = [_Beam(state=initial_state(prep.graph), score=0.0, sequence=())]
    with ad.no_grad():
        while any(not b.done for b in beams):
            pool: list[_Beam] = []
            for beam in beams:
                if beam.done:
                    pool.append(beam)
                    continue
                p, mask = action_distribution(prep, beam.state, params, constrained)
                row = p.data[0]
                for action in np.nonzero(mask)[0]:
                    nxt, _ = step(beam.state, int(action), prep.graph, constrained)
                    pool.append(
                        _Beam(
                            state=nxt,
                            score=beam.score + float(np.log(row[action])),
                            sequence=beam.sequence + (int(action),),
                        )
                    )
            pool.sort(key=lambda b: (-b.score, b.sequence))
            beams = pool[:width]
    return list(beams[0].sequence)


def dual_beam_decode(
    prep: Prepared,
    params: PolicyParams,
    beam_width: int = 2,
) -> Solution:
    """Beam-decode with and without the capacity mask, re-split both, keep best.

    The raw constrained greedy order is kept as a third candidate so the
    result can never be worse than re-splitting the plain greedy decode.
    """
    graph, capacity = prep.graph, prep.capacity
    candidates = [
        beam_search(prep, params, beam_width, constrained=True),
        beam_search(prep, params, beam_width, constrained=False),
        rollout(prep, params, mode="greedy", constrained=True).final_state.sequence,
    ]
    best: tuple[int, int] | None = None
    best_solution: Solution | None = None
    for rank, seq in enumerate(candidates):
        order = strip_depot_arcs(seq)
        split = dp_split(order, graph, capacity)
        key = (split.total, rank)
        if best is None or key < best:
            best = key
            best_solution = split_to_solution(order, split, graph)
    return best_solution
