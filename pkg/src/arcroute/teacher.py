"""Label oracles: an exact solver for tiny instances and an iterated
local search for everything else, plus replay into supervision sequences.

The exact solver runs a dynamic program over (served-edge bitmask,
current node, remaining capacity) with depot-reset transitions folded
into each serve move, so it is provably optimal but capped at 8 required
edges. The local search mutates a depot-free giant service order and lets
the split DP re-place depot returns after every move.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arcgraph import ArcGraph, run_sequence, sequence_cost, solution_to_sequence, transform
from .baselines import ps_best_of_rules
from .instance import DistanceMatrix, Instance, Solution
from .pathopt import ServiceOrder, dp_split, dp_split_total, split_to_solution

EXACT_REQUIRED_CAP = 8


class TeacherError(ValueError):
    pass


def exact_solve(instance: Instance, dist: DistanceMatrix) -> Solution:
    """Provably minimum-cost solution; rejects instances above the cap."""
    required = instance.required_edges
    m = len(required)
    if m > EXACT_REQUIRED_CAP:
        raise TeacherError(
            f"exact solver capped at {EXACT_REQUIRED_CAP} required edges, got {m}"
        )
    depot = instance.depot
    Q = instance.capacity
    D = dist.dist
    if m == 0:
        return Solution(routes=[], total_cost=0, deadhead_cost=0)
    full = (1 << m) - 1
    # states: (mask, node, remaining) -> cost; parent pointers rebuild routes
    frontier: dict[tuple[int, int, int], int] = {(0, depot, Q): 0}
    parent: dict[tuple[int, int, int], tuple] = {}
    layers = [frontier]
    for _ in range(m):
        nxt: dict[tuple[int, int, int], int] = {}
        for (mask, node, rem), cost in layers[-1].items():
            for k, (_, e) in enumerate(required):
                if mask & (1 << k):
                    continue
                nm = mask | (1 << k)
                for start, end in ((e.u, e.v), (e.v, e.u)):
                    # continue current route
                    if e.demand <= rem:
                        c = cost + int(D[node, start]) + e.cost
                        key = (nm, end, rem - e.demand)
                        if c < nxt.get(key, 1 << 60):
                            nxt[key] = c
                            parent[key] = ((mask, node, rem), k, start, False)
                    # return to the depot first, then serve
                    c = cost + int(D[node, depot]) + int(D[depot, start]) + e.cost
                    key = (nm, end, Q - e.demand)
                    if c < nxt.get(key, 1 << 60):
                        nxt[key] = c
                        parent[key] = ((mask, node, rem), k, start, True)
        layers.append(nxt)
    best_key, best_cost = None, 1 << 60
    for (mask, node, rem), cost in layers[-1].items():
        total = cost + int(D[node, depot])
        if total < best_cost:
            best_cost, best_key = total, (mask, node, rem)
    # walk parents back to the start, collecting (edge, start, reset) steps
    steps: list[tuple[int, int, bool]] = []
    key = best_key
    while key in parent:
        prev, k, start, reset = parent[key]
        steps.append((k, start, reset))
        key = prev
    steps.reverse()
    routes: list[list[tuple[int, int]]] = []
    current: list[tuple[int, int]] = []
    for k, start, reset in steps:
        _, e = required[k]
        if reset and current:
            routes.append(current)
            current = []
        current.append((start, e.other(start)))
    if current:
        routes.append(current)
    service = sum(e.cost for _, e in required)
    return Solution(routes=routes, total_cost=best_cost, deadhead_cost=best_cost - service)


# ---------------------------------------------------------------------------
# iterated local search on the giant service order
# ---------------------------------------------------------------------------


def _propose(order: list[int], graph: ArcGraph, rng: np.random.Generator) -> list[int]:
    n = len(order)
    out = list(order)
    move = int(rng.integers(4)) if n >= 2 else 3
    if move == 0:  # relocate one arc
        i = int(rng.integers(n))
        a = out.pop(i)
        j = int(rng.integers(n))
        out.insert(j, a)
    elif move == 1:  # swap two arcs
        i, j = rng.integers(n, size=2)
        out[i], out[j] = out[j], out[i]
    elif move == 2:  # reverse a segment, flipping each arc's direction
        i, j = sorted(rng.integers(n, size=2))
        seg = [graph.arcs[a].reverse_id for a in reversed(out[i : j + 1])]
        out[i : j + 1] = seg
    else:  # flip a single arc
        i = int(rng.integers(n))
        out[i] = graph.arcs[out[i]].reverse_id
    return out


def _perturb(order: list[int], rng: np.random.Generator) -> list[int]:
    out = list(order)
    for _ in range(3):
        if len(out) < 2:
            break
        i = int(rng.integers(len(out)))
        a = out.pop(i)
        out.insert(int(rng.integers(len(out) + 1)), a)
    return out


def local_search_solve(
    instance: Instance,
    dist: DistanceMatrix,
    budget: int,
    rng: np.random.Generator,
    graph: ArcGraph | None = None,
    stall_limit: int = 150,
) -> Solution:
    """Iterated local search over the giant order, split-DP after each move.

    Starts from best-of-5 path scanning, accepts strict improvements only,
    and perturbs (3 random relocations from the incumbent best) after a
    stall. One budget unit is one candidate evaluation, so the best cost
    is nonincreasing in the budget.
    """
    if graph is None:
        graph = transform(instance, dist)
    Q = instance.capacity
    init = ps_best_of_rules(instance, graph, dist)
    order = [a for a in solution_to_sequence(graph, init.routes) if a != 0]
    if not order:
        return Solution(routes=[], total_cost=0, deadhead_cost=0)

    def evaluate(o: list[int]) -> int:
        return dp_split_total(ServiceOrder(tuple(o)), graph, Q)

    cur, cur_total = order, evaluate(order)
    best, best_total = cur, cur_total
    stall = 0
    evals = 0
    while evals < budget:
        cand = _propose(cur, graph, rng)
        total = evaluate(cand)
        evals += 1
        if total < cur_total:
            cur, cur_total = cand, total
            stall = 0
            if total < best_total:
                best, best_total = cand, total
        else:
            stall += 1
        if stall >= stall_limit and evals < budget:
            cur = _perturb(best, rng)
            cur_total = evaluate(cur)
            evals += 1
            stall = 0
    final = dp_split(ServiceOrder(tuple(best)), graph, Q)
    return split_to_solution(ServiceOrder(tuple(best)), final, graph)


# ---------------------------------------------------------------------------
# supervision labels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabelSet:
    """Replayable expert trajectory; each step's target is one arc id."""

    instance_name: str
    sequence: tuple[int, ...]
    cost: int


def labelize(instance: Instance, solution: Solution, graph: ArcGraph) -> LabelSet:
    """Replay a feasible solution through the environment and record it.

    Includes interior depot returns and the final forced return; replay
    failure means the solution violates the environment rules and is
    reported as such.
    """
    seq = solution_to_sequence(graph, solution.routes)
    try:
        _, rewards, final = run_sequence(graph, seq, constrained=True)
    except Exception as exc:
        raise TeacherError(f"solution replay rejected: {exc}") from exc
    if not final.done:
        raise TeacherError("solution replay did not reach a terminal state")
    total, _ = sequence_cost(graph, seq)
    return LabelSet(instance_name=instance.name, sequence=tuple(seq), cost=total)


def format_labels(labels: LabelSet) -> str:
    lines = [f"LABEL {labels.instance_name} {labels.cost}"]
    lines.extend(str(a) for a in labels.sequence)
    return "\n".join(lines) + "\n"


def parse_labels(text: str) -> LabelSet:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("LABEL "):
        raise TeacherError("label file must start with 'LABEL <name> <cost>'")
    parts = lines[0].split()
    if len(parts) != 3:
        raise TeacherError(f"malformed label header: {lines[0]!r}")
    try:
        sequence = tuple(int(x) for x in lines[1:])
    except ValueError as exc:
        raise TeacherError(f"malformed arc id in label file: {exc}") from exc
    return LabelSet(instance_name=parts[1], sequence=sequence, cost=int(parts[2]))


def save_labels(labels: LabelSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_labels(labels))


def load_labels(path) -> LabelSet:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_labels(fh.read())
