"""Edge-to-arc graph transformation and the arc-selection environment.

Every required edge is decomposed into two opposite-direction twin arcs;
a zero-cost, zero-demand depot self-loop arc gets id 0. The transformed
graph is directed and complete, with pair weights equal to the shortest
path cost from one arc's end node to the other arc's start node. The
environment walks this graph: serving arcs, returning to the depot to
reset capacity, and paying deadhead (negative reward) for every hop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .instance import DistanceMatrix, Instance, Solution


class EnvError(RuntimeError):
    """Illegal environment transition."""


@dataclass(frozen=True)
class Arc:
    id: int
    start: int
    end: int
    cost: int
    demand: int
    is_depot: bool
    reverse_id: int
    edge_index: int  # index into instance.edges, -1 for the depot arc


@dataclass(frozen=True)
class ArcGraph:
    arcs: tuple[Arc, ...]
    weights: np.ndarray  # (|A|, |A|) int64, weights[i][j] = dist(end_i, start_j)
    capacity: int
    name: str = ""
    demands: np.ndarray = None  # (|A|,) int64, filled by transform
    costs: np.ndarray = None  # (|A|,) int64

    def __post_init__(self):
        if self.demands is None:
            object.__setattr__(
                self, "demands", np.array([a.demand for a in self.arcs], dtype=np.int64)
            )
        if self.costs is None:
            object.__setattr__(
                self, "costs", np.array([a.cost for a in self.arcs], dtype=np.int64)
            )

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    def reverse(self, arc_id: int) -> int:
        return self.arcs[arc_id].reverse_id


def transform(instance: Instance, dist: DistanceMatrix) -> ArcGraph:
    """Build the directed complete arc graph of an instance.

    Arc ids are fixed by input order: the k-th required edge (u,v) yields
    arcs 2k+1 (u->v) and 2k+2 (v->u), so labels and checkpoints are
    reproducible across runs.
    """
    depot = instance.depot
    arcs = [
        Arc(
            id=0,
            start=depot,
            end=depot,
            cost=0,
            demand=0,
            is_depot=True,
            reverse_id=0,
            edge_index=-1,
        )
    ]
    for k, (edge_index, e) in enumerate(instance.required_edges):
        fwd, bwd = 2 * k + 1, 2 * k + 2
        arcs.append(
            Arc(fwd, e.u, e.v, e.cost, e.demand, False, bwd, edge_index)
        )
        arcs.append(
            Arc(bwd, e.v, e.u, e.cost, e.demand, False, fwd, edge_index)
        )
    ends = np.array([a.end for a in arcs])
    starts = np.array([a.start for a in arcs])
    weights = dist.dist[np.ix_(ends, starts)].astype(np.int64)
    return ArcGraph(
        arcs=tuple(arcs), weights=weights, capacity=instance.capacity, name=instance.name
    )


@dataclass
class EnvState:
    """Mutable value object; copy before branching (beam search, PPO resume)."""

    sequence: list[int] = field(default_factory=list)
    remaining_capacity: int = 0
    serve_flags: np.ndarray = None  # bool per arc; index 0 unused
    step_count: int = 0
    done: bool = False

    @property
    def last_arc(self) -> int:
        """Most recent arc; the implicit start of every tour is the depot arc."""
        return self.sequence[-1] if self.sequence else 0

    def copy(self) -> "EnvState":
        return EnvState(
            sequence=list(self.sequence),
            remaining_capacity=self.remaining_capacity,
            serve_flags=self.serve_flags.copy(),
            step_count=self.step_count,
            done=self.done,
        )


def initial_state(graph: ArcGraph) -> EnvState:
    flags = np.ones(graph.n_arcs, dtype=bool)
    flags[0] = False
    return EnvState(
        sequence=[],
        remaining_capacity=graph.capacity,
        serve_flags=flags,
        step_count=0,
        done=not flags.any(),
    )


def depot_allowed(state: EnvState) -> bool:
    """Depot returns are legal any time except first and twice in a row."""
    return state.step_count >= 1 and state.last_arc != 0


def legal_actions(state: EnvState, graph: ArcGraph, constrained: bool) -> np.ndarray:
    """Boolean mask over arcs; at least one entry is always true."""
    if state.done:
        raise EnvError("no legal actions in a terminal state")
    mask = state.serve_flags.copy()
    if constrained:
        mask &= graph.demands <= state.remaining_capacity
    mask[0] = depot_allowed(state)
    if not mask.any():
        raise EnvError(
            "no legal action: capacity "
            f"{state.remaining_capacity} after {state.sequence}"
        )
    return mask


def step(state: EnvState, action: int, graph: ArcGraph, constrained: bool = True) -> tuple[EnvState, int]:
    """Apply an action; reward is the negative deadhead to reach it.

    When the action serves the final unserved arc the tour is still open;
    the only legal follow-up is the depot arc, which the decode loops take
    as a forced step. Terminal means all arcs served and the sequence ends
    at the depot.
    """
    mask = legal_actions(state, graph, constrained)
    if not mask[action]:
        raise EnvError(
            f"illegal action {action}: capacity {state.remaining_capacity}, "
            f"served={not state.serve_flags[action]}, last={state.last_arc}"
        )
    reward = -int(graph.weights[state.last_arc, action])
    nxt = state.copy()
    if action == 0:
        nxt.remaining_capacity = graph.capacity
    else:
        arc = graph.arcs[action]
        nxt.serve_flags[action] = False
        nxt.serve_flags[arc.reverse_id] = False
        nxt.remaining_capacity -= arc.demand
    nxt.sequence.append(action)
    nxt.step_count += 1
    nxt.done = not nxt.serve_flags[1:].any() and action == 0
    return nxt, reward


def run_sequence(graph: ArcGraph, actions: list[int], constrained: bool = True):
    """Replay a full action sequence; returns (states_before, rewards, final)."""
    state = initial_state(graph)
    states, rewards = [], []
    for a in actions:
        states.append(state)
        state, r = step(state, a, graph, constrained)
        rewards.append(r)
    return states, rewards, state


def sequence_to_solution(graph: ArcGraph, sequence: list[int]) -> Solution:
    """Split a terminal arc sequence at depot returns into solution routes."""
    routes: list[list[tuple[int, int]]] = []
    current: list[tuple[int, int]] = []
    for arc_id in sequence:
        if arc_id == 0:
            if current:
                routes.append(current)
                current = []
        else:
            arc = graph.arcs[arc_id]
            current.append((arc.start, arc.end))
    if current:
        routes.append(current)
    total, deadhead = sequence_cost(graph, sequence)
    return Solution(routes=routes, total_cost=total, deadhead_cost=deadhead)


def solution_to_sequence(graph: ArcGraph, sequence_routes: list[list[tuple[int, int]]]) -> list[int]:
    """Map solution routes back to a terminal arc-id sequence.

    Parallel required edges between the same node pair are consumed in
    input-edge order, mirroring the evaluator. Depot arcs separate routes
    and close the tour.
    """
    by_pair: dict[tuple[int, int], list[int]] = {}
    for arc in graph.arcs[1::2]:  # forward arc of each input edge
        key = (min(arc.start, arc.end), max(arc.start, arc.end))
        by_pair.setdefault(key, []).append(arc.id)
    cursor: dict[tuple[int, int], int] = {pair: 0 for pair in by_pair}
    seq: list[int] = []
    for route in sequence_routes:
        if not route:
            continue
        for u, v in route:
            pair = (min(u, v), max(u, v))
            ids = by_pair.get(pair)
            if ids is None:
                raise EnvError(f"served arc ({u},{v}) has no matching required edge")
            k = cursor[pair]
            if k >= len(ids):
                raise EnvError(f"node pair {pair} served more often than required")
            cursor[pair] = k + 1
            fwd = ids[k]
            seq.append(fwd if graph.arcs[fwd].start == u else graph.arcs[fwd].reverse_id)
        seq.append(0)
    return seq


def sequence_cost(graph: ArcGraph, sequence: list[int]) -> tuple[int, int]:
    """(total, deadhead) of a terminal sequence, priced on the arc graph."""
    deadhead = 0
    last = 0
    service = 0
    for arc_id in sequence:
        deadhead += int(graph.weights[last, arc_id])
        service += graph.arcs[arc_id].cost
        last = arc_id
    return service + deadhead, deadhead


def rollout_cost_identity(
    instance: Instance,
    dist: DistanceMatrix,
    graph: ArcGraph,
    sequence: list[int],
    rewards: list[int],
) -> tuple[int, int]:
    """Check the reward/cost identity on a completed trajectory.

    The cumulative reward is the negative total deadhead, so the evaluated
    solution cost must equal the service-cost constant minus it. Returns
    both sides; raises if they disagree (an environment bug).
    """
    from .instance import evaluate_solution

    sol = sequence_to_solution(graph, sequence)
    ev = evaluate_solution(instance, dist, sol)
    cumulative = sum(rewards)
    expected = instance.service_cost_constant() - cumulative
    if ev.total_cost != expected:
        raise EnvError(
            f"cost identity violated: evaluated {ev.total_cost}, "
            f"service-constant - R = {expected}"
        )
    return ev.total_cost, expected
