"""Synthetic road-like instance generation and dataset presets.

Nodes are dropped uniformly in the unit square and wired as a
relative-neighborhood graph (which contains the minimum spanning tree,
so connectivity is free), then padded with random extra edges up to a
target density. Edge costs are rounded scaled Euclidean lengths; a random
subset of edges becomes required with small integer demands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .instance import Edge, Instance, validate_instance


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    count: int
    node_lo: int
    node_hi: int
    required_edges: int
    demand_lo: int = 5
    demand_hi: int = 10
    capacity: int = 100
    seed: int = 0
    edge_factor: float = 1.3
    coord_scale: int = 100


# node ranges / required-edge counts per benchmark scale
SCALE_PRESETS: dict[str, tuple[int, int, int]] = {
    "Task20": (25, 30, 20),
    "Task30": (30, 35, 30),
    "Task40": (45, 50, 40),
    "Task50": (55, 60, 50),
    "Task60": (65, 70, 60),
    "Task80": (85, 90, 80),
    "Task100": (105, 110, 100),
}


def preset_spec(scale: str, count: int, seed: int = 0, suffix: str = "-mini") -> DatasetSpec:
    if scale not in SCALE_PRESETS:
        raise GenerationError(f"unknown scale {scale!r}; choose from {sorted(SCALE_PRESETS)}")
    lo, hi, er = SCALE_PRESETS[scale]
    return DatasetSpec(
        name=f"{scale}{suffix}", count=count, node_lo=lo, node_hi=hi,
        required_edges=er, seed=seed,
    )


def _relative_neighborhood_edges(points: np.ndarray) -> list[tuple[int, int]]:
    """Edge (i,j) survives unless some third point is closer to both ends."""
    n = len(points)
    diff = points[:, None, :] - points[None, :, :]
    D = np.sqrt((diff * diff).sum(axis=2))
    blocked = np.maximum(D[:, None, :], D[None, :, :]).min(axis=2) < D
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if not blocked[i, j]]
    return edges


def generate_instance(spec: DatasetSpec, rng: np.random.Generator, index: int = 0) -> Instance:
    """One synthetic instance; deterministic in (spec, rng state)."""
    n = int(rng.integers(spec.node_lo, spec.node_hi + 1))
    points = rng.random((n, 2))
    edge_set = _relative_neighborhood_edges(points)
    present = set(edge_set)
    target = math.ceil(spec.edge_factor * n)
    guard = 0
    while len(edge_set) < target:
        u, v = int(rng.integers(n)), int(rng.integers(n))
        if u == v:
            continue
        key = (min(u, v), max(u, v))
        if key in present:
            guard += 1
            if guard > 100 * target:
                raise GenerationError("could not reach target edge density")
            continue
        present.add(key)
        edge_set.append(key)
    if len(edge_set) < spec.required_edges:
        raise GenerationError(
            f"spec wants {spec.required_edges} required edges but only "
            f"{len(edge_set)} edges exist"
        )
    required = set(
        int(i) for i in rng.choice(len(edge_set), size=spec.required_edges, replace=False)
    )
    edges = []
    for i, (u, v) in enumerate(edge_set):
        length = float(np.hypot(*(points[u] - points[v])))
        cost = max(1, round(spec.coord_scale * length))
        demand = int(rng.integers(spec.demand_lo, spec.demand_hi + 1)) if i in required else 0
        edges.append(Edge(u=u, v=v, cost=cost, demand=demand))
    depot = int(rng.integers(n))
    instance = Instance(
        name=f"{spec.name}-{index:05d}",
        node_count=n,
        depot=depot,
        capacity=spec.capacity,
        edges=tuple(edges),
    )
    problems = validate_instance(instance)
    if problems:
        raise GenerationError(f"generated instance invalid: {problems}")
    return instance


def generate_dataset(spec: DatasetSpec) -> list[Instance]:
    """Instances are seeded independently, so the set is order-stable."""
    out = []
    for index in range(spec.count):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=(index,)))
        out.append(generate_instance(spec, rng, index))
    return out
