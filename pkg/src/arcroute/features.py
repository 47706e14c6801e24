"""Node coordinates via classical MDS and per-timestep arc feature rows.

Classical (Torgerson) scaling of the shortest-path distance matrix embeds
the nodes in d-dimensional Euclidean space; the start/end coordinates of
an arc then encode its direction. The per-step feature row of an arc is

    (is_depot, cost, demand, start_coords, end_coords,
     distance_from_last_chosen_arc, allow_serve)

with scalar magnitudes normalized by fixed instance constants so the
network sees stable ranges across instance sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arcgraph import ArcGraph, EnvState, depot_allowed
from .instance import DistanceMatrix


@dataclass(frozen=True)
class MdsCoords:
    coords: np.ndarray  # (|V|, d) float64, column sums ~ 0
    eigenvalues: np.ndarray  # (d,) float64, nonincreasing, clamped at 0


def classical_mds(dist: DistanceMatrix | np.ndarray, d: int) -> MdsCoords:
    """Torgerson scaling: double-center the squared distances, eigendecompose.

    Deterministic by construction: eigenpairs sorted by descending
    eigenvalue (stable on ties), negative eigenvalues clamped to zero
    (their columns vanish), and each used eigenvector is flipped so its
    largest-magnitude entry (lowest index on ties) is positive.
    """
    if d < 1:
        raise ValueError(f"mds dimension must be >= 1, got {d}")
    D = dist.dist if isinstance(dist, DistanceMatrix) else dist
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    J = np.eye(n) - np.full((n, n), 1.0 / n)
    B = -0.5 * J @ (D * D) @ J
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(-evals, kind="stable")
    evals = evals[order]
    evecs = evecs[:, order]
    k = min(d, n)
    used_evals = np.clip(evals[:k], 0.0, None)
    coords = np.zeros((n, d))
    eigenvalues = np.zeros(d)
    eigenvalues[:k] = used_evals
    for col in range(k):
        if used_evals[col] <= 0.0:
            continue
        vec = evecs[:, col]
        pivot = np.argmax(np.abs(vec))  # argmax takes the lowest index on ties
        if vec[pivot] < 0:
            vec = -vec
        coords[:, col] = vec * np.sqrt(used_evals[col])
    return MdsCoords(coords=coords, eigenvalues=eigenvalues)


@dataclass(frozen=True)
class ArcFeatures:
    matrix: np.ndarray  # (|A|, 2d+5) float64

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def feature_dim(mds_dim: int) -> int:
    return 2 * mds_dim + 5


def scale_constant(graph: ArcGraph) -> float:
    """Fixed per-instance normalizer for costs, distances and coordinates."""
    return float(max(int(graph.weights.max()), int(graph.costs.max()), 1))


def build_features(graph: ArcGraph, mds: MdsCoords, state: EnvState) -> ArcFeatures:
    """Assemble the feature matrix for the current environment state.

    Pure in (graph, mds, state): identical inputs give bit-identical rows.
    The last-chosen-arc distance column reads the weight row of the most
    recent action (the depot arc before any move). The depot arc's
    allow_serve mirrors its own current legality so the network sees the
    not-consecutive rule it is decoded under.
    """
    n = graph.n_arcs
    d = mds.coords.shape[1]
    scale = scale_constant(graph)
    out = np.zeros((n, feature_dim(d)))
    starts = np.fromiter((a.start for a in graph.arcs), dtype=np.int64, count=n)
    ends = np.fromiter((a.end for a in graph.arcs), dtype=np.int64, count=n)
    out[0, 0] = 1.0
    out[:, 1] = graph.costs / scale
    out[:, 2] = graph.demands / graph.capacity
    out[:, 3 : 3 + d] = mds.coords[starts] / scale
    out[:, 3 + d : 3 + 2 * d] = mds.coords[ends] / scale
    out[:, 3 + 2 * d] = graph.weights[state.last_arc] / scale
    out[:, 4 + 2 * d] = state.serve_flags.astype(np.float64)
    out[0, 4 + 2 * d] = 1.0 if depot_allowed(state) else 0.0
    return ArcFeatures(matrix=out)
