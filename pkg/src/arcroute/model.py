"""Direction-aware attention policy over the arc graph.

Per decision step the pipeline is: arc feature rows -> one graph-attention
layer that folds the incoming pair weights into initial embeddings -> N
attention layers (multi-head attention + feed-forward, each with a skip
connection and per-instance normalization) -> a masked single-head decoder
whose context combines the mean embedding, the last chosen arc's embedding
and the remaining-capacity scalars. The whole pipeline re-runs at every
timestep; nothing is cached across steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .arcgraph import (
    ArcGraph,
    EnvState,
    initial_state,
    legal_actions,
    step,
    transform,
)
from .autodiff import Tensor
from .features import MdsCoords, build_features, classical_mds, feature_dim, scale_constant
from .instance import DistanceMatrix, Instance, all_pairs_shortest_paths


@dataclass(frozen=True)
class ModelConfig:
    d_h: int = 128
    n_layers: int = 3
    n_heads: int = 8
    clip_c: float = 10.0
    mds_dim: int = 8

    def __post_init__(self):
        if self.d_h % self.n_heads:
            raise ValueError(f"d_h={self.d_h} not divisible by n_heads={self.n_heads}")
        if self.clip_c <= 0:
            raise ValueError("clip_c must be positive")

    @property
    def feature_dim(self) -> int:
        return feature_dim(self.mds_dim)

    @property
    def head_dim(self) -> int:
        return self.d_h // self.n_heads

    def manifest(self) -> dict:
        return {
            "mds_dim": self.mds_dim,
            "d_h": self.d_h,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "clip_c": self.clip_c,
        }

    @staticmethod
    def from_manifest(manifest: dict) -> "ModelConfig":
        return ModelConfig(
            d_h=int(manifest["d_h"]),
            n_layers=int(manifest["n_layers"]),
            n_heads=int(manifest["n_heads"]),
            clip_c=float(manifest["clip_c"]),
            mds_dim=int(manifest["mds_dim"]),
        )


@dataclass
class GatParams:
    w: Tensor  # (feature_dim, d_h)
    a: Tensor  # (2*d_h + 1, 1): source part, target part, pair-weight scalar


@dataclass
class LayerParams:
    wq: list[Tensor]
    wk: list[Tensor]
    wv: list[Tensor]
    wo: Tensor
    ff_w1: Tensor
    ff_b1: Tensor
    ff_w2: Tensor
    ff_b2: Tensor
    norm1_scale: Tensor
    norm1_shift: Tensor
    norm2_scale: Tensor
    norm2_shift: Tensor


@dataclass
class DecoderParams:
    wq: Tensor  # (2*d_h + 2, d_h), context projection
    wk: Tensor  # (d_h, d_h)


@dataclass
class PolicyParams:
    config: ModelConfig
    gat: GatParams
    layers: list[LayerParams]
    decoder: DecoderParams

    def named_tensors(self):
        yield "gat.w", self.gat.w
        yield "gat.a", self.gat.a
        for l, layer in enumerate(self.layers):
            for h in range(self.config.n_heads):
                yield f"enc.{l}.head.{h}.wq", layer.wq[h]
                yield f"enc.{l}.head.{h}.wk", layer.wk[h]
                yield f"enc.{l}.head.{h}.wv", layer.wv[h]
            yield f"enc.{l}.wo", layer.wo
            yield f"enc.{l}.ff.w1", layer.ff_w1
            yield f"enc.{l}.ff.b1", layer.ff_b1
            yield f"enc.{l}.ff.w2", layer.ff_w2
            yield f"enc.{l}.ff.b2", layer.ff_b2
            yield f"enc.{l}.norm1.scale", layer.norm1_scale
            yield f"enc.{l}.norm1.shift", layer.norm1_shift
            yield f"enc.{l}.norm2.scale", layer.norm2_scale
            yield f"enc.{l}.norm2.shift", layer.norm2_shift
        yield "dec.wq", self.decoder.wq
        yield "dec.wk", self.decoder.wk

    def copy(self) -> "PolicyParams":
        clone = init_params(self.config, np.random.default_rng(0))
        for (_, src), (_, dst) in zip(self.named_tensors(), clone.named_tensors()):
            dst.data = src.data.copy()
            dst.grad = None
        return clone

    def zero_grad(self) -> None:
        for _, t in self.named_tensors():
            t.grad = None


def _uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> Tensor:
    bound = 1.0 / math.sqrt(shape[0])
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def init_params(config: ModelConfig, rng: np.random.Generator) -> PolicyParams:
    """Fresh parameters, uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) per tensor."""
    dh, dk, f = config.d_h, config.head_dim, config.feature_dim
    gat = GatParams(w=_uniform(rng, (f, dh)), a=_uniform(rng, (2 * dh + 1, 1)))
    layers = []
    for _ in range(config.n_layers):
        layers.append(
            LayerParams(
                wq=[_uniform(rng, (dh, dk)) for _ in range(config.n_heads)],
                wk=[_uniform(rng, (dh, dk)) for _ in range(config.n_heads)],
                wv=[_uniform(rng, (dh, dk)) for _ in range(config.n_heads)],
                wo=_uniform(rng, (dh, dh)),
                ff_w1=_uniform(rng, (dh, 4 * dh)),
                ff_b1=Tensor(
                    rng.uniform(-1.0 / math.sqrt(dh), 1.0 / math.sqrt(dh), (1, 4 * dh)),
                    requires_grad=True,
                ),
                ff_w2=_uniform(rng, (4 * dh, dh)),
                ff_b2=Tensor(
                    rng.uniform(-1.0 / math.sqrt(4 * dh), 1.0 / math.sqrt(4 * dh), (1, dh)),
                    requires_grad=True,
                ),
                norm1_scale=Tensor(np.ones((1, dh)), requires_grad=True),
                norm1_shift=Tensor(np.zeros((1, dh)), requires_grad=True),
                norm2_scale=Tensor(np.ones((1, dh)), requires_grad=True),
                norm2_shift=Tensor(np.zeros((1, dh)), requires_grad=True),
            )
        )
    decoder = DecoderParams(wq=_uniform(rng, (2 * dh + 2, dh)), wk=_uniform(rng, (dh, dh)))
    return PolicyParams(config=config, gat=gat, layers=layers, decoder=decoder)


# ---------------------------------------------------------------------------
# forward pipeline
# ---------------------------------------------------------------------------


def gat_encode(features: Tensor, weights_in: Tensor, params: PolicyParams) -> Tensor:
    """One graph-attention layer over all arc pairs.

    weights_in[i][j] is the pair weight from arc j into arc i (the
    incoming direction), normalized like the distance feature column.
    """
    dh = params.config.d_h
    wf = ad.matmul(features, params.gat.w)  # (A, d_h)
    a_src = ad.slice_rows(params.gat.a, 0, dh)
    a_dst = ad.slice_rows(params.gat.a, dh, 2 * dh)
    a_w = ad.slice_rows(params.gat.a, 2 * dh, 2 * dh + 1)
    scores = ad.add(
        ad.add(ad.matmul(wf, a_src), ad.transpose(ad.matmul(wf, a_dst))),
        ad.mul(a_w, weights_in),
    )
    attn = ad.softmax_rows(ad.leaky_relu(scores, 0.2))
    return ad.elu(ad.matmul(attn, wf))


def _mha(h: Tensor, layer: LayerParams, config: ModelConfig) -> Tensor:
    inv_sqrt = 1.0 / math.sqrt(config.head_dim)
    heads = []
    for i in range(config.n_heads):
        q = ad.matmul(h, layer.wq[i])
        k = ad.matmul(h, layer.wk[i])
        v = ad.matmul(h, layer.wv[i])
        att = ad.softmax_rows(ad.mul(ad.matmul(q, ad.transpose(k)), inv_sqrt))
        heads.append(ad.matmul(att, v))
    return ad.matmul(ad.concat(heads, axis=1), layer.wo)


def encode(h0: Tensor, params: PolicyParams) -> Tensor:
    """N attention layers with skip connections and per-instance normalization."""
    h = h0
    for layer in params.layers:
        h = ad.normalize(ad.add(h, _mha(h, layer, params.config)), layer.norm1_scale, layer.norm1_shift)
        ff = ad.matmul(
            ad.relu(ad.add(ad.matmul(h, layer.ff_w1), layer.ff_b1)), layer.ff_w2
        )
        ff = ad.add(ff, layer.ff_b2)
        h = ad.normalize(ad.add(h, ff), layer.norm2_scale, layer.norm2_shift)
    return h


def decode(
    hn: Tensor,
    state: EnvState,
    mask: np.ndarray,
    params: PolicyParams,
    capacity: int,
) -> Tensor:
    """Masked single-head decoder; returns the (1, |A|) action distribution."""
    if not mask.any():
        raise ValueError("decode requires at least one legal action")
    config = params.config
    delta = state.remaining_capacity / capacity
    half_flag = 1.0 if state.remaining_capacity > capacity / 2 else 0.0
    context = ad.concat(
        [
            ad.mean_rows(hn),
            ad.gather_rows(hn, [state.last_arc]),
            Tensor(np.array([[delta, half_flag]])),
        ],
        axis=1,
    )
    q = ad.matmul(context, params.decoder.wq)
    keys = ad.matmul(hn, params.decoder.wk)
    raw = ad.mul(ad.matmul(q, ad.transpose(keys)), 1.0 / math.sqrt(config.d_h))
    logits = ad.mul(ad.tanh(raw), config.clip_c)
    return ad.softmax_rows(ad.masked_fill(logits, ~mask[None, :]))


@dataclass(frozen=True)
class Prepared:
    """Per-instance context shared by every decode step."""

    instance: Instance
    dist: DistanceMatrix
    graph: ArcGraph
    mds: MdsCoords
    weights_in: np.ndarray  # normalized incoming pair weights for the GAT

    @property
    def capacity(self) -> int:
        return self.graph.capacity


def prepare_instance(instance: Instance, mds_dim: int = 8) -> Prepared:
    dist = all_pairs_shortest_paths(instance)
    graph = transform(instance, dist)
    mds = classical_mds(dist, mds_dim)
    weights_in = graph.weights.T / scale_constant(graph)
    return Prepared(instance=instance, dist=dist, graph=graph, mds=mds, weights_in=weights_in)


def action_distribution(
    prep: Prepared, state: EnvState, params: PolicyParams, constrained: bool = True
) -> tuple[Tensor, np.ndarray]:
    """Full per-step pipeline; returns (probabilities, legal mask)."""
    mask = legal_actions(state, prep.graph, constrained)
    feats = Tensor(build_features(prep.graph, prep.mds, state).matrix)
    h0 = gat_encode(feats, Tensor(prep.weights_in), params)
    hn = encode(h0, params)
    return decode(hn, state, mask, params, prep.capacity), mask


def sample_index(p: np.ndarray, rng: np.random.Generator) -> int:
    """Draw an index from a probability row with a deterministic generator."""
    cum = np.cumsum(p)
    idx = int(np.searchsorted(cum, rng.random(), side="right"))
    if idx >= len(p):  # guard the cumsum-rounding edge
        idx = int(np.nonzero(p)[0][-1])
    return idx


def act(
    prep: Prepared,
    state: EnvState,
    params: PolicyParams,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
    constrained: bool = True,
) -> tuple[int, float]:
    """Pick one action; greedy breaks ties toward the lowest arc id."""
    with ad.no_grad():
        p, _ = action_distribution(prep, state, params, constrained)
    row = p.data[0]
    if mode == "greedy":
        action = int(np.argmax(row))
    elif mode == "sample":
        if rng is None:
            raise ValueError("sampling mode needs an rng")
        action = sample_index(row, rng)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return action, float(np.log(row[action]))


@dataclass
class Trajectory:
    states: list[EnvState]
    actions: list[int]
    rewards: list[int]
    log_probs: list[float]
    final_state: EnvState

    @property
    def total_reward(self) -> int:
        return sum(self.rewards)


def rollout(
    prep: Prepared,
    params: PolicyParams,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
    constrained: bool = True,
    start_state: EnvState | None = None,
    record_states: bool = False,
) -> Trajectory:
    """Decode a full trajectory from the initial (or a resumed) state."""
    state = start_state.copy() if start_state is not None else initial_state(prep.graph)
    states: list[EnvState] = []
    actions: list[int] = []
    rewards: list[int] = []
    log_probs: list[float] = []
    while not state.done:
        action, logp = act(prep, state, params, mode=mode, rng=rng, constrained=constrained)
        if record_states:
            states.append(state.copy())
        actions.append(action)
        log_probs.append(logp)
        state, reward = step(state, action, prep.graph, constrained)
        rewards.append(reward)
    return Trajectory(
        states=states, actions=actions, rewards=rewards, log_probs=log_probs, final_state=state
    )


def greedy_cost(prep: Prepared, params: PolicyParams, constrained: bool = True) -> int:
    traj = rollout(prep, params, mode="greedy", constrained=constrained)
    return prep.instance.service_cost_constant() - traj.total_reward


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_policy(path, params: PolicyParams) -> None:
    ad.save_checkpoint(path, params.named_tensors(), params.config.manifest())


def load_policy(path) -> PolicyParams:
    tensors, manifest = ad.load_checkpoint(path)
    config = ModelConfig.from_manifest(manifest)
    params = init_params(config, np.random.default_rng(0))
    for name, t in params.named_tensors():
        if name not in tensors:
            raise ad.CheckpointError(f"checkpoint missing tensor {name}")
        if tensors[name].shape != t.data.shape:
            raise ad.CheckpointError(
                f"tensor {name} shape {tensors[name].shape} != expected {t.data.shape}"
            )
        t.data = tensors[name]
    return params
