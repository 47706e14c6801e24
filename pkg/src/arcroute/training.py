"""Supervised pre-training and PPO fine-tuning with a self-critical baseline.

Pre-training treats each expert step as a multi-class classification
target and minimizes cross-entropy over shuffled (state, action) pairs.
Fine-tuning keeps two policies: the frozen behavior/baseline policy
collects trajectories and greedy completions, the trained policy samples
completions from the same states, and their return difference is the
advantage inside a clipped-ratio surrogate. The baseline only ever gets
replaced by a strictly better policy on a held-out pool, so its greedy
cost never increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .arcgraph import EnvState, initial_state, legal_actions, run_sequence, step
from .autodiff import AdamState, Tensor, adam_step
from .model import (
    PolicyParams,
    Prepared,
    action_distribution,
    rollout,
)
from .teacher import LabelSet


@dataclass
class SlConfig:
    batch_size: int = 128
    epochs: int = 10
    learning_rate: float = 1e-4
    shuffle_seed: int = 0


@dataclass
class PpoConfig:
    batch_size: int = 64
    episodes: int = 200
    clip_epsilon: float = 0.1
    discount: float = 1.0  # undiscounted returns by design
    inner_epochs: int = 1
    eval_pool_size: int = 30
    constrained: bool = True

    def __post_init__(self):
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if self.discount != 1.0:
            raise ValueError("returns are undiscounted; discount must stay 1")


@dataclass
class TrajectorySample:
    prep: Prepared
    state: EnvState
    action: int
    behavior_log_prob: float
    advantage: float = 0.0


def clip(w: float, lo: float, hi: float) -> float:
    return min(max(w, lo), hi)


def _log_prob_of(
    prep: Prepared,
    state: EnvState,
    action: int,
    params: PolicyParams,
    constrained: bool = True,
) -> Tensor:
    """Differentiable log-probability of one action at one state."""
    p, _ = action_distribution(prep, state, params, constrained=constrained)
    picked = ad.gather_rows(ad.transpose(p), [action])
    return ad.sum_all(ad.log(picked))


# ---------------------------------------------------------------------------
# supervised pre-training
# ---------------------------------------------------------------------------


def replay_pairs(prep: Prepared, labels: LabelSet) -> list[tuple[EnvState, int]]:
    """Expand a label sequence into (state-before, action) training pairs."""
    states, _, _ = run_sequence(prep.graph, list(labels.sequence), constrained=True)
    return list(zip(states, labels.sequence))


@dataclass
class SlEpochStats:
    epoch: int
    mean_loss: float
    accuracy: float


def pretrain_sl(
    dataset: list[tuple[Prepared, LabelSet]],
    params: PolicyParams,
    config: SlConfig,
    optimizer: AdamState | None = None,
    log=None,
) -> list[SlEpochStats]:
    """Minimize cross-entropy against the expert actions.

    Instances whose labels fail to replay are skipped with a report
    rather than aborting the run.
    """
    pairs: list[tuple[Prepared, EnvState, int]] = []
    for prep, labels in dataset:
        try:
            for state, action in replay_pairs(prep, labels):
                pairs.append((prep, state, action))
        except Exception as exc:  # noqa: BLE001 - skip-and-report contract
            if log:
                log(f"skipping {labels.instance_name}: label replay failed ({exc})")
    if not pairs:
        raise ValueError("no replayable labels")
    opt = optimizer or AdamState(learning_rate=config.learning_rate)
    rng = np.random.default_rng(config.shuffle_seed)
    history: list[SlEpochStats] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(pairs))
        losses: list[float] = []
        hits = 0
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo : lo + config.batch_size]
            terms = []
            for idx in batch:
                prep, state, action = pairs[idx]
                p, _ = action_distribution(prep, state, params, constrained=True)
                if int(np.argmax(p.data[0])) == action:
                    hits += 1
                picked = ad.gather_rows(ad.transpose(p), [action])
                terms.append(ad.mul(ad.sum_all(ad.log(picked)), -1.0))
            loss = terms[0]
            for term in terms[1:]:
                loss = ad.add(loss, term)
            loss = ad.mul(loss, 1.0 / len(batch))
            ad.backward(loss)
            adam_step(params.named_tensors(), opt)
            losses.append(float(loss.data))
        stats = SlEpochStats(
            epoch=epoch, mean_loss=float(np.mean(losses)), accuracy=hits / len(pairs)
        )
        history.append(stats)
        if log:
            log(f"sl epoch {epoch}: loss {stats.mean_loss:.4f} acc {stats.accuracy:.3f}")
    return history


def teacher_match_accuracy(
    dataset: list[tuple[Prepared, LabelSet]], params: PolicyParams
) -> float:
    """Fraction of expert steps where the greedy policy picks the same arc."""
    hits = total = 0
    with ad.no_grad():
        for prep, labels in dataset:
            for state, action in replay_pairs(prep, labels):
                p, _ = action_distribution(prep, state, params, constrained=True)
                hits += int(np.argmax(p.data[0])) == action
                total += 1
    return hits / max(total, 1)


# ---------------------------------------------------------------------------
# evaluation helpers
# ---------------------------------------------------------------------------


def trajectory_cost(prep: Prepared, total_reward: int) -> int:
    return prep.instance.service_cost_constant() - total_reward


def evaluate_policy(
    params: PolicyParams, preps: list[Prepared], constrained: bool = True
) -> tuple[float, list[int]]:
    """Greedy-decode every instance; returns (mean cost, per-instance costs)."""
    costs = []
    for prep in preps:
        traj = rollout(prep, params, mode="greedy", constrained=constrained)
        costs.append(trajectory_cost(prep, traj.total_reward))
    return float(np.mean(costs)), costs


def random_policy_cost(prep: Prepared, rng: np.random.Generator) -> int:
    """Cost of one uniform-random legal rollout (constrained)."""
    state = initial_state(prep.graph)
    total = 0
    while not state.done:
        mask = legal_actions(state, prep.graph, constrained=True)
        choices = np.nonzero(mask)[0]
        action = int(choices[rng.integers(len(choices))])
        state, reward = step(state, action, prep.graph)
        total += reward
    return trajectory_cost(prep, total)


# ---------------------------------------------------------------------------
# PPO fine-tuning
# ---------------------------------------------------------------------------


@dataclass
class PpoEpisodeStats:
    episode: int
    loss: float
    mean_advantage: float
    theta_cost: float
    baseline_cost: float
    baseline_swapped: bool


def finetune_ppo(
    params: PolicyParams,
    train_pool: list[Prepared],
    test_pool: list[Prepared],
    config: PpoConfig,
    rng: np.random.Generator,
    optimizer: AdamState | None = None,
    log=None,
) -> list[PpoEpisodeStats]:
    """Clipped-ratio policy-gradient fine-tuning, trained in place.

    Each episode: fill a batch of (state, action) pairs from trajectories
    sampled by the baseline policy, score every pair by the return gap
    between a sampled completion (trained policy) and a greedy completion
    (baseline), then ascend the clipped surrogate. The baseline adopts the
    trained weights only after a strict improvement on the held-out pool.
    """
    opt = optimizer or AdamState()
    baseline = params.copy()
    pool = test_pool[: config.eval_pool_size]
    baseline_cost, _ = evaluate_policy(baseline, pool, constrained=config.constrained)
    eps = config.clip_epsilon
    history: list[PpoEpisodeStats] = []
    for episode in range(1, config.episodes + 1):
        batch: list[TrajectorySample] = []
        while len(batch) < config.batch_size:
            prep = train_pool[int(rng.integers(len(train_pool)))]
            traj = rollout(
                prep, baseline, mode="sample", rng=rng,
                constrained=config.constrained, record_states=True,
            )
            for state, action, logp in zip(traj.states, traj.actions, traj.log_probs):
                batch.append(
                    TrajectorySample(
                        prep=prep, state=state, action=action, behavior_log_prob=logp
                    )
                )
        for sample in batch:
            sampled = rollout(
                sample.prep, params, mode="sample", rng=rng,
                constrained=config.constrained, start_state=sample.state,
            )
            greedy = rollout(
                sample.prep, baseline, mode="greedy",
                constrained=config.constrained, start_state=sample.state,
            )
            sample.advantage = float(sampled.total_reward - greedy.total_reward)
        loss_value = 0.0
        for _ in range(config.inner_epochs):
            terms = []
            for sample in batch:
                if sample.advantage == 0.0:
                    continue  # exact zero contribution either way
                logp = _log_prob_of(
                    sample.prep, sample.state, sample.action, params, config.constrained
                )
                ratio = ad.exp(ad.add(logp, -sample.behavior_log_prob))
                surrogate = ad.minimum(
                    ad.mul(ratio, sample.advantage),
                    ad.mul(ad.clamp(ratio, 1.0 - eps, 1.0 + eps), sample.advantage),
                )
                terms.append(ad.mul(surrogate, -1.0))
            if not terms:
                break
            loss = terms[0]
            for term in terms[1:]:
                loss = ad.add(loss, term)
            loss = ad.mul(loss, 1.0 / len(batch))
            ad.backward(loss)
            adam_step(params.named_tensors(), opt)
            loss_value = float(loss.data)
        theta_cost, _ = evaluate_policy(params, pool, constrained=config.constrained)
        swapped = theta_cost < baseline_cost
        if swapped:
            baseline = params.copy()
            baseline_cost = theta_cost
        stats = PpoEpisodeStats(
            episode=episode,
            loss=loss_value,
            mean_advantage=float(np.mean([s.advantage for s in batch])),
            theta_cost=theta_cost,
            baseline_cost=baseline_cost,
            baseline_swapped=swapped,
        )
        history.append(stats)
        if log:
            log(
                f"ppo episode {episode}: loss {stats.loss:.4f} "
                f"adv {stats.mean_advantage:+.2f} cost {theta_cost:.2f} "
                f"baseline {baseline_cost:.2f}{' *' if swapped else ''}"
            )
    return history
