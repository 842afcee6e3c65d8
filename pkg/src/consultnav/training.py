"""Hybrid behavior-cloning + offline-RL objectives and the training loop.

Three objectives over extracted state-action pairs:

* BC — plain cross-entropy imitation of the recorded next inquiry.
* RWBC — cross-entropy weighted per sample by the immediate reward, so
  information-efficient expert decisions dominate the update.
* RABC — weighted sum of the BC term, an advantage-weighted policy term
  (reward minus the batch-mean baseline), and an entropy term.

Also hosts the standalone preference-margin scoring function used to compare
policy/reference log-probabilities of chosen vs rejected responses.

The optimizer is SGD with classical momentum: no adaptive state, so a seed
pins the whole run bit-for-bit.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import CaseSequence, StateActionPair, SymptomVocabulary, extract_corpus_pairs
from .errors import ConfigError, DataError
from .policy import (
    PolicyConfig,
    PolicyParameters,
    forward_batch,
    init_policy,
    objective_grad,
    trainable_names,
)
from .transitions import RewardConfig, TransitionModel, immediate_reward

OBJECTIVES = ("BC", "RWBC", "RABC")
ENTROPY_SIGNS = ("bonus", "penalty")


@dataclass(frozen=True)
class TrainingConfig:
    objective: str = "BC"
    batch_size: int = 32
    epochs: int = 30
    learning_rate: float = 1e-2
    momentum: float = 0.9
    beta1: float = 1.0
    beta2: float = 0.5
    eta: float = 0.01
    entropy_sign: str = "bonus"
    seed: int = 0
    shuffle: bool = True
    holdout_fraction: float = 0.1
    reward: RewardConfig = field(default_factory=RewardConfig)

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.momentum < 0:
            raise ConfigError(f"momentum must be >= 0, got {self.momentum}")
        if self.beta1 < 0 or self.beta2 < 0:
            raise ConfigError("beta1 and beta2 must be >= 0")
        if self.eta < 0:
            raise ConfigError(f"eta must be >= 0, got {self.eta}")
        if self.entropy_sign not in ENTROPY_SIGNS:
            raise ConfigError(f"entropy_sign must be one of {ENTROPY_SIGNS}, got {self.entropy_sign!r}")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError(f"holdout_fraction must be in [0, 1), got {self.holdout_fraction}")


@dataclass
class EpochRecord:
    epoch: int
    bc_loss: float
    po_loss: float
    entropy_loss: float
    total_loss: float
    holdout_accuracy: float


@dataclass
class TrainingReport:
    objective: str
    n_pairs: int
    n_holdout: int
    epochs: list[EpochRecord]
    wall_clock_seconds: float
    checkpoint_path: str | None = None

    @property
    def final_accuracy(self) -> float:
        return self.epochs[-1].holdout_accuracy

    def to_dict(self, include_timing: bool = False) -> dict:
        # Timing is excluded by default so emitted reports are byte-stable
        # across identical runs; it is still printed to stdout by the CLI.
        doc = {
            "objective": self.objective,
            "n_pairs": self.n_pairs,
            "n_holdout": self.n_holdout,
            "final_accuracy": self.final_accuracy,
            "checkpoint_path": self.checkpoint_path,
            "epochs": [
                {
                    "epoch": r.epoch,
                    "bc_loss": r.bc_loss,
                    "po_loss": r.po_loss,
                    "entropy_loss": r.entropy_loss,
                    "total_loss": r.total_loss,
                    "holdout_accuracy": r.holdout_accuracy,
                }
                for r in self.epochs
            ],
        }
        if include_timing:
            doc["wall_clock_seconds"] = self.wall_clock_seconds
        return doc


def compute_pair_rewards(
    pairs: Sequence[StateActionPair],
    model: TransitionModel,
    reward_cfg: RewardConfig,
) -> np.ndarray:
    """Immediate reward of each recorded action given its state window.

    Rewards depend only on the frozen transition model, so they are computed
    once and reused across epochs.
    """
    return np.array(
        [immediate_reward(model, p.action, p.state, reward_cfg) for p in pairs],
        dtype=np.float64,
    )


def bc_loss(params: PolicyParameters, batch: Sequence[StateActionPair]):
    """Plain imitation cross-entropy; returns (loss, gradient dict)."""
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    states = [p.state for p in batch]
    actions = [p.action for p in batch]
    logp, _, grads = objective_grad(params, states, actions, np.ones(len(batch)))
    return float(-logp.mean()), grads


def rwbc_loss(
    params: PolicyParameters,
    batch: Sequence[StateActionPair],
    model: TransitionModel,
    reward_cfg: RewardConfig = RewardConfig(),
    rewards: np.ndarray | None = None,
):
    """Reward-weighted cross-entropy; reduces to bc_loss when all rewards are 1."""
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    if rewards is None:
        rewards = compute_pair_rewards(batch, model, reward_cfg)
    weights = np.asarray(rewards, dtype=np.float64)
    states = [p.state for p in batch]
    actions = [p.action for p in batch]
    logp, _, grads = objective_grad(params, states, actions, weights)
    return float(-(weights * logp).mean()), grads


@dataclass(frozen=True)
class RabcComponents:
    bc: float
    po: float
    entropy: float


def rabc_loss(
    params: PolicyParameters,
    batch: Sequence[StateActionPair],
    model: TransitionModel,
    reward_cfg: RewardConfig = RewardConfig(),
    beta1: float = 1.0,
    beta2: float = 0.5,
    eta: float = 0.01,
    entropy_sign: str = "bonus",
    rewards: np.ndarray | None = None,
):
    """Combined objective: beta1*BC + beta2*advantage-weighted PO + entropy term.

    The policy term weights each sample's log-likelihood by its reward minus
    the batch-mean baseline, which cancels any constant shift of the rewards.
    With entropy_sign="bonus" (default) the entropy term is -eta*H, so higher
    entropy lowers the total; "penalty" flips it to +eta*H.

    Returns (total, components, gradient dict).
    """
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    if entropy_sign not in ENTROPY_SIGNS:
        raise ValueError(f"entropy_sign must be one of {ENTROPY_SIGNS}, got {entropy_sign!r}")
    if rewards is None:
        rewards = compute_pair_rewards(batch, model, reward_cfg)
    rewards = np.asarray(rewards, dtype=np.float64)
    baseline = rewards.mean()
    advantage = rewards - baseline
    entropy_coeff = eta if entropy_sign == "penalty" else -eta

    states = [p.state for p in batch]
    actions = [p.action for p in batch]
    ce_weights = beta1 + beta2 * advantage
    logp, entropies, grads = objective_grad(
        params, states, actions, ce_weights, entropy_coeff=entropy_coeff
    )
    comp = RabcComponents(
        bc=float(-logp.mean()),
        po=float(-(advantage * logp).mean()),
        entropy=float(entropy_coeff * entropies.mean()),
    )
    total = beta1 * comp.bc + beta2 * comp.po + comp.entropy
    return total, comp, grads


def dpo_loss(
    logp_w_policy: float,
    logp_l_policy: float,
    logp_w_ref: float,
    logp_l_ref: float,
    beta: float = 0.1,
) -> float:
    """Preference-margin loss: -log sigmoid(beta * margin).

    The margin is the policy-vs-reference log-probability gap on the chosen
    response minus the same gap on the rejected one. Computed via a stable
    softplus so extreme margins neither overflow nor lose the tail.
    """
    values = (logp_w_policy, logp_l_policy, logp_w_ref, logp_l_ref)
    if not all(math.isfinite(v) for v in values):
        raise ValueError(f"log-probabilities must be finite, got {values}")
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    margin = (logp_w_policy - logp_w_ref) - (logp_l_policy - logp_l_ref)
    x = -beta * margin
    # softplus(x) = log(1 + e^x), stable for large |x|
    return math.log1p(math.exp(-abs(x))) + max(x, 0.0)


def top1_accuracy(params: PolicyParameters, pairs: Sequence[StateActionPair], chunk: int = 512) -> float:
    """Fraction of pairs whose recorded action is the policy argmax."""
    if not pairs:
        return 0.0
    hits = 0
    for start in range(0, len(pairs), chunk):
        block = pairs[start : start + chunk]
        probs = forward_batch(params, [p.state for p in block])
        predicted = probs.argmax(axis=1)
        hits += int(np.sum(predicted == np.array([p.action for p in block])))
    return hits / len(pairs)


def train(
    corpus: Sequence[CaseSequence],
    vocab: SymptomVocabulary,
    transition_model: TransitionModel | None,
    policy_cfg: PolicyConfig,
    train_cfg: TrainingConfig,
) -> tuple[PolicyParameters, TrainingReport]:
    """Run the configured objective over the corpus; deterministic per seed."""
    started = time.perf_counter()
    for case in corpus:
        case.validate_indices(vocab.size)
    pairs = extract_corpus_pairs(corpus, policy_cfg.max_window)
    if not pairs:
        raise DataError("corpus yields zero state-action pairs (all cases have length 1?)")
    if train_cfg.objective in ("RWBC", "RABC") and transition_model is None:
        raise ConfigError(f"objective {train_cfg.objective} requires a transition model")

    rng = np.random.default_rng(train_cfg.seed)
    perm = rng.permutation(len(pairs))
    n_holdout = min(int(len(pairs) * train_cfg.holdout_fraction), len(pairs) - 1)
    holdout_pairs = [pairs[i] for i in perm[:n_holdout]]
    train_pairs = [pairs[i] for i in perm[n_holdout:]]

    rewards = None
    if train_cfg.objective in ("RWBC", "RABC"):
        rewards = compute_pair_rewards(train_pairs, transition_model, train_cfg.reward)

    params = init_policy(policy_cfg)
    velocity = {name: np.zeros(params.tensors[name].shape) for name in trainable_names(policy_cfg)}
    eval_pairs = holdout_pairs if holdout_pairs else train_pairs

    records: list[EpochRecord] = []
    n_train = len(train_pairs)
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(n_train) if train_cfg.shuffle else np.arange(n_train)
        sums = {"bc": 0.0, "po": 0.0, "entropy": 0.0, "total": 0.0}
        for start in range(0, n_train, train_cfg.batch_size):
            idx = order[start : start + train_cfg.batch_size]
            batch = [train_pairs[i] for i in idx]
            if train_cfg.objective == "BC":
                loss, grads = bc_loss(params, batch)
                comp = RabcComponents(bc=loss, po=0.0, entropy=0.0)
            elif train_cfg.objective == "RWBC":
                batch_rewards = rewards[idx]
                logp, _, grads = objective_grad(
                    params,
                    [p.state for p in batch],
                    [p.action for p in batch],
                    batch_rewards,
                )
                loss = float(-(batch_rewards * logp).mean())
                comp = RabcComponents(bc=float(-logp.mean()), po=0.0, entropy=0.0)
            else:
                loss, comp, grads = rabc_loss(
                    params,
                    batch,
                    transition_model,
                    train_cfg.reward,
                    beta1=train_cfg.beta1,
                    beta2=train_cfg.beta2,
                    eta=train_cfg.eta,
                    entropy_sign=train_cfg.entropy_sign,
                    rewards=rewards[idx],
                )
            weight = len(batch) / n_train
            sums["bc"] += comp.bc * weight
            sums["po"] += comp.po * weight
            sums["entropy"] += comp.entropy * weight
            sums["total"] += loss * weight

            for name, grad in grads.items():
                velocity[name] = train_cfg.momentum * velocity[name] + grad
                updated = params.tensors[name].astype(np.float64) - train_cfg.learning_rate * velocity[name]
                params.tensors[name] = updated.astype(np.float32)

        records.append(
            EpochRecord(
                epoch=epoch,
                bc_loss=sums["bc"],
                po_loss=sums["po"],
                entropy_loss=sums["entropy"],
                total_loss=sums["total"],
                holdout_accuracy=top1_accuracy(params, eval_pairs),
            )
        )

    report = TrainingReport(
        objective=train_cfg.objective,
        n_pairs=len(pairs),
        n_holdout=len(holdout_pairs),
        epochs=records,
        wall_clock_seconds=time.perf_counter() - started,
    )
    return params, report
