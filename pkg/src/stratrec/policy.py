"""The trainable macro-strategy planner.

A linear-softmax policy over the sparse state features: logits = W x,
strategies sampled from softmax(logits). Training is two-stage: supervised
warm-up on annotated strategy labels (cross-entropy), then policy-gradient
ascent on

    J = sum_t log pi(h_t | s_t) * R_t + beta * (1/T) * sum_t H(pi(. | s_t))

per trajectory, averaged over a batch of trajectories. R_t is the
discounted return from turn t onward. Gradients are analytic throughout
(score function plus the entropy term) and are cross-checked against
finite differences in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .features import FEATURE_DIM, LAYOUT_VERSION, FeatureVector
from .strategies import N_STRATEGIES


class NonFiniteGradientError(RuntimeError):
    """Raised when a step would write non-finite values into the weights."""


@dataclass
class PolicyParams:
    """Weight matrix plus optimizer state. Single-writer semantics."""

    weights: np.ndarray  # (N_STRATEGIES, dim) float64
    opt_m: np.ndarray
    opt_v: np.ndarray
    opt_step: int = 0
    optimizer: str = "adamw"  # "adamw" | "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    layout_version: str = LAYOUT_VERSION

    @classmethod
    def zeros(cls, dim: int = FEATURE_DIM, optimizer: str = "adamw") -> "PolicyParams":
        shape = (N_STRATEGIES, dim)
        return cls(
            weights=np.zeros(shape),
            opt_m=np.zeros(shape),
            opt_v=np.zeros(shape),
            optimizer=optimizer,
        )

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            weights=self.weights.copy(),
            opt_m=self.opt_m.copy(),
            opt_v=self.opt_v.copy(),
            opt_step=self.opt_step,
            optimizer=self.optimizer,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            weight_decay=self.weight_decay,
            layout_version=self.layout_version,
        )


@dataclass(frozen=True)
class StrategyDistribution:
    probs: np.ndarray
    logits: np.ndarray

    @classmethod
    def from_probs(cls, probs: Sequence[float]) -> "StrategyDistribution":
        p = np.asarray(probs, dtype=np.float64)
        logits = np.log(np.clip(p, 1e-300, None))
        return cls(probs=p, logits=logits)


def policy_distribution(params: PolicyParams, features: FeatureVector) -> StrategyDistribution:
    """Softmax over W x, stabilized by max-logit subtraction."""
    if features.dim != params.dim:
        raise ValueError(f"feature dim {features.dim} does not match policy dim {params.dim}")
    logits = kernels.sparse_logits(params.weights, features.indices, features.values)
    probs = kernels.softmax(logits)
    return StrategyDistribution(probs=probs, logits=logits)


def sample_strategy(dist: StrategyDistribution, rng: np.random.Generator) -> int:
    """Inverse-CDF sample in index order; deterministic for a seeded rng."""
    u = rng.random()
    cum = np.cumsum(dist.probs)
    idx = int(np.searchsorted(cum, u, side="right"))
    return min(idx, len(dist.probs) - 1)


def entropy(dist: StrategyDistribution) -> float:
    """Natural-log entropy with the 0*log(0) := 0 convention."""
    p = dist.probs
    terms = np.where(p > 0.0, p * np.log(np.clip(p, 1e-300, None)), 0.0)
    return float(-terms.sum())


def _entropy_logit_grad(probs: np.ndarray) -> np.ndarray:
    # dH/dz_j = -p_j (log p_j + H); components sum to zero
    logp = np.log(np.clip(probs, 1e-300, None))
    h = float(-(probs * logp).sum())
    return -probs * (logp + h)


def discounted_returns(rewards: Sequence[float], gamma: float) -> np.ndarray:
    """Per-turn cumulative returns via the backward recursion R_t = r_t + gamma R_{t+1}."""
    if len(rewards) == 0:
        raise ValueError("rewards must be non-empty")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    out = np.empty(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


# ---------------------------------------------------------------------------
# Supervised warm-up
# ---------------------------------------------------------------------------

SftBatch = Sequence[tuple[FeatureVector, int]]


def sft_loss_and_grad(weights: np.ndarray, batch: SftBatch) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the weights.

    Per sample the gradient is (probs - onehot(gold)) outer features.
    """
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    grad = np.zeros_like(weights)
    total = 0.0
    for fv, gold in batch:
        logits = kernels.sparse_logits(weights, fv.indices, fv.values)
        probs = kernels.softmax(logits)
        total -= math.log(max(probs[gold], 1e-300))
        coeff = probs.copy()
        coeff[gold] -= 1.0
        kernels.add_outer(grad, fv.indices, fv.values, coeff)
    n = float(len(batch))
    grad /= n
    return total / n, grad


def sft_step(params: PolicyParams, batch: SftBatch, lr: float) -> tuple[PolicyParams, float]:
    """One optimizer step on the mean cross-entropy; aborts on non-finite values."""
    loss, grad = sft_loss_and_grad(params.weights, batch)
    if not math.isfinite(loss) or not np.isfinite(grad).all():
        raise NonFiniteGradientError("supervised step produced non-finite loss or gradient")
    _apply_minimizing_gradient(params, grad, lr)
    return params, loss


# ---------------------------------------------------------------------------
# Policy-gradient tuning
# ---------------------------------------------------------------------------


@dataclass
class EpisodeSample:
    """Aligned per-turn training data for one session."""

    features: list[FeatureVector]
    strategies: list[int]
    rewards: list[float]

    def __post_init__(self) -> None:
        if not (len(self.features) == len(self.strategies) == len(self.rewards)):
            raise ValueError("features, strategies and rewards must have equal lengths")
        if not self.features:
            raise ValueError("episode must hold at least one turn")


@dataclass
class RlStats:
    mean_return: float
    mean_entropy: float
    grad_norm: float = 0.0
    objective: float = 0.0


def rl_objective_and_grad(
    weights: np.ndarray,
    episodes: Sequence[EpisodeSample],
    beta: float,
    gamma: float,
    baseline: bool = False,
) -> tuple[float, np.ndarray, RlStats]:
    """Evaluate the entropy-regularized objective and its analytic gradient.

    Returns (J, dJ/dW, stats); callers ascend J. With ``baseline`` the
    per-batch mean episode return is subtracted from every R_t (variance
    reduction only; off by default).
    """
    if beta < 0.0:
        raise ValueError("beta must be non-negative")
    if len(episodes) == 0:
        raise ValueError("need at least one trajectory")

    returns = [discounted_returns(ep.rewards, gamma) for ep in episodes]
    base = float(np.mean([r[0] for r in returns])) if baseline else 0.0

    grad = np.zeros_like(weights)
    objective = 0.0
    entropies = []
    for ep, rets in zip(episodes, returns):
        t_len = len(ep.features)
        for fv, h, r_t in zip(ep.features, ep.strategies, rets):
            logits = kernels.sparse_logits(weights, fv.indices, fv.values)
            probs = kernels.softmax(logits)
            logp = np.log(np.clip(probs, 1e-300, None))
            h_ent = float(-(probs * logp).sum())
            entropies.append(h_ent)

            advantage = r_t - base
            objective += float(logp[h]) * advantage + beta * h_ent / t_len

            coeff = -probs * advantage
            coeff[h] += advantage
            if beta > 0.0:
                coeff += (beta / t_len) * (-probs * (logp + h_ent))
            kernels.add_outer(grad, fv.indices, fv.values, coeff)

    n = float(len(episodes))
    objective /= n
    grad /= n
    stats = RlStats(
        mean_return=float(np.mean([r[0] for r in returns])),
        mean_entropy=float(np.mean(entropies)),
        grad_norm=float(np.linalg.norm(grad)),
        objective=objective,
    )
    return objective, grad, stats


def rl_update(
    params: PolicyParams,
    episodes: Sequence[EpisodeSample],
    alpha: float,
    beta: float,
    gamma: float,
    baseline: bool = False,
) -> tuple[PolicyParams, RlStats]:
    """One ascent step on the batch objective through the configured optimizer."""
    _, grad, stats = rl_objective_and_grad(params.weights, episodes, beta, gamma, baseline=baseline)
    if not np.isfinite(grad).all():
        raise NonFiniteGradientError("policy-gradient step produced non-finite gradient")
    _apply_minimizing_gradient(params, -grad, alpha)
    return params, stats


def _apply_minimizing_gradient(params: PolicyParams, grad: np.ndarray, lr: float) -> None:
    if params.optimizer == "sgd":
        candidate = params.weights - lr * grad
        if not np.isfinite(candidate).all():
            raise NonFiniteGradientError("step would produce non-finite weights")
        params.weights[...] = candidate
        params.opt_step += 1
        return
    if params.optimizer != "adamw":
        raise ValueError(f"unknown optimizer: {params.optimizer}")
    backup = (params.weights.copy(), params.opt_m.copy(), params.opt_v.copy())
    params.opt_step += 1
    kernels.adamw_step(
        params.weights,
        params.opt_m,
        params.opt_v,
        grad,
        lr,
        params.beta1,
        params.beta2,
        params.eps,
        params.weight_decay,
        params.opt_step,
    )
    if not np.isfinite(params.weights).all():
        params.weights[...], params.opt_m[...], params.opt_v[...] = backup
        params.opt_step -= 1
        raise NonFiniteGradientError("step produced non-finite weights")
