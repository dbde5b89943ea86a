"""Multi-armed bandit policies over per-batch discrepancy losses.

Arms are chains; the loss of a pull is the (normalized) kernel Stein
discrepancy of the batch the chain just emitted, so lower is better.  UCB1
therefore subtracts its exploration bonus from the running mean and picks the
minimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class BanditState:
    """Running means of normalized losses, pull counts, round clock, scale."""

    means: np.ndarray        # (M,) running average of normalized losses
    pulls: np.ndarray        # (M,) number of pulls per arm
    t: int                   # total pulls so far
    scale: float             # normalization constant (max of the first raw losses)

    @property
    def n_arms(self) -> int:
        return self.means.size


def init_bandit(first_raw_losses) -> BanditState:
    """Initialize after every arm has been pulled once.

    The normalization scale is the largest first-round loss; all subsequent
    losses are divided by it and clipped into [0, 1] so the UCB1 bounded
    reward assumption holds.
    """
    raw = np.asarray(first_raw_losses, dtype=float).ravel()
    if raw.size < 1:
        raise ValueError("need at least one arm")
    if np.any(raw < 0) or not np.all(np.isfinite(raw)):
        raise ValueError("losses must be finite and nonnegative")
    scale = float(raw.max())
    if scale <= 0:
        scale = 1.0
    means = np.clip(raw / scale, 0.0, 1.0)
    pulls = np.ones(raw.size, dtype=int)
    return BanditState(means=means, pulls=pulls, t=raw.size, scale=scale)


def normalize_and_update(state: BanditState, arm: int, raw_loss: float) -> None:
    """Fold one raw loss into the running mean of ``arm`` (in place)."""
    if not np.isfinite(raw_loss) or raw_loss < 0:
        raise ValueError("loss must be finite and nonnegative")
    loss = min(raw_loss / state.scale, 1.0)
    state.pulls[arm] += 1
    state.t += 1
    n = state.pulls[arm]
    state.means[arm] += (loss - state.means[arm]) / n


def _as_arms(state, arms):
    if arms is None:
        return np.arange(state.n_arms)
    arms = np.asarray(list(arms), dtype=int)
    if arms.size == 0:
        raise ValueError("empty arm subset")
    return arms


def ucb1_select(state: BanditState, arms=None) -> int:
    """UCB1 on losses: argmin over arms of mean - sqrt(2 log t / pulls).

    Ties go to the lowest arm index.
    """
    idx = _as_arms(state, arms)
    bonus = np.sqrt(2.0 * np.log(max(state.t, 1)) / state.pulls[idx])
    scores = state.means[idx] - bonus
    return int(idx[np.argmin(scores)])


def eps_greedy_select(state: BanditState, rng, arms=None, eps0: float = 0.05) -> int:
    """Epsilon-greedy with a decaying exploration rate eps0 / sqrt(t)."""
    idx = _as_arms(state, arms)
    eps = eps0 / np.sqrt(max(state.t, 1))
    if rng.uniform() < eps:
        return int(rng.choice(idx))
    return int(idx[np.argmin(state.means[idx])])


def uniform_select(state: BanditState, arms=None) -> int:
    """Round-robin: the arm with the fewest pulls (lowest index on ties)."""
    idx = _as_arms(state, arms)
    return int(idx[np.argmin(state.pulls[idx])])


def select_arm(policy: str, state: BanditState, rng, arms=None) -> int:
    if policy == "ucb1":
        return ucb1_select(state, arms)
    if policy == "eps-greedy":
        return eps_greedy_select(state, rng, arms)
    if policy == "uniform":
        return uniform_select(state, arms)
    raise ValueError(f"unknown bandit policy {policy!r}")
