"""Dirichlet posterior over the unknown transition kernel."""
from __future__ import annotations

import numpy as np


class DirichletBelief:
    """Per-(s, a) Dirichlet concentrations over the ``S + 1`` successors.

    ``concentrations[s, a, s'] - prior_alpha`` is always the number of observed
    ``(s, a) -> s'`` transitions.  A belief has a single writer.
    """

    def __init__(self, num_states: int, num_actions: int, prior_alpha: float):
        if not prior_alpha > 0:
            raise ValueError(f"prior_alpha must be positive, got {prior_alpha}")
        self.num_states = num_states
        self.num_actions = num_actions
        self.prior_alpha = float(prior_alpha)
        self.concentrations = np.full((num_states, num_actions, num_states + 1), self.prior_alpha)
        self.num_updates = 0

    def update(self, s: int, a: int, s_next: int) -> "DirichletBelief":
        if not (0 <= s < self.num_states and 0 <= a < self.num_actions
                and 0 <= s_next <= self.num_states):
            raise ValueError(f"transition ({s}, {a}, {s_next}) out of range")
        self.concentrations[s, a, s_next] += 1.0
        self.num_updates += 1
        return self

    def transition_counts(self) -> np.ndarray:
        return np.rint(self.concentrations - self.prior_alpha).astype(np.int64)

    def mean(self) -> np.ndarray:
        return self.concentrations / self.concentrations.sum(axis=2, keepdims=True)

    def sample_kernel(self, rng: np.random.Generator) -> np.ndarray:
        return sample_dirichlet_rows(self.concentrations, rng)


def new_belief(num_states: int, num_actions: int, prior_alpha: float) -> DirichletBelief:
    return DirichletBelief(num_states, num_actions, prior_alpha)


def posterior_mean(belief: DirichletBelief) -> np.ndarray:
    return belief.mean()


def sample_kernel(belief: DirichletBelief, rng: np.random.Generator) -> np.ndarray:
    return belief.sample_kernel(rng)


def sample_dirichlet_rows(concentrations, rng: np.random.Generator) -> np.ndarray:
    """Draw one Dirichlet vector per leading index by normalising unit-scale Gamma draws.

    Shapes around 0.1 can underflow to an exact zero; those entries are redrawn
    so every outcome keeps positive mass.
    """
    concentrations = np.asarray(concentrations, dtype=float)
    draws = rng.standard_gamma(concentrations)
    zero = draws == 0.0
    while zero.any():
        draws[zero] = rng.standard_gamma(concentrations[zero])
        zero = draws == 0.0
    return draws / draws.sum(axis=-1, keepdims=True)
