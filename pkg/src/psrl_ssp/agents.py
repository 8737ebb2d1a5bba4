"""Epoch-based learning agents: posterior sampling and two comparison baselines.

All agents share the same epoch schedule.  A new epoch starts at the top of a
time step when either

* the number of episodes begun since the epoch started exceeds the number of
  goal visits of the previous epoch, or
* some state-action visit count exceeds twice its value at the epoch start.

They differ only in the kernel they plan on: a posterior sample (PSRL), the
most favourable kernel inside a Bernstein confidence set (optimism), or the
posterior mean (greedy).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .planner import DEFAULT_CONFIG, DivergenceError, MaxIterationsError, SolverConfig, ValueSolution, value_iteration
from .posterior import DirichletBelief

ALGORITHMS = ("psrl", "optimism", "greedy")


class EpochBookkeepingError(RuntimeError):
    """An epoch-schedule invariant was violated; always a bug."""


@dataclass
class EpochState:
    visit_counts: np.ndarray
    visit_snapshot: np.ndarray
    epoch_index: int = 0
    start_time: int = 0
    start_episode: int = 0
    prev_episodes: int = 0
    current_policy: np.ndarray | None = None

    @classmethod
    def initial(cls, num_states: int, num_actions: int) -> "EpochState":
        zeros = np.zeros((num_states, num_actions), dtype=np.int64)
        return cls(zeros, zeros.copy())


@dataclass
class EpochRecord:
    index: int
    start_time: int
    start_episode: int
    prev_episodes: int
    reason: str
    visit_snapshot: np.ndarray = field(repr=False)
    transition_counts: np.ndarray = field(repr=False)
    episodes: int | None = None


def trigger_reason(state: EpochState, k: int) -> str | None:
    """Which criterion starts a new epoch at episode ``k``, or None."""
    if k - state.start_episode > state.prev_episodes:
        return "init" if state.epoch_index == 0 else "episodes"
    if np.any(state.visit_counts > 2 * state.visit_snapshot):
        return "doubling"
    return None


def should_start_new_epoch(state: EpochState, k: int) -> bool:
    return (k - state.start_episode > state.prev_episodes
            or bool(np.any(state.visit_counts > 2 * state.visit_snapshot)))


def psrl_act(state: EpochState, s: int) -> int:
    return int(state.current_policy[s])


def radius_term(n, num_states: int, num_actions: int, delta: float):
    """ln(S A n+ / delta) / n+ with n+ = max(n, 1)."""
    n_plus = np.maximum(n, 1)
    return np.log(num_states * num_actions * n_plus / delta) / n_plus


def bernstein_radius(theta_hat, n, num_states: int, num_actions: int, delta: float):
    """Per-successor half-width 4 sqrt(theta_hat * A) + 28 A of the Bernstein set."""
    term = np.asarray(radius_term(n, num_states, num_actions, delta))[..., None]
    return 4.0 * np.sqrt(np.asarray(theta_hat) * term) + 28.0 * term


def in_confidence_set(theta_row, theta_hat_row, n: int, num_states: int, num_actions: int,
                      delta: float) -> bool:
    theta_row = np.asarray(theta_row, dtype=float)
    theta_hat_row = np.asarray(theta_hat_row, dtype=float)
    radius = bernstein_radius(theta_hat_row, n, num_states, num_actions, delta)
    return bool(np.all(np.abs(theta_row - theta_hat_row) <= radius))


def empirical_kernel(transition_counts) -> tuple[np.ndarray, np.ndarray]:
    """Empirical rows n(s,a,s')/n(s,a); rows with no data are all zero."""
    counts = np.asarray(transition_counts, dtype=float)
    n = counts.sum(axis=-1)
    theta_hat = counts / np.maximum(n, 1.0)[..., None]
    return theta_hat, n


def optimistic_rows(theta_hat, radius, values_plus):
    """Minimise each row's expectation of ``values_plus`` over the box-constrained simplex.

    Every entry starts at its lower bound; the leftover mass is then poured
    into successors in increasing order of value, each up to its upper bound.
    """
    lower = np.clip(theta_hat - radius, 0.0, 1.0)
    upper = np.clip(theta_hat + radius, 0.0, 1.0)
    order = np.argsort(values_plus, kind="stable")
    lo, room = lower[..., order], upper[..., order] - lower[..., order]
    budget = 1.0 - lo.sum(axis=-1, keepdims=True)
    filled_before = np.cumsum(room, axis=-1) - room
    extra = np.clip(budget - filled_before, 0.0, room)
    rows = np.empty_like(lower)
    rows[..., order] = lo + extra
    return rows / rows.sum(axis=-1, keepdims=True)


def optimistic_value_iteration(cost, theta_hat, radius,
                               config: SolverConfig = DEFAULT_CONFIG) -> tuple[ValueSolution, np.ndarray]:
    """Extended value iteration: jointly iterate V and the optimistic kernel from V = 0."""
    cost = np.asarray(cost, dtype=float)
    S = cost.shape[0]
    values_plus = np.zeros(S + 1)
    residual = np.inf
    for it in range(1, config.max_iterations + 1):
        kernel = optimistic_rows(theta_hat, radius, values_plus)
        new = (cost + kernel @ values_plus).min(axis=1)
        residual = float(np.max(np.abs(new - values_plus[:S])))
        values_plus[:S] = new
        if new.max() > config.divergence_cap:
            raise DivergenceError(f"optimistic value exceeded {config.divergence_cap:g}")
        if residual <= config.tolerance:
            kernel = optimistic_rows(theta_hat, radius, values_plus)
            policy = np.argmin(cost + kernel @ values_plus, axis=1)
            return ValueSolution(values_plus[:S].copy(), policy, residual, it), kernel
    raise MaxIterationsError(f"extended value iteration stalled (residual {residual:.3g})", residual)


class EpochAgent:
    """Shared epoch machinery; subclasses choose the kernel to plan on.

    Call :meth:`begin_step` at the top of every time step, then :meth:`act`,
    then :meth:`observe` with the realised successor.
    """

    name = "base"

    def __init__(self, cost, prior_alpha: float, rng: np.random.Generator,
                 planner_config: SolverConfig = DEFAULT_CONFIG, strict: bool = False):
        self.cost = np.asarray(cost, dtype=float)
        self.num_states, self.num_actions = self.cost.shape
        self.belief = DirichletBelief(self.num_states, self.num_actions, prior_alpha)
        self.rng = rng
        self.planner_config = planner_config
        self.strict = strict
        self.state = EpochState.initial(self.num_states, self.num_actions)
        self.log: list[EpochRecord] = []
        self.solution: ValueSolution | None = None
        self._policy: list[int] = []
        self._doubled = False

    @property
    def num_epochs(self) -> int:
        return self.state.epoch_index

    def begin_step(self, t: int, k: int) -> None:
        st = self.state
        if k - st.start_episode > st.prev_episodes:
            self.begin_epoch(t, k, "init" if st.epoch_index == 0 else "episodes")
        elif self._doubled:
            self.begin_epoch(t, k, "doubling")
        if self.strict:
            self.check_invariants()

    def begin_epoch(self, t: int, k: int, reason: str = "manual") -> None:
        st = self.state
        closing = k - st.start_episode
        if self.log:
            self._close(closing)
        st.prev_episodes = closing
        st.epoch_index += 1
        st.start_time = t
        st.start_episode = k
        st.visit_snapshot = st.visit_counts.copy()
        self._doubled = False
        self.solution = self.plan()
        st.current_policy = self.solution.policy
        self._policy = [int(a) for a in self.solution.policy]
        self.log.append(EpochRecord(st.epoch_index, t, k, st.prev_episodes, reason,
                                    st.visit_snapshot, self.belief.transition_counts()))

    def _close(self, episodes: int) -> None:
        record = self.log[-1]
        record.episodes = episodes
        if episodes > record.prev_episodes + 1:
            raise EpochBookkeepingError(
                f"epoch {record.index} completed {episodes} episodes > {record.prev_episodes} + 1")

    def finish(self, episodes_done: int) -> None:
        """Close the last epoch once ``episodes_done`` goal visits have happened."""
        if self.log and self.log[-1].episodes is None:
            self._close(episodes_done + 1 - self.state.start_episode)

    def check_invariants(self) -> None:
        st = self.state
        if np.any(st.visit_counts > 2 * st.visit_snapshot):
            raise EpochBookkeepingError("visit count more than doubled without a new epoch")
        if np.any(st.visit_counts[st.visit_snapshot == 0] > 1):
            raise EpochBookkeepingError("unvisited pair counted twice without a new epoch")

    def act(self, s: int) -> int:
        return self._policy[s]

    def observe(self, s: int, a: int, s_next: int) -> None:
        counts = self.state.visit_counts
        n = counts[s, a] + 1
        counts[s, a] = n
        if n > 2 * self.state.visit_snapshot[s, a]:
            self._doubled = True
        self.belief.concentrations[s, a, s_next] += 1.0
        self.belief.num_updates += 1

    def plan(self) -> ValueSolution:
        raise NotImplementedError


class PsrlAgent(EpochAgent):
    """Posterior sampling: plan on one kernel drawn from the posterior per epoch."""

    name = "psrl"

    def plan(self) -> ValueSolution:
        self.sampled_kernel = self.belief.sample_kernel(self.rng)
        return value_iteration(self.cost, self.sampled_kernel, self.planner_config)


class GreedyAgent(EpochAgent):
    """Certainty equivalence: plan on the posterior mean."""

    name = "greedy"

    def plan(self) -> ValueSolution:
        return value_iteration(self.cost, self.belief.mean(), self.planner_config)


class OptimismAgent(EpochAgent):
    """Optimistic planning over the per-entry Bernstein confidence set."""

    name = "optimism"

    def __init__(self, cost, prior_alpha, rng, planner_config=DEFAULT_CONFIG, strict=False,
                 delta: float = 0.1):
        super().__init__(cost, prior_alpha, rng, planner_config, strict)
        if not 0.0 < delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {delta}")
        self.delta = delta

    def plan(self) -> ValueSolution:
        theta_hat, n = empirical_kernel(self.belief.transition_counts())
        radius = bernstein_radius(theta_hat, n, self.num_states, self.num_actions, self.delta)
        solution, self.optimistic_kernel = optimistic_value_iteration(
            self.cost, theta_hat, radius, self.planner_config)
        return solution


def make_agent(algorithm: str, cost, prior_alpha: float, rng: np.random.Generator,
               planner_config: SolverConfig = DEFAULT_CONFIG, delta: float = 0.1,
               strict: bool = False) -> EpochAgent:
    if algorithm == "psrl":
        return PsrlAgent(cost, prior_alpha, rng, planner_config, strict)
    if algorithm == "greedy":
        return GreedyAgent(cost, prior_alpha, rng, planner_config, strict)
    if algorithm == "optimism":
        return OptimismAgent(cost, prior_alpha, rng, planner_config, strict, delta=delta)
    raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


def default_delta(episodes: int) -> float:
    return 1.0 / max(episodes, 2)


def epoch_table(log: list[EpochRecord]) -> list[dict]:
    return [{"epoch": r.index, "start_time": r.start_time, "start_episode": r.start_episode,
             "prev_episodes": r.prev_episodes, "episodes": r.episodes, "reason": r.reason}
            for r in log]
