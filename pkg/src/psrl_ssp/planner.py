"""Value iteration for the SSP Bellman optimality equations, and exact policy evaluation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ssp_model import ModelStats, SspInstance


class PlannerError(RuntimeError):
    kind = "planner"


class DivergenceError(PlannerError):
    kind = "divergence"


class MaxIterationsError(PlannerError):
    kind = "max-iterations"

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class ImproperPolicyError(PlannerError):
    kind = "improper-policy"


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-10
    max_iterations: int = 10 ** 6
    divergence_cap: float = 1e9

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.divergence_cap > 0:
            raise ValueError("divergence_cap must be positive")


@dataclass(frozen=True)
class ValueSolution:
    values: np.ndarray
    policy: np.ndarray
    residual: float
    iterations: int

    def to_dict(self) -> dict:
        return {
            "values": self.values.tolist(),
            "policy": self.policy.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
        }


DEFAULT_CONFIG = SolverConfig()


def bellman_q(cost, kernel, values):
    """Q(s, a) = c(s, a) + sum over non-goal s' of kernel(s'|s, a) V(s')."""
    S = cost.shape[0]
    return cost + np.asarray(kernel)[:, :, :S] @ values


def bellman_iterates(cost, kernel):
    """Yield V_1, V_2, ... with V_0 = 0 and V_{n+1}(s) = min_a Q_n(s, a)."""
    cost = np.asarray(cost, dtype=float)
    sub = np.ascontiguousarray(np.asarray(kernel, dtype=float)[:, :, : cost.shape[0]])
    values = np.zeros(cost.shape[0])
    while True:
        values = (cost + sub @ values).min(axis=1)
        yield values


def value_iteration(cost, kernel, config: SolverConfig = DEFAULT_CONFIG) -> ValueSolution:
    """Iterate the Bellman operator from V = 0 until the sup-norm residual is below tolerance.

    ``np.argmin`` returns the first minimiser, so ties go to the smallest action index.
    """
    cost = np.asarray(cost, dtype=float)
    previous = np.zeros(cost.shape[0])
    residual = np.inf
    for it, values in enumerate(bellman_iterates(cost, kernel), start=1):
        residual = float(np.max(np.abs(values - previous)))
        previous = values
        if values.max() > config.divergence_cap:
            raise DivergenceError(
                f"value {values.max():.3g} exceeded divergence cap {config.divergence_cap:g} "
                f"after {it} iterations (improper model or zero-cost cycle)")
        if residual <= config.tolerance:
            policy = np.argmin(bellman_q(cost, kernel, values), axis=1)
            return ValueSolution(values, policy, residual, it)
        if it >= config.max_iterations:
            break
    raise MaxIterationsError(
        f"no convergence in {config.max_iterations} iterations (residual {residual:.3g})", residual)


def solve_optimal(instance: SspInstance, config: SolverConfig = DEFAULT_CONFIG) -> ValueSolution:
    return value_iteration(instance.cost, instance.kernel, config)


def _reaches_goal(sub_kernel, goal_mass):
    """States from which the goal is reachable with positive probability in the policy's chain."""
    reach = goal_mass > 0
    while True:
        grown = reach | ((sub_kernel[:, reach] > 0).any(axis=1))
        if grown.sum() == reach.sum():
            return reach
        reach = grown


def evaluate_policy(instance: SspInstance, policy, divergence_cap: float = 1e9) -> np.ndarray:
    """Exact value of a stationary policy from the linear system (I - P_pi) v = c_pi."""
    policy = np.asarray(policy, dtype=int)
    S, A = instance.num_states, instance.num_actions
    if policy.shape != (S,) or policy.min() < 0 or policy.max() >= A:
        raise ValueError(f"policy must be a length-{S} vector of actions in [0, {A})")
    rows = instance.kernel[np.arange(S), policy]
    sub, goal_mass = rows[:, :S], rows[:, S]
    c = instance.cost[np.arange(S), policy]
    if not _reaches_goal(sub, goal_mass).all():
        raise ImproperPolicyError("policy never reaches the goal from some state")
    try:
        v = np.linalg.solve(np.eye(S) - sub, c)
    except np.linalg.LinAlgError as exc:
        raise ImproperPolicyError(f"singular policy system: {exc}") from exc
    if not np.all(np.isfinite(v)) or v.min() < -1e-9 or v.max() > divergence_cap:
        raise ImproperPolicyError("policy system gave a negative, infinite or capped value")
    return np.maximum(v, 0.0)


def model_stats(instance: SspInstance, config: SolverConfig = DEFAULT_CONFIG) -> ModelStats:
    sol = solve_optimal(instance, config)
    unit = SspInstance(np.ones_like(instance.cost), instance.kernel, instance.initial_state)
    hitting = evaluate_policy(unit, sol.policy, divergence_cap=np.inf)
    return ModelStats(float(sol.values.max()), float(hitting.max()), float(instance.cost.min()))
