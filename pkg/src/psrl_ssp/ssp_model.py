"""SSP instances, validation, benchmark generators and the cost perturbation.

States are indexed ``0 .. S-1`` and the goal is index ``S``.  Kernels are
stored as ``(S, A, S + 1)`` arrays; the goal has no outgoing rows because an
episode ends as soon as it is reached.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

ROW_TOL = 1e-12

LEFT, RIGHT, UP, DOWN = 0, 1, 2, 3
ACTION_NAMES = ("LEFT", "RIGHT", "UP", "DOWN")


class InvalidInstanceError(ValueError):
    """Raised when an instance violates a model invariant."""


def _frozen(arr, dtype=float):
    out = np.array(arr, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class SspInstance:
    cost: np.ndarray
    kernel: np.ndarray
    initial_state: int = 0

    def __post_init__(self):
        object.__setattr__(self, "cost", _frozen(self.cost))
        object.__setattr__(self, "kernel", _frozen(self.kernel))
        object.__setattr__(self, "initial_state", int(self.initial_state))

    @property
    def num_states(self) -> int:
        return self.cost.shape[0]

    @property
    def num_actions(self) -> int:
        return self.cost.shape[1]

    @property
    def goal(self) -> int:
        return self.num_states

    def with_kernel(self, kernel) -> "SspInstance":
        return SspInstance(self.cost, kernel, self.initial_state)

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "cost": self.cost.tolist(),
            "kernel": self.kernel.tolist(),
            "initial_state": self.initial_state,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SspInstance":
        inst = cls(np.asarray(data["cost"], dtype=float),
                   np.asarray(data["kernel"], dtype=float),
                   data.get("initial_state", 0))
        if inst.num_states != data["num_states"] or inst.num_actions != data["num_actions"]:
            raise InvalidInstanceError("declared sizes do not match the cost table")
        return validate(inst)


@dataclass(frozen=True)
class ModelStats:
    """Scale constants of an instance: optimal-cost bound, optimal hitting time, minimum cost."""
    b_star: float
    t_star: float
    c_min: float


def validate(instance: SspInstance) -> SspInstance:
    """Return ``instance`` unchanged if it is well formed, otherwise raise.

    The error message names the first violated invariant and its ``(s, a)``.
    """
    cost, kernel = instance.cost, instance.kernel
    if cost.ndim != 2 or cost.shape[0] < 1 or cost.shape[1] < 1:
        raise InvalidInstanceError(f"cost table must be a non-empty S x A array, got shape {cost.shape}")
    S, A = cost.shape
    if kernel.shape != (S, A, S + 1):
        raise InvalidInstanceError(f"kernel shape {kernel.shape} != {(S, A, S + 1)}")
    if not (np.all(np.isfinite(cost)) and np.all(np.isfinite(kernel))):
        raise InvalidInstanceError("non-finite entry in cost or kernel")
    for s in range(S):
        for a in range(A):
            c = cost[s, a]
            if c < 0.0 or c > 1.0:
                raise InvalidInstanceError(f"cost range violated at (s={s}, a={a}): {c}")
            row = kernel[s, a]
            if np.any(row < 0.0):
                raise InvalidInstanceError(f"negative probability at (s={s}, a={a})")
            total = row.sum()
            if abs(total - 1.0) > ROW_TOL:
                raise InvalidInstanceError(f"row sum {total!r} != 1 at (s={s}, a={a})")
    if not 0 <= instance.initial_state < S:
        raise InvalidInstanceError(f"initial_state {instance.initial_state} outside [0, {S})")
    return instance


def random_mdp(seed: int, num_states: int = 8, num_actions: int = 2) -> SspInstance:
    """RandomMDP benchmark: flat-Dirichlet kernel rows and uniform [0, 1] costs."""
    rng = np.random.default_rng(seed)
    kernel = rng.dirichlet(np.ones(num_states + 1), size=(num_states, num_actions))
    cost = rng.random((num_states, num_actions))
    return validate(SspInstance(cost, kernel, 0))


def _grid_rows(rows, cols, success):
    success = Fraction(success)
    slip = (1 - success) / 3
    moves = {LEFT: (0, -1), RIGHT: (0, 1), UP: (-1, 0), DOWN: (1, 0)}
    n_cells = rows * cols
    table = []
    for cell in range(n_cells - 1):
        r, c = divmod(cell, cols)
        per_action = []
        for a in range(4):
            row = [Fraction(0)] * n_cells
            for d, (dr, dc) in moves.items():
                p = success if d == a else slip
                nr, nc = r + dr, c + dc
                if 0 <= nr < rows and 0 <= nc < cols:
                    row[nr * cols + nc] += p
                else:
                    row[cell] += p
            per_action.append(row)
        table.append(per_action)
    return table


def gridworld(rows: int = 3, cols: int = 4, success: float | str = "0.85") -> SspInstance:
    """GridWorld benchmark with unit costs and slippery moves.

    Cells are numbered row-major, so the bottom-right goal cell is index
    ``rows * cols - 1 == S``.  The intended move succeeds with probability
    ``success``; each other direction gets an equal share of the remainder.
    Moves that would leave the grid keep the agent in place.
    """
    table = _grid_rows(rows, cols, success)
    kernel = np.array([[[float(p) for p in row] for row in per_action] for per_action in table])
    cost = np.ones(kernel.shape[:2])
    return validate(SspInstance(cost, kernel, 0))


def perturb_costs(instance: SspInstance, epsilon: float) -> SspInstance:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    return SspInstance(np.maximum(instance.cost, epsilon), instance.kernel, instance.initial_state)


def default_epsilon(num_states: int, num_actions: int, episodes: int) -> float:
    """Cost floor ``(S^2 A / K)^(2/3)``."""
    return (num_states ** 2 * num_actions / episodes) ** (2.0 / 3.0)


def save_instance(instance: SspInstance, path) -> None:
    Path(path).write_text(json.dumps(instance.to_dict()))


def load_instance(path) -> SspInstance:
    return SspInstance.from_dict(json.loads(Path(path).read_text()))
