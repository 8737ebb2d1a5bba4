"""Checks of the algorithm's verifiable guarantees on recorded runs."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .agents import EpochRecord, bernstein_radius, empirical_kernel
from .ssp_model import SspInstance


@dataclass
class TheoryReport:
    epochs_observed: int
    epoch_bound: float
    coverage_rate: float | None
    coverage_target: float
    regret_slope: float | None
    time_steps: int

    def to_dict(self) -> dict:
        return asdict(self)


def epoch_bound(num_states: int, num_actions: int, episodes: int, time_steps: int) -> float:
    """sqrt(2 S A K ln T) + S A ln T."""
    log_t = math.log(time_steps)
    sa = num_states * num_actions
    return math.sqrt(2.0 * sa * episodes * log_t) + sa * log_t


def epoch_bound_check(num_epochs: int, num_states: int, num_actions: int, episodes: int,
                      time_steps: int) -> tuple[float, bool]:
    if time_steps < 1 or episodes < 1:
        raise ValueError("time_steps and episodes must be >= 1")
    bound = epoch_bound(num_states, num_actions, episodes, time_steps)
    return bound, num_epochs <= bound


def coverage_counts(instance: SspInstance, transition_counts, delta: float) -> tuple[int, int]:
    """(covered, total) over every epoch-start (s, a) row.

    ``transition_counts`` has shape ``(L, S, A, S + 1)``: the counts
    n(s, a, s') frozen at the start of each of the L epochs.
    """
    counts = np.asarray(transition_counts, dtype=float)
    S, A = instance.num_states, instance.num_actions
    theta_hat, n = empirical_kernel(counts)
    radius = bernstein_radius(theta_hat, n, S, A, delta)
    inside = np.all(np.abs(instance.kernel[None] - theta_hat) <= radius, axis=-1)
    return int(inside.sum()), int(inside.size)


def coverage_check(instance: SspInstance, epoch_log, delta: float) -> float:
    """Fraction of epoch-start rows whose true transition row lies in the Bernstein set.

    ``epoch_log`` is a list of :class:`EpochRecord` or an array of count snapshots.
    """
    if len(epoch_log) and isinstance(epoch_log[0], EpochRecord):
        epoch_log = [r.transition_counts for r in epoch_log]
    covered, total = coverage_counts(instance, epoch_log, delta)
    if total == 0:
        raise ValueError("empty epoch log")
    return covered / total


def regret_slope(traces, checkpoints) -> float:
    """Least-squares slope of ln(mean regret) against ln K.

    ``traces`` are per-run regret sequences indexed by episode (entry k-1 is
    R_k) or objects with a ``regret`` attribute.  Checkpoints whose mean
    regret is not positive are dropped.
    """
    regrets = [np.asarray(getattr(tr, "regret", tr), dtype=float) for tr in traces]
    xs, ys = [], []
    for k in checkpoints:
        mean = float(np.mean([r[k - 1] for r in regrets]))
        if mean > 0:
            xs.append(math.log(k))
            ys.append(math.log(mean))
    if len(xs) < 3:
        raise ValueError(f"need >= 3 checkpoints with positive mean regret, have {len(xs)}")
    slope, _ = np.polyfit(xs, ys, 1)
    return float(slope)


def default_checkpoints(episodes: int) -> list[int]:
    return sorted({max(1, episodes // 16), max(1, episodes // 4), episodes})


def epoch_log_violations(epoch_log: list[EpochRecord], final_counts) -> list[str]:
    """Audit a finished run's epoch log; returns human-readable violations (empty if clean).

    Checks K_l <= K_{l-1} + 1 for every closed epoch and that, within each
    epoch, visit counts never exceeded twice the epoch-start snapshot before
    the step that triggered the next epoch.  Since one step raises one count
    by one, the counts at the next epoch start (or at the end of the run) may
    exceed ``2 * snapshot`` by at most one, on at most one pair.
    """
    problems = []
    for rec in epoch_log:
        if rec.episodes is not None and rec.episodes > rec.prev_episodes + 1:
            problems.append(f"epoch {rec.index}: K={rec.episodes} > K_prev+1={rec.prev_episodes + 1}")
    ends = [r.visit_snapshot for r in epoch_log[1:]] + [np.asarray(final_counts)]
    for rec, end in zip(epoch_log, ends):
        excess = end - 2 * rec.visit_snapshot
        if excess.max(initial=0) > 1 or np.count_nonzero(excess > 0) > 1:
            problems.append(f"epoch {rec.index}: visit counts more than doubled before a new epoch")
    return problems
