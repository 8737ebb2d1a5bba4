"""Episode simulation, regret traces and replicated experiments."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from bisect import bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .agents import EpochAgent, EpochRecord, default_delta, epoch_table, make_agent
from .diagnostics import (TheoryReport, coverage_counts, default_checkpoints, epoch_bound,
                          regret_slope)
from .planner import SolverConfig, solve_optimal
from .posterior import sample_dirichlet_rows
from .ssp_model import SspInstance, default_epsilon, gridworld, load_instance, perturb_costs, random_mdp

log = logging.getLogger(__name__)

RUN_HEADER = ["episode", "episode_cost", "cum_cost", "cum_opt_cost", "regret", "time_steps", "epochs"]
AGGREGATE_HEADER = ["episode", "mean_regret", "ci_low", "ci_high"]
EPOCH_HEADER = ["epoch", "start_time", "start_episode", "prev_episodes", "episodes", "reason"]
Z_95 = 1.96
MAX_AGGREGATE_ROWS = 10 ** 4
FULL_AGGREGATE_LIMIT = 10 ** 5

_run_listeners = []


def add_run_listener(fn) -> None:
    """Register ``fn(result)`` to be called with every finished :class:`RunResult`."""
    _run_listeners.append(fn)


def remove_run_listener(fn) -> None:
    _run_listeners.remove(fn)


def _notify(result) -> None:
    for fn in list(_run_listeners):
        fn(result)


class Environment:
    """Samples successors from the true kernel using a buffered uniform stream."""

    BUFFER = 4096

    def __init__(self, instance: SspInstance, rng: np.random.Generator):
        self.instance = instance
        cdf = np.cumsum(instance.kernel, axis=2)
        cdf[..., -1] = 1.0
        self._cdf = cdf.tolist()
        self.cost = instance.cost.tolist()
        self.t = 1
        self._rng = rng
        self._buf: list[float] = []
        self._pos = 0

    def sample_next(self, s: int, a: int) -> int:
        if self._pos == len(self._buf):
            self._buf = self._rng.random(self.BUFFER).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return bisect_right(self._cdf[s][a], u)


@dataclass
class EpisodeRecord:
    episode: int
    cost: float
    steps: int
    capped: bool = False


def run_episode(env: Environment, agent: EpochAgent, k: int, step_cap: int,
                step_log: list | None = None) -> EpisodeRecord:
    """Simulate episode ``k`` from the initial state until the goal or ``step_cap`` steps.

    Each step: epoch trigger check, action, transition, posterior/count update.
    ``step_log`` (optional) receives ``(t, k, s, a, cost, s_next)`` tuples.
    """
    goal = env.instance.goal
    cost = env.cost
    s = env.instance.initial_state
    total = 0.0
    steps = 0
    while s != goal:
        if steps >= step_cap:
            return EpisodeRecord(k, total, steps, capped=True)
        agent.begin_step(env.t, k)
        a = agent.act(s)
        s_next = env.sample_next(s, a)
        agent.observe(s, a, s_next)
        c = cost[s][a]
        total += c
        if step_log is not None:
            step_log.append((env.t, k, s, a, c, s_next))
        env.t += 1
        steps += 1
        s = s_next
    return EpisodeRecord(k, total, steps)


@dataclass
class RegretTrace:
    episode_cost: np.ndarray
    cum_cost: np.ndarray
    time_steps: np.ndarray
    epochs: np.ndarray
    cum_opt_cost: np.ndarray | None = None
    regret: np.ndarray | None = None
    gap_regret: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def episodes(self) -> int:
        return len(self.episode_cost)

    def rows(self):
        for k in range(self.episodes):
            yield (k + 1, float(self.episode_cost[k]), float(self.cum_cost[k]),
                   float(self.cum_opt_cost[k]), float(self.regret[k]),
                   int(self.time_steps[k]), int(self.epochs[k]))


def compute_regret(trace: RegretTrace, v_star: float) -> RegretTrace:
    """Fill ``cum_opt_cost = k V*`` and ``regret = C_k - k V*``."""
    k = np.arange(1, trace.episodes + 1, dtype=float)
    trace.cum_opt_cost = k * v_star
    trace.regret = trace.cum_cost - trace.cum_opt_cost
    return trace


@dataclass
class RunResult:
    trace: RegretTrace
    epoch_log: list[EpochRecord]
    instance: SspInstance
    v_star: float
    capped_episodes: int
    final_counts: np.ndarray | None = None

    @property
    def num_epochs(self) -> int:
        return len(self.epoch_log)

    @property
    def total_steps(self) -> int:
        return int(self.trace.time_steps[-1])

    @property
    def flagged(self) -> bool:
        return self.capped_episodes > 0


def run_agent(instance: SspInstance, agent: EpochAgent, episodes: int, env_rng: np.random.Generator,
              step_cap: int = 10 ** 6, v_star: float | None = None, step_log: list | None = None,
              notify: bool = True) -> RunResult:
    """Run ``episodes`` episodes of ``agent`` on ``instance`` and return its regret trace.

    Besides the realised regret, the trace carries ``gap_regret``: the sum of
    optimality gaps Q*(s, a) - V*(s) over visited pairs, which has the same
    expectation with far less variance.
    """
    optimal = solve_optimal(instance, agent.planner_config)
    if v_star is None:
        v_star = float(optimal.values[instance.initial_state])
    gaps = instance.cost + instance.kernel @ np.append(optimal.values, 0.0) - optimal.values[:, None]
    gap_regret = np.empty(episodes)
    env = Environment(instance, env_rng)
    episode_cost = np.empty(episodes)
    cum_cost = np.empty(episodes)
    time_steps = np.empty(episodes, dtype=np.int64)
    epochs = np.empty(episodes, dtype=np.int64)
    running = 0.0
    capped = 0
    for k in range(1, episodes + 1):
        rec = run_episode(env, agent, k, step_cap, step_log)
        if rec.capped:
            capped += 1
            log.warning("episode %d hit the step cap of %d", k, step_cap)
        running += rec.cost
        episode_cost[k - 1] = rec.cost
        cum_cost[k - 1] = running
        time_steps[k - 1] = env.t - 1
        epochs[k - 1] = agent.num_epochs
        gap_regret[k - 1] = float(np.sum(gaps * agent.state.visit_counts))
    agent.finish(episodes)
    trace = compute_regret(RegretTrace(episode_cost, cum_cost, time_steps, epochs,
                                       gap_regret=gap_regret), v_star)
    result = RunResult(trace, agent.log, instance, v_star, capped, agent.state.visit_counts.copy())
    if notify:
        _notify(result)
    return result


# experiments ----------------------------------------------------------------

ENVIRONMENTS = ("random-mdp", "gridworld")
MODES = ("frequentist", "bayesian")


@dataclass
class ExperimentConfig:
    environment: str = "gridworld"
    env_seed: int = 0
    algorithm: str = "psrl"
    episodes: int = 10_000
    replications: int = 10
    agent_seed_base: int = 0
    prior_alpha: float = 0.1
    delta: float | None = None
    cost_floor: float | str = 0.0
    mode: str = "frequentist"
    tolerance: float = 1e-10
    max_iterations: int = 10 ** 6
    step_cap: int = 10 ** 6
    output_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.episodes < 1 or self.replications < 1 or self.step_cap < 1:
            raise ValueError("episodes, replications and step_cap must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.prior_alpha > 0:
            raise ValueError("prior_alpha must be positive")
        if self.delta is not None and not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        body = {k: v for k, v in self.to_dict().items() if k not in ("output_dir", "workers")}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]

    @property
    def resolved_delta(self) -> float:
        return self.delta if self.delta is not None else default_delta(self.episodes)

    @property
    def planner(self) -> SolverConfig:
        return SolverConfig(self.tolerance, self.max_iterations)

    def agent_seeds(self) -> list[int]:
        return [self.agent_seed_base + r for r in range(self.replications)]


def base_instance(environment: str, env_seed: int = 0) -> SspInstance:
    if environment == "random-mdp":
        return random_mdp(env_seed)
    if environment == "gridworld":
        return gridworld()
    return load_instance(environment)


def resolve_cost_floor(cost_floor, instance: SspInstance, episodes: int) -> float:
    if cost_floor == "auto":
        return min(1.0, default_epsilon(instance.num_states, instance.num_actions, episodes))
    return float(cost_floor)


def replication_instance(config: ExperimentConfig, agent_seed: int) -> SspInstance:
    """The true instance of one replication, after any cost floor.

    Bayesian mode keeps the environment's costs and draws the kernel from the
    Dirichlet(prior_alpha) prior, seeded by (env_seed, agent_seed).
    """
    inst = base_instance(config.environment, config.env_seed)
    if config.mode == "bayesian":
        rng = np.random.default_rng([config.env_seed, agent_seed])
        conc = np.full(inst.kernel.shape, config.prior_alpha)
        inst = inst.with_kernel(sample_dirichlet_rows(conc, rng))
    floor = resolve_cost_floor(config.cost_floor, inst, config.episodes)
    if floor > 0:
        inst = perturb_costs(inst, floor)
    return inst


class ReplicationError(RuntimeError):
    def __init__(self, replication: int, cause: Exception):
        super().__init__(f"replication {replication} aborted: {type(cause).__name__}: {cause}")
        self.replication = replication
        self.cause = cause


def run_replication(config: ExperimentConfig, replication: int, notify: bool = True) -> RunResult:
    agent_seed = config.agent_seeds()[replication]
    try:
        instance = replication_instance(config, agent_seed)
        agent_ss, env_ss = np.random.SeedSequence(agent_seed).spawn(2)
        agent = make_agent(config.algorithm, instance.cost, config.prior_alpha,
                           np.random.default_rng(agent_ss), config.planner, config.resolved_delta)
        result = run_agent(instance, agent, config.episodes, np.random.default_rng(env_ss),
                           config.step_cap, notify=notify)
    except Exception as exc:
        raise ReplicationError(replication, exc) from exc
    result.trace.metadata = {"replication": replication, "agent_seed": agent_seed,
                             "env_seed": config.env_seed, "config_hash": config.config_hash()}
    return result


def _replication_worker(args):
    config, replication = args
    return run_replication(config, replication, notify=False)


def run_replications(config: ExperimentConfig) -> list[RunResult]:
    if config.workers > 1 and config.replications > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_replication_worker,
                                    [(config, r) for r in range(config.replications)]))
        for res in results:
            _notify(res)
        return results
    return [run_replication(config, r) for r in range(config.replications)]


@dataclass
class Aggregate:
    episodes: np.ndarray
    mean: np.ndarray
    ci_low: np.ndarray | None
    ci_high: np.ndarray | None

    def half_width(self, k: int) -> float:
        idx = int(np.searchsorted(self.episodes, k))
        if self.ci_low is None:
            return float("nan")
        return float(self.ci_high[idx] - self.mean[idx])


def aggregate(traces: list[RegretTrace]) -> Aggregate:
    """Mean regret per episode with a normal-approximation 95% band.

    Values are sorted across replications before reduction so the result is
    exactly invariant to replication order.
    """
    regrets = np.sort(np.vstack([tr.regret for tr in traces]), axis=0)
    K = regrets.shape[1]
    idx = np.arange(K)
    if K > FULL_AGGREGATE_LIMIT:
        idx = np.unique(np.linspace(0, K - 1, MAX_AGGREGATE_ROWS).round().astype(int))
    regrets = regrets[:, idx]
    mean = regrets.mean(axis=0)
    if regrets.shape[0] < 2:
        return Aggregate(idx + 1, mean, None, None)
    stderr = regrets.std(axis=0, ddof=1) / np.sqrt(regrets.shape[0])
    return Aggregate(idx + 1, mean, mean - Z_95 * stderr, mean + Z_95 * stderr)


def theory_report(results: list[RunResult], delta: float) -> TheoryReport:
    """Pool diagnostics over replications; the epoch figures are those of the tightest run."""
    worst = None
    for res in results:
        S, A = res.instance.num_states, res.instance.num_actions
        bound = epoch_bound(S, A, res.trace.episodes, res.total_steps)
        ratio = res.num_epochs / bound if bound > 0 else float("inf")
        if worst is None or ratio > worst[0]:
            worst = (ratio, res.num_epochs, bound, res.total_steps)
    covered = total = 0
    for res in results:
        c, n = coverage_counts(res.instance, np.array([r.transition_counts for r in res.epoch_log]), delta)
        covered += c
        total += n
    episodes = results[0].trace.episodes
    try:
        slope = regret_slope([r.trace for r in results], default_checkpoints(episodes))
    except ValueError:
        slope = None
    return TheoryReport(worst[1], worst[2], covered / total if total else None, 1.0 - delta,
                        slope, worst[3])


# persistence ------------------------------------------------------------------

def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_trace_csv(trace: RegretTrace, path) -> None:
    Path(path).write_text(_csv_text(RUN_HEADER, trace.rows()))


def read_trace_csv(path) -> RegretTrace:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return RegretTrace(episode_cost=data[:, 1], cum_cost=data[:, 2], time_steps=data[:, 5].astype(np.int64),
                       epochs=data[:, 6].astype(np.int64), cum_opt_cost=data[:, 3], regret=data[:, 4])


def write_aggregate_csv(agg: Aggregate, path) -> None:
    def rows():
        for i, k in enumerate(agg.episodes.tolist()):
            if agg.ci_low is None:
                yield (k, float(agg.mean[i]), "", "")
            else:
                yield (k, float(agg.mean[i]), float(agg.ci_low[i]), float(agg.ci_high[i]))
    Path(path).write_text(_csv_text(AGGREGATE_HEADER, rows()))


def write_epoch_csv(epoch_log: list[EpochRecord], path) -> None:
    rows = ([r[h] for h in EPOCH_HEADER] for r in epoch_table(epoch_log))
    Path(path).write_text(_csv_text(EPOCH_HEADER, rows))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list[RunResult]
    aggregate: Aggregate
    report: TheoryReport

    def final_regrets(self) -> np.ndarray:
        return np.array([r.trace.regret[-1] for r in self.runs])


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run all replications, aggregate them and, if ``output_dir`` is set, write every artifact."""
    runs = run_replications(config)
    agg = aggregate([r.trace for r in runs])
    report = theory_report(runs, config.resolved_delta)
    result = ExperimentResult(config, runs, agg, report)
    if config.output_dir is not None:
        write_experiment(result, Path(config.output_dir))
    return result


def write_experiment(result: ExperimentResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for r, run in enumerate(result.runs):
        write_trace_csv(run.trace, out / f"run_{r:03d}.csv")
        write_epoch_csv(run.epoch_log, out / f"epochs_{r:03d}.csv")
        np.savez_compressed(out / f"counts_{r:03d}.npz",
                            transition_counts=np.array([e.transition_counts for e in run.epoch_log]))
        (out / f"instance_{r:03d}.json").write_text(json.dumps(run.instance.to_dict()))
        manifest.append({**run.trace.metadata, "v_star": run.v_star, "epochs": run.num_epochs,
                         "time_steps": run.total_steps, "capped_episodes": run.capped_episodes,
                         "flagged": run.flagged})
    write_aggregate_csv(result.aggregate, out / "aggregate.csv")
    (out / "config.json").write_text(json.dumps(result.config.to_dict(), indent=2, sort_keys=True))
    (out / "runs.json").write_text(json.dumps(manifest, indent=2))
    (out / "theory_report.json").write_text(json.dumps(result.report.to_dict(), indent=2))


def diagnose_directory(directory, delta: float | None = None) -> TheoryReport:
    """Recompute the theory report from the files written by :func:`write_experiment`."""
    directory = Path(directory)
    config = ExperimentConfig.from_dict(json.loads((directory / "config.json").read_text()))
    delta = delta if delta is not None else config.resolved_delta
    traces, worst = [], None
    covered = total = 0
    for path in sorted(directory.glob("run_*.csv")):
        tag = path.stem.split("_")[1]
        trace = read_trace_csv(path)
        traces.append(trace)
        inst = load_instance(directory / f"instance_{tag}.json")
        counts = np.load(directory / f"counts_{tag}.npz")["transition_counts"]
        L, T = int(trace.epochs[-1]), int(trace.time_steps[-1])
        bound = epoch_bound(inst.num_states, inst.num_actions, trace.episodes, T)
        if worst is None or L / bound > worst[0]:
            worst = (L / bound, L, bound, T)
        c, n = coverage_counts(inst, counts, delta)
        covered += c
        total += n
    if not traces:
        raise FileNotFoundError(f"no run_*.csv files in {directory}")
    try:
        slope = regret_slope(traces, default_checkpoints(traces[0].episodes))
    except ValueError:
        slope = None
    return TheoryReport(worst[1], worst[2], covered / total if total else None, 1.0 - delta, slope, worst[3])
