"""Posterior sampling for online learning in stochastic shortest path problems."""

from .agents import GreedyAgent, OptimismAgent, PsrlAgent, make_agent
from .harness import ExperimentConfig, run_agent, run_experiment
from .planner import SolverConfig, evaluate_policy, solve_optimal
from .posterior import DirichletBelief, new_belief
from .ssp_model import SspInstance, gridworld, perturb_costs, random_mdp, validate

__version__ = "0.1.0"
