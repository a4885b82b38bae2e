"""Hybrid agent: heuristics plus policy-ranked topology search.

Reconnection, reversion and the do-nothing threshold behave exactly as
in the rule-based tutor.  When the grid is stressed the trained network
ranks the action list by probability and candidates are simulated in
that order; the first one keeping every line below capacity is executed.
If none qualifies the best simulated candidate is used, so the agent
still responds in emergencies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .action_space import Action
from .environment import Observation
from .grid_core import GridModel
from .junior import JuniorModel, predict_proba
from .tutor import RHO_REVERSION, Tutor, TutorConfig, filter_observation

RHO_SENIOR = 0.9


class ModelMissing(ValueError):
    """The senior agent needs a trained network to rank actions."""


@dataclass
class SeniorConfig:
    rho_senior: float = RHO_SENIOR
    rho_rev: float = RHO_REVERSION
    max_candidates: int | None = None  # cap on ranked candidates simulated
    reversion_enabled: bool = True

    def __post_init__(self):
        if not (0.0 < self.rho_senior <= 1.0):
            raise ValueError("rho_senior must lie in (0, 1]")


class Senior:
    """Policy-ranked hybrid agent over the concatenated action list."""

    def __init__(self, grid: GridModel, model: JuniorModel | None,
                 action_list: list[Action], config: SeniorConfig | None = None):
        if model is None:
            raise ModelMissing("no trained network supplied")
        if model.spec.output_dim != len(action_list):
            raise ValueError("network output size does not match the action list")
        self.grid = grid
        self.model = model
        self.action_list = list(action_list)
        self.config = config or SeniorConfig()
        # reuse the tutor's heuristic rules (reconnect / revert / legality)
        self._rules = Tutor(grid, TutorConfig(
            rho_tutor=self.config.rho_senior, rho_rev=self.config.rho_rev,
            priority_sets=[], reversion_enabled=self.config.reversion_enabled))

    def episode_start(self):
        pass

    def act(self, obs: Observation):
        rules = self._rules
        rules._sims = 0

        action = rules._reconnection(obs)
        if action is not None:
            return action, {"kind": "reconnect", "simulate_calls": rules._sims}

        if (self.config.reversion_enabled and obs.rho_max < self.config.rho_rev
                and np.any(obs.topo_vect != 1)):
            action = rules.reversion_candidate(obs)
            if action is not None:
                return action, {"kind": "reversion", "simulate_calls": rules._sims}

        if obs.rho_max < self.config.rho_senior:
            return None, {"kind": "do-nothing", "simulate_calls": rules._sims}

        probabilities = predict_proba(self.model, filter_observation(obs))
        order = np.lexsort((np.arange(len(probabilities)), -probabilities))
        cap = self.config.max_candidates or len(order)

        best, best_rho = None, np.inf
        simulated = 0
        for idx in order:
            if simulated >= cap:
                break
            candidate = self.action_list[idx]
            if not rules._legal(obs, candidate):
                continue
            rho_hat = rules._simulate(obs, candidate)
            simulated += 1
            if rho_hat < 1.0:
                return candidate, {"kind": "topology", "rank": int(simulated),
                                   "simulate_calls": rules._sims}
            if rho_hat < best_rho:
                best, best_rho = candidate, rho_hat
        if best is not None and best_rho < np.inf:
            return best, {"kind": "topology", "rank": -1,
                          "simulate_calls": rules._sims}
        return None, {"kind": "do-nothing", "simulate_calls": rules._sims}
