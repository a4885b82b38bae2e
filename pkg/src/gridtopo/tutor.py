"""Rule-based greedy agents and imitation-experience recording.

The agent acts by priority: reconnect a cooled-down line, revert a
changed substation when the grid is calm, do nothing while stress is
below threshold, otherwise scan its action sets in order and execute the
first set's winner that improves on the current stress level.

Observations are filtered into a fixed-length vector (time fields,
injections, line electricals, capacity ratios, statuses, topology,
cooldowns, maintenance) whose length depends only on grid dimensions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .action_space import ActionSet, LineAction, TopologyAction, is_applied
from .environment import GridEnv, Observation
from .grid_core import GridModel

RHO_TUTOR = 0.9
RHO_REVERSION = 0.8


@dataclass
class TutorConfig:
    rho_tutor: float = RHO_TUTOR
    rho_rev: float = RHO_REVERSION
    priority_sets: list[ActionSet] = field(default_factory=list)
    reversion_enabled: bool = False
    n1_enabled: bool = False  # marks priority_sets[0] as the N-1 mined set

    def __post_init__(self):
        if not (0.0 < self.rho_rev < self.rho_tutor):
            raise ValueError("rho_rev must lie strictly below rho_tutor")


def filter_observation(obs: Observation) -> np.ndarray:
    """Flatten the observation into the agents' fixed-length input vector."""
    return np.concatenate(obs.vector_parts())


def filtered_length(grid: GridModel) -> int:
    """Vector length from grid dimensions alone: 5 time fields, three
    values per injection, fourteen per line, one per slot, one per
    substation."""
    return (5 + 3 * grid.n_gen + 3 * grid.n_load + 14 * grid.n_line
            + grid.n_slots + grid.n_sub)


class DoNothingAgent:
    """Baseline that never acts; anchors the benchmark score at zero."""

    def act(self, obs: Observation):
        return None, {"kind": "do-nothing", "simulate_calls": 0}

    def episode_start(self):
        pass


class Tutor:
    """Greedy rule-based agent over frequency-mined priority action sets."""

    def __init__(self, grid: GridModel, config: TutorConfig):
        self.grid = grid
        self.config = config
        self._sims = 0

    def episode_start(self):
        pass

    # -- decision rules --------------------------------------------------

    def act(self, obs: Observation):
        self._sims = 0

        action = self._reconnection(obs)
        if action is not None:
            return action, {"kind": "reconnect", "simulate_calls": self._sims}

        if (self.config.reversion_enabled and obs.rho_max < self.config.rho_rev
                and np.any(obs.topo_vect != 1)):
            action = self.reversion_candidate(obs)
            if action is not None:
                return action, {"kind": "reversion", "simulate_calls": self._sims}

        if obs.rho_max < self.config.rho_tutor:
            return None, {"kind": "do-nothing", "simulate_calls": self._sims}

        for set_index, action_set in enumerate(self.config.priority_sets):
            best, best_rho = None, np.inf
            for a in action_set:
                if not self._legal(obs, a):
                    continue
                rho_hat = self._simulate(obs, a)
                if rho_hat < best_rho:
                    best, best_rho = a, rho_hat
            if best is not None and best_rho < obs.rho_max:
                return best, {"kind": "topology", "set": set_index,
                              "simulate_calls": self._sims}
        return None, {"kind": "do-nothing", "simulate_calls": self._sims}

    def reversion_candidate(self, obs: Observation) -> TopologyAction | None:
        """Best single-substation reversion, if it simulates no worse
        than doing nothing."""
        grid = self.grid
        candidates = []
        for sub in range(grid.n_sub):
            if obs.time_before_cooldown_sub[sub] > 0:
                continue
            start = grid.sub_slot_start[sub]
            config = obs.topo_vect[start:start + grid.sub_n_slots[sub]]
            if np.any(config != 1):
                candidates.append(TopologyAction(sub, (1,) * len(config)))
        if not candidates:
            return None
        dn_rho = self._simulate(obs, None)
        best, best_rho = None, np.inf
        for a in candidates:
            rho_hat = self._simulate(obs, a)
            if rho_hat < best_rho:
                best, best_rho = a, rho_hat
        if best is not None and best_rho <= dn_rho:
            return best
        return None

    # -- helpers ----------------------------------------------------------

    def _reconnection(self, obs: Observation) -> LineAction | None:
        legal = [l for l in range(self.grid.n_line)
                 if not obs.line_status[l] and obs.time_before_cooldown_line[l] == 0]
        if not legal:
            return None
        best, best_rho = legal[0], np.inf
        for l in legal:
            rho_hat = self._simulate(obs, LineAction(l, "connect"))
            if rho_hat < best_rho:
                best, best_rho = l, rho_hat
        return LineAction(best, "connect")

    def _legal(self, obs: Observation, action) -> bool:
        if isinstance(action, TopologyAction):
            return (obs.time_before_cooldown_sub[action.substation] == 0
                    and not is_applied(self.grid, obs.topo_vect, action))
        if isinstance(action, LineAction):
            return obs.time_before_cooldown_line[action.line] == 0
        return True

    def _simulate(self, obs: Observation, action) -> float:
        self._sims += 1
        _, rho_hat_max = obs.simulate(action)
        return rho_hat_max

    @property
    def action_list(self):
        """Concatenated priority sets; index space of recorded experience."""
        return [a for action_set in self.config.priority_sets for a in action_set]


@dataclass
class ExperienceDataset:
    """Filtered observation vectors with chosen-action indices."""

    vectors: np.ndarray
    labels: np.ndarray
    manifest: dict

    def __len__(self):
        return len(self.labels)

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        np.savetxt(directory / "vectors.csv", self.vectors, delimiter=",", fmt="%.12g")
        np.savetxt(directory / "labels.csv", self.labels, delimiter=",", fmt="%d")
        with open(directory / "manifest.json", "w") as fh:
            json.dump(self.manifest, fh, indent=1)

    @classmethod
    def load(cls, directory) -> "ExperienceDataset":
        directory = Path(directory)
        vectors = np.loadtxt(directory / "vectors.csv", delimiter=",", ndmin=2)
        labels = np.loadtxt(directory / "labels.csv", delimiter=",", dtype=np.int64,
                            ndmin=1)
        with open(directory / "manifest.json") as fh:
            manifest = json.load(fh)
        return cls(vectors, labels, manifest)


def run_and_record(env: GridEnv, tutor: Tutor, scenarios, seeds) -> ExperienceDataset:
    """Collect (filtered observation, action index) pairs from tutor runs.

    Only priority-set decisions are recorded; reconnections, reversions
    and do-nothing steps leave no experience.  Deterministic per seed.
    """
    action_list = tutor.action_list
    index_of = {a.key(): i for i, a in enumerate(action_list)}
    vectors, labels = [], []
    for scenario in scenarios:
        for seed in seeds:
            obs = env.reset(seed=seed, scenario=scenario)
            tutor.episode_start()
            while not env.done:
                action, meta = tutor.act(obs)
                if meta["kind"] == "topology":
                    vectors.append(filter_observation(obs))
                    labels.append(index_of[action.key()])
                obs = env.step(action).observation
    dim = filtered_length(env.grid)
    vectors = np.array(vectors, dtype=np.float64).reshape(-1, dim)
    manifest = {
        "grid": env.grid.fingerprint(),
        "vector_length": dim,
        "actions": [a.to_dict() for a in action_list],
        "scenarios": [s.name for s in scenarios],
        "seeds": list(map(int, seeds)),
    }
    return ExperienceDataset(vectors, np.array(labels, dtype=np.int64), manifest)
