"""Action miners: brute-force greedy, adversarial-outage, and N-1 search.

The miners play scenarios with do-nothing until grid stress crosses the
mining threshold, then score every candidate action with the one-step
simulation and execute the winner.  Mined choices are aggregated by
frequency into the priority action sets consumed by the rule-based
agents.

The N-1 search scores a candidate by its worst simulated outcome over a
subset of single-line outages: for action i and outage l the combined
hypothetical is simulated and the maximum capacity ratio over all lines
recorded; the score of i is the maximum over l, lower is safer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .action_space import (Action, ActionSet, CombinedAction, LineAction,
                           TopologyAction, action_from_dict, is_applied)
from .environment import GridEnv, Scenario

RHO_TEACHER = 0.925

ORIGIN_NORMAL = "normal-teacher"
ORIGIN_ADVERSARIAL = "adversarial-teacher"
ORIGIN_N1 = "n1-teacher"


class EmptyRecords(ValueError):
    """reduce_actions received no mining records."""


@dataclass(frozen=True)
class MiningRecord:
    scenario: str
    step: int
    trigger_rho_max: float
    action: Action
    achieved_rho_hat_max: float
    origin: str

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "step": self.step,
                "trigger": self.trigger_rho_max, "action": self.action.to_dict(),
                "achieved": self.achieved_rho_hat_max, "origin": self.origin}

    @classmethod
    def from_dict(cls, doc: dict) -> "MiningRecord":
        return cls(doc["scenario"], int(doc["step"]), float(doc["trigger"]),
                   action_from_dict(doc["action"]), float(doc["achieved"]),
                   doc["origin"])


def save_records(records, path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict()) + "\n")


def load_records(path) -> list[MiningRecord]:
    with open(path) as fh:
        return [MiningRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


@dataclass
class N1Config:
    """Outage subset and candidate pool of the N-1 search."""

    lines: list[int]
    pool: list[Action | None]

    def __post_init__(self):
        if not self.lines:
            raise ValueError("the outage subset must be non-empty")


def _best_by_simulation(env: GridEnv, obs, pool) -> tuple[int, float]:
    """Greedy scan: argmin of simulated rho_hat_max over legal pool actions.

    Cooled-down and already-applied candidates are skipped; ties break to
    the lowest pool index.  Returns (-1, inf) when nothing is simulable.
    """
    best, best_rho = -1, math.inf
    for i, action in enumerate(pool):
        if isinstance(action, TopologyAction):
            if obs.time_before_cooldown_sub[action.substation] > 0 \
                    or is_applied(env.grid, obs.topo_vect, action):
                continue
        _, rho_hat = env.simulate(action)
        if rho_hat < best_rho:
            best, best_rho = i, rho_hat
    return best, best_rho


def mine_greedy(env: GridEnv, scenarios, pool, rho_teacher: float = RHO_TEACHER,
                seed: int = 0, origin: str = ORIGIN_NORMAL) -> list[MiningRecord]:
    """Brute-force mining: at stressed steps execute the best simulated action.

    A choice is recorded only when it beats do-nothing in simulation;
    episode failures end the scenario and mining moves on.
    """
    records = []
    for scenario in scenarios:
        obs = env.reset(seed=seed, scenario=scenario)
        while not env.done:
            action = None
            if obs.rho_max > rho_teacher:
                _, dn_rho = env.simulate(None)
                idx, best_rho = _best_by_simulation(env, obs, pool)
                if idx >= 0 and best_rho < dn_rho:
                    action = pool[idx]
                    records.append(MiningRecord(scenario.name, env.t, obs.rho_max,
                                                action, best_rho, origin))
            result = env.step(action)
            obs = result.observation
    return records


def mine_adversarial(env: GridEnv, scenarios, pool, target_lines,
                     rho_teacher: float = RHO_TEACHER, outage_every: int = 24,
                     seed: int = 0) -> list[MiningRecord]:
    """Greedy mining under periodically forced outages of the target lines.

    Every ``outage_every`` steps the next target line (round robin) is
    forcefully disconnected before the trigger check, exposing the miner
    to post-contingency states.
    """
    if not target_lines:
        raise ValueError("adversarial mining needs target lines")
    records = []
    for s_idx, scenario in enumerate(scenarios):
        obs = env.reset(seed=seed, scenario=scenario)
        cursor = s_idx  # stagger the rotation across scenarios
        while not env.done:
            if env.t > 0 and env.t % outage_every == 0:
                line = target_lines[cursor % len(target_lines)]
                cursor += 1
                if env.topo.line_connected[line]:
                    obs = env.force_outage(line)
                    if obs is None:
                        break
            action = None
            if obs.rho_max > rho_teacher:
                _, dn_rho = env.simulate(None)
                idx, best_rho = _best_by_simulation(env, obs, pool)
                if idx >= 0 and best_rho < dn_rho:
                    action = pool[idx]
                    records.append(MiningRecord(scenario.name, env.t, obs.rho_max,
                                                action, best_rho, ORIGIN_ADVERSARIAL))
            result = env.step(action)
            obs = result.observation
    return records


def mine_n1(env: GridEnv, n1: N1Config) -> list[tuple[Action | None, float]]:
    """Worst-case outage screening of the candidate pool at the current state.

    For every candidate the combined (candidate AND single-line outage)
    hypothetical is simulated for each outage in the subset; the score is
    the worst resulting maximum capacity ratio.  Returns the full
    (candidate, score) table sorted ascending, ties to the lower pool
    index.  Infeasible simulations score +inf.
    """
    scored = []
    for i, action in enumerate(n1.pool):
        if isinstance(action, LineAction):
            raise TypeError("N-1 screening expects topology candidates")
        worst = 0.0
        for line in n1.lines:
            _, rho_hat = env.simulate(CombinedAction(action, LineAction(line, "disconnect")))
            worst = max(worst, rho_hat)
            if worst == math.inf:
                break
        scored.append((i, action, worst))
    scored.sort(key=lambda r: (r[2], r[0]))
    return [(action, score) for _, action, score in scored]


def mine_n1_offline(env: GridEnv, scenarios, pool, outage_lines,
                    rho_teacher: float = RHO_TEACHER, outage_every: int | None = None,
                    drive: str = "n1", seed: int = 0) -> list[MiningRecord]:
    """N-1 teacher: record each triggered state's safest candidate.

    At every state above the mining threshold the whole pool is screened
    and the top candidate recorded when it beats do-nothing's own N-1
    score.  ``drive`` picks the survey policy keeping the episode alive:
    "n1" (default) executes the robust pick, "greedy" the plain greedy
    pick, and "crisis" holds do-nothing until an actual overflow so the
    deep-stress band gets screened before the greedy pick rescues the
    episode.  With ``outage_every`` set, target lines are periodically
    forced out as in adversarial mining.
    """
    if drive not in ("n1", "greedy", "crisis"):
        raise ValueError(f"unknown drive policy {drive!r}")
    records = []
    for s_idx, scenario in enumerate(scenarios):
        obs = env.reset(seed=seed, scenario=scenario)
        cursor = s_idx
        while not env.done:
            if outage_every and env.t > 0 and env.t % outage_every == 0:
                line = outage_lines[cursor % len(outage_lines)]
                cursor += 1
                if env.topo.line_connected[line]:
                    obs = env.force_outage(line)
                    if obs is None:
                        break
            action = None
            if obs.rho_max > rho_teacher:
                legal = [a for a in pool
                         if obs.time_before_cooldown_sub[a.substation] == 0
                         and not is_applied(env.grid, obs.topo_vect, a)]
                ranked = mine_n1(env, N1Config(list(outage_lines), [None] + legal))
                dn_score = next(s for a, s in ranked if a is None)
                best, best_score = next(((a, s) for a, s in ranked if a is not None),
                                        (None, math.inf))
                recorded = False
                if best is not None and best_score < dn_score:
                    # beat do-nothing on both the worst-outage score and the
                    # plain lookahead, so marginal screens leave no record
                    _, dn_rho = env.simulate(None)
                    _, best_plain = env.simulate(best)
                    if best_plain < dn_rho:
                        recorded = True
                        records.append(MiningRecord(scenario.name, env.t, obs.rho_max,
                                                    best, best_score, ORIGIN_N1))
                if drive == "n1":
                    if recorded:
                        action = best
                elif drive == "greedy" or obs.rho_max > 1.0:
                    _, dn_rho = env.simulate(None)
                    idx, best_rho = _best_by_simulation(env, obs, legal)
                    if idx >= 0 and best_rho < dn_rho:
                        action = legal[idx]
            result = env.step(action)
            obs = result.observation
    return records


def reduce_actions(records, k: int) -> ActionSet:
    """Top-k distinct mined actions by occurrence count.

    Count descending; ties resolve to the earlier first occurrence.
    Metadata carries the count and the origin of the first record.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    records = list(records)
    if not records:
        raise EmptyRecords("no mining records to reduce")
    stats: dict = {}
    for pos, record in enumerate(records):
        key = record.action.key()
        if key not in stats:
            stats[key] = [0, pos, record.action, record.origin]
        stats[key][0] += 1
    ranked = sorted(stats.values(), key=lambda s: (-s[0], s[1]))[:k]
    return ActionSet([r[2] for r in ranked],
                     [{"origin": r[3], "count": r[0]} for r in ranked])
