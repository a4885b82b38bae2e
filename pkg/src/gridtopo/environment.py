"""Scenario-driven grid MDP with robustness-track game rules.

One step is five simulated minutes.  Rule order inside ``step``:
legality, action application, opponent attack, maintenance outages,
chronics advance + power flow, overflow bookkeeping, cascade, and
termination.  ``simulate`` is the agents' one-step lookahead: it uses
the forecast injections for the next step and never touches state.

Cooldown convention: a counter set to K at step t blocks the target for
steps t+1 .. t+K-1 and re-legalizes it at t+K.  Agent actions carry
K=3, forced disconnections (overflow, maintenance, post-attack) K=10.
"""

from __future__ import annotations

import csv
import json
import math
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .action_space import (Action, CombinedAction, LineAction, TopologyAction,
                           apply_topology_action)
from .grid_core import (GridModel, InjectionSnapshot, TopologyVector,
                        build_electrical_graph, elements_islanded,
                        solve_dc_power_flow)

AGENT_COOLDOWN = 3
FORCED_COOLDOWN = 10
OVERFLOW_STEPS_TO_TRIP = 3
HARD_OVERFLOW_RHO = 2.0  # instant disconnection threshold
STEP_MINUTES = 5

REASON_NONE = 0
REASON_AGENT = 1
REASON_OVERFLOW = 2
REASON_OPPONENT = 3
REASON_MAINTENANCE = 4


class StepAfterDone(RuntimeError):
    """step() was called on a finished episode."""


@dataclass
class Scenario:
    """Chronics playback data for one episode.

    ``gen_p``/``load_p`` have ``horizon + 1`` rows: row 0 initializes the
    grid, row k is consumed by step k.  Forecast rows back ``simulate``;
    with zero forecast noise they equal the chronics.
    """

    name: str
    gen_p: np.ndarray
    load_p: np.ndarray
    horizon: int
    maintenance: list[tuple[int, int, int]] = field(default_factory=list)  # (line, start, duration)
    forecast_gen_p: np.ndarray | None = None
    forecast_load_p: np.ndarray | None = None
    start: datetime = datetime(2026, 1, 5)

    def __post_init__(self):
        self.gen_p = np.asarray(self.gen_p, dtype=np.float64)
        self.load_p = np.asarray(self.load_p, dtype=np.float64)
        if self.gen_p.shape[0] < self.horizon + 1 or self.load_p.shape[0] < self.horizon + 1:
            raise ValueError("chronics must provide horizon + 1 rows")
        if np.any(self.load_p < 0):
            raise ValueError("loads must be non-negative")
        for line, start, dur in self.maintenance:
            if not (0 <= start < self.horizon and dur >= 1):
                raise ValueError("maintenance window outside the episode")
        if self.forecast_gen_p is None:
            self.forecast_gen_p = self.gen_p
        if self.forecast_load_p is None:
            self.forecast_load_p = self.load_p

    def injections(self, t: int) -> InjectionSnapshot:
        return InjectionSnapshot(self.gen_p[t], self.load_p[t])

    def forecast(self, t: int) -> InjectionSnapshot:
        return InjectionSnapshot(self.forecast_gen_p[t], self.forecast_load_p[t])

    def timestamp(self, t: int) -> datetime:
        return self.start + timedelta(minutes=STEP_MINUTES * t)


@dataclass
class OpponentConfig:
    """Quasi-random line attacker restricted to a fixed target set."""

    target_lines: list[int]
    attack_duration: int = 48
    attack_cooldown: int = 144
    attack_probability: float = 1.0 / 144.0

    def __post_init__(self):
        if len(self.target_lines) == 0 or len(self.target_lines) > 10:
            raise ValueError("opponent targets must number 1..10")
        if self.attack_duration < 1 or self.attack_cooldown < 1:
            raise ValueError("attack duration and cooldown must be >= 1")

    def to_dict(self) -> dict:
        return {"target_lines": list(self.target_lines),
                "attack_duration": self.attack_duration,
                "attack_cooldown": self.attack_cooldown,
                "attack_probability": self.attack_probability}

    @classmethod
    def from_dict(cls, doc: dict) -> "OpponentConfig":
        return cls(list(doc["target_lines"]), int(doc["attack_duration"]),
                   int(doc["attack_cooldown"]), float(doc["attack_probability"]))


def draw_attack_schedule(config: OpponentConfig, horizon: int,
                         rng: np.random.Generator) -> dict[int, int]:
    """Pre-draw the full attack schedule {step: line} for one episode.

    The schedule depends only on (seed, scenario, config), never on the
    trajectory, so paired-seed evaluations see byte-identical attacks
    regardless of the agent.
    """
    schedule: dict[int, int] = {}
    active = 0
    cooldown = 0
    for t in range(1, horizon + 1):
        if active > 0:
            active -= 1
        elif cooldown > 0:
            cooldown -= 1
        elif rng.random() < config.attack_probability:
            line = config.target_lines[rng.integers(len(config.target_lines))]
            schedule[t] = line
            active = config.attack_duration - 1
            cooldown = config.attack_cooldown
    return schedule


@dataclass
class Observation:
    """Environment snapshot handed to agents.

    Reactive power and voltage fields exist for layout compatibility but
    are zero under the DC model.  ``simulate`` is a bound lookahead
    callable: simulate(action) -> (rho_hat, rho_hat_max).
    """

    month: int
    day: int
    hour: int
    minute: int
    weekday: int
    gen_p: np.ndarray
    gen_q: np.ndarray
    gen_v: np.ndarray
    load_p: np.ndarray
    load_q: np.ndarray
    load_v: np.ndarray
    p_or: np.ndarray
    q_or: np.ndarray
    v_or: np.ndarray
    a_or: np.ndarray
    p_ex: np.ndarray
    q_ex: np.ndarray
    v_ex: np.ndarray
    a_ex: np.ndarray
    rho: np.ndarray
    line_status: np.ndarray
    timestep_overflow: np.ndarray
    topo_vect: np.ndarray
    time_before_cooldown_line: np.ndarray
    time_before_cooldown_sub: np.ndarray
    time_next_maintenance: np.ndarray
    duration_next_maintenance: np.ndarray
    rho_max: float
    t: int
    simulate: object = field(default=None, repr=False, compare=False)

    def vector_parts(self) -> list[np.ndarray]:
        """Fields in filter order (time, injections, lines, topology, cooldowns)."""
        time = np.array([self.month, self.day, self.hour, self.minute, self.weekday],
                        dtype=np.float64)
        return [time,
                self.gen_p, self.gen_q, self.gen_v,
                self.load_p, self.load_q, self.load_v,
                self.p_or, self.q_or, self.v_or, self.a_or,
                self.p_ex, self.q_ex, self.v_ex, self.a_ex,
                self.rho,
                self.line_status.astype(np.float64),
                self.timestep_overflow.astype(np.float64),
                self.topo_vect.astype(np.float64),
                self.time_before_cooldown_line.astype(np.float64),
                self.time_before_cooldown_sub.astype(np.float64),
                self.time_next_maintenance.astype(np.float64),
                self.duration_next_maintenance.astype(np.float64)]


@dataclass
class StepResult:
    observation: Observation | None
    reward: float
    done: bool
    info: dict


def survival_reward(rho_max: float, failed: bool = False) -> float:
    """Diagnostic per-step reward: max(0, 1 - rho_max^2), 0 on failure."""
    if failed:
        return 0.0
    return float(min(1.0, max(0.0, 1.0 - rho_max * rho_max)))


class GridEnv:
    """Single-episode state machine; instances are independent.

    ``simulate`` is pure and callable any number of times against the
    frozen state between steps.
    """

    def __init__(self, grid: GridModel, scenario: Scenario | None = None,
                 opponent: OpponentConfig | None = None):
        self.grid = grid
        self.scenario = scenario
        self.opponent = opponent
        self.reference = TopologyVector.reference(grid)
        self.simulate_count = 0
        self._obs = None

    # -- lifecycle -----------------------------------------------------

    def reset(self, seed: int = 0, scenario: Scenario | None = None) -> Observation:
        if scenario is not None:
            self.scenario = scenario
        if self.scenario is None:
            raise ValueError("no scenario bound to the environment")
        g = self.grid
        self.t = 0
        self.topo = self.reference.copy()
        self.line_reason = np.zeros(g.n_line, dtype=np.int8)
        self.overflow_counter = np.zeros(g.n_line, dtype=np.int64)
        self.line_cooldown = np.zeros(g.n_line, dtype=np.int64)
        self.sub_cooldown = np.zeros(g.n_sub, dtype=np.int64)
        self.attack_line = -1
        self.attack_remaining = 0
        self.done = False
        self.cause = None
        self.steps_survived = 0
        if self.opponent is not None:
            stream = np.random.SeedSequence([seed, zlib.crc32(self.scenario.name.encode())])
            self.attack_schedule = draw_attack_schedule(
                self.opponent, self.scenario.horizon, np.random.default_rng(stream))
        else:
            self.attack_schedule = {}

        result = self._solve(self.t)
        if not result.converged or elements_islanded(self._graph, result.slack_component):
            self.done = True
            self.cause = "initial-failure"
        self._obs = self._make_observation(result)
        return self._obs

    def step(self, action: Action | None) -> StepResult:
        if self.done:
            raise StepAfterDone(f"episode already finished ({self.cause})")
        g = self.grid
        illegal = False

        # 1) legality: targets under cooldown degrade to do-nothing
        if isinstance(action, TopologyAction) and self.sub_cooldown[action.substation] > 0:
            action, illegal = None, True
        elif isinstance(action, LineAction) and self._line_blocked(action.line):
            action, illegal = None, True

        # 2) apply the action
        if isinstance(action, TopologyAction):
            self.topo = apply_topology_action(g, self.topo, action)
            self.sub_cooldown[action.substation] = AGENT_COOLDOWN
        elif isinstance(action, LineAction):
            if action.set_status == "disconnect":
                self._disconnect(action.line, REASON_AGENT, AGENT_COOLDOWN)
            else:
                self.topo = self.topo.with_line(action.line, True)
                self.line_reason[action.line] = REASON_NONE
                self.line_cooldown[action.line] = AGENT_COOLDOWN

        new_t = self.t + 1

        # 3) opponent attack
        if new_t in self.attack_schedule:
            line = self.attack_schedule[new_t]
            self._disconnect(line, REASON_OPPONENT, 0)
            self.attack_line = line
            self.attack_remaining = self.opponent.attack_duration

        # 4) maintenance outages (a start of 0 fires at the first step)
        for line, start, dur in self.scenario.maintenance:
            if max(start, 1) == new_t:
                self._disconnect(line, REASON_MAINTENANCE, max(FORCED_COOLDOWN, dur))

        # 5) advance chronics and solve
        self.t = new_t
        result = self._solve(new_t)
        cascade_depth = 0
        blackout = not result.converged or elements_islanded(self._graph, result.slack_component)

        if not blackout:
            # 6) overflow bookkeeping on the first solve of the step
            over = result.rho > 1.0
            self.overflow_counter = np.where(over, self.overflow_counter + 1, 0)
            trip = (self.overflow_counter >= OVERFLOW_STEPS_TO_TRIP) | (result.rho >= HARD_OVERFLOW_RHO)
            # 7) cascade: keep tripping hard overflows until stable
            while not blackout and trip.any():
                cascade_depth += 1
                for line in np.flatnonzero(trip):
                    self._disconnect(int(line), REASON_OVERFLOW, FORCED_COOLDOWN)
                    self.overflow_counter[line] = 0
                result = self._solve(new_t)
                blackout = (not result.converged
                            or elements_islanded(self._graph, result.slack_component))
                trip = result.rho >= HARD_OVERFLOW_RHO

        # 8) termination
        if blackout:
            self.done = True
            self.cause = "blackout"
            self.steps_survived = new_t - 1
        else:
            self.steps_survived = new_t
            if new_t >= self.scenario.horizon:
                self.done = True
                self.cause = "completed"

        self._tick_counters()
        reward = survival_reward(result.rho_max, failed=blackout)
        self._obs = self._make_observation(result) if not blackout else None
        info = {"cause": self.cause, "cascade_depth": cascade_depth, "illegal": illegal}
        return StepResult(self._obs, reward, self.done, info)

    # -- lookahead -----------------------------------------------------

    def simulate(self, action: Action | CombinedAction | None):
        """One-step lookahead on forecast injections; never mutates state.

        Returns (rho_hat, rho_hat_max); an infeasible hypothetical grid
        yields rho_hat_max = +inf.
        """
        if self.done:
            raise StepAfterDone("cannot simulate on a finished episode")
        self.simulate_count += 1
        g = self.grid
        topo = self.topo
        parts = []
        if isinstance(action, CombinedAction):
            parts = [action.topology, action.line]
        elif action is not None:
            parts = [action]
        for part in parts:
            if part is None:
                continue
            if isinstance(part, TopologyAction):
                topo = apply_topology_action(g, topo, part)
            elif isinstance(part, LineAction):
                topo = topo.with_line(part.line, part.set_status == "connect")
            else:
                raise TypeError(f"cannot simulate {part!r}")
        graph = build_electrical_graph(g, topo)
        result = solve_dc_power_flow(graph, self.scenario.forecast(self.t + 1))
        if not result.converged or elements_islanded(graph, result.slack_component):
            return result.rho, math.inf
        return result.rho, result.rho_max

    def force_outage(self, line: int) -> Observation | None:
        """Forced disconnection at the current step (adversarial mining aid).

        Re-solves immediately; returns the refreshed observation, or None
        when the outage blacks the grid out.
        """
        if self.done:
            raise StepAfterDone("cannot force an outage on a finished episode")
        self._disconnect(line, REASON_OPPONENT, FORCED_COOLDOWN)
        result = self._solve(self.t)
        if not result.converged or elements_islanded(self._graph, result.slack_component):
            self.done = True
            self.cause = "blackout"
            self.steps_survived = max(0, self.t - 1)
            self._obs = None
            return None
        self._obs = self._make_observation(result)
        return self._obs

    # -- internals -----------------------------------------------------

    def _line_blocked(self, line: int) -> bool:
        return self.line_cooldown[line] > 0 or \
            (self.attack_line == line and self.attack_remaining > 0)

    def _disconnect(self, line: int, reason: int, cooldown: int) -> None:
        self.topo = self.topo.with_line(line, False)
        self.line_reason[line] = reason
        self.line_cooldown[line] = max(self.line_cooldown[line], cooldown)

    def _solve(self, t: int):
        self._graph = build_electrical_graph(self.grid, self.topo)
        return solve_dc_power_flow(self._graph, self.scenario.injections(t))

    def _tick_counters(self) -> None:
        np.maximum(self.line_cooldown - 1, 0, out=self.line_cooldown)
        np.maximum(self.sub_cooldown - 1, 0, out=self.sub_cooldown)
        if self.attack_remaining > 0:
            self.attack_remaining -= 1
            if self.attack_remaining == 0:
                self.line_cooldown[self.attack_line] = FORCED_COOLDOWN
                self.attack_line = -1

    def _next_maintenance(self):
        g = self.grid
        time_next = np.full(g.n_line, -1, dtype=np.int64)
        duration = np.zeros(g.n_line, dtype=np.int64)
        for line, start, dur in sorted(self.scenario.maintenance, key=lambda m: m[1]):
            if start >= self.t and time_next[line] < 0:
                time_next[line] = start - self.t
                duration[line] = dur
        return time_next, duration

    def _make_observation(self, result) -> Observation:
        g = self.grid
        stamp = self.scenario.timestamp(self.t)
        inj = self.scenario.injections(self.t)
        zeros_g = np.zeros(g.n_gen)
        zeros_d = np.zeros(g.n_load)
        zeros_l = np.zeros(g.n_line)
        cooldown_line = self.line_cooldown.copy()
        if self.attack_remaining > 0:
            cooldown_line[self.attack_line] = max(cooldown_line[self.attack_line],
                                                  self.attack_remaining)
        time_next, duration = self._next_maintenance()
        return Observation(
            month=stamp.month, day=stamp.day, hour=stamp.hour,
            minute=stamp.minute, weekday=stamp.weekday(),
            gen_p=np.asarray(inj.gen_p, dtype=np.float64).copy(),
            gen_q=zeros_g, gen_v=zeros_g.copy(),
            load_p=np.asarray(inj.load_p, dtype=np.float64).copy(),
            load_q=zeros_d, load_v=zeros_d.copy(),
            p_or=result.flow.copy(), q_or=zeros_l, v_or=zeros_l.copy(),
            a_or=np.abs(result.flow),
            p_ex=-result.flow, q_ex=zeros_l.copy(), v_ex=zeros_l.copy(),
            a_ex=np.abs(result.flow),
            rho=result.rho.copy(),
            line_status=self.topo.line_connected.copy(),
            timestep_overflow=self.overflow_counter.copy(),
            topo_vect=self.topo.assignment.copy(),
            time_before_cooldown_line=cooldown_line,
            time_before_cooldown_sub=self.sub_cooldown.copy(),
            time_next_maintenance=time_next,
            duration_next_maintenance=duration,
            rho_max=result.rho_max,
            t=self.t,
            simulate=self.simulate,
        )


# -- scenario file IO ---------------------------------------------------

def save_chronics(scenario: Scenario, grid: GridModel, csv_path, sidecar_path=None) -> None:
    """Write chronics CSV (gen_p_<id>..., load_p_<id>...) and sidecar JSON."""
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = [f"gen_p_{i}" for i in range(grid.n_gen)] + \
                 [f"load_p_{i}" for i in range(grid.n_load)]
        writer.writerow(header)
        for t in range(scenario.horizon + 1):
            writer.writerow([f"{v:.10g}" for v in scenario.gen_p[t]] +
                            [f"{v:.10g}" for v in scenario.load_p[t]])
    if sidecar_path is not None:
        doc = {"name": scenario.name, "horizon": scenario.horizon,
               "start": scenario.start.isoformat(),
               "maintenance": [{"line": l, "start": s, "duration": d}
                               for l, s, d in scenario.maintenance]}
        with open(sidecar_path, "w") as fh:
            json.dump(doc, fh, indent=1)


def load_chronics(grid: GridModel, csv_path, sidecar_path=None,
                  name: str | None = None,
                  forecast_noise: float = 0.0, noise_seed: int = 0) -> Scenario:
    """Read chronics CSV (+ optional sidecar) back into a Scenario.

    ``forecast_noise`` > 0 perturbs the forecast rows by zero-mean
    uniform relative noise, deterministically from ``noise_seed``.
    """
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = [f"gen_p_{i}" for i in range(grid.n_gen)] + \
                   [f"load_p_{i}" for i in range(grid.n_load)]
        if header != expected:
            raise ValueError("chronics columns do not match the grid")
        rows = np.array([[float(v) for v in row] for row in reader])
    gen_p, load_p = rows[:, :grid.n_gen], rows[:, grid.n_gen:]
    horizon = len(rows) - 1
    maintenance = []
    start = datetime(2026, 1, 5)
    if sidecar_path is not None:
        with open(sidecar_path) as fh:
            doc = json.load(fh)
        maintenance = [(int(m["line"]), int(m["start"]), int(m["duration"]))
                       for m in doc.get("maintenance", [])]
        if "start" in doc:
            start = datetime.fromisoformat(doc["start"])
        if "horizon" in doc:
            horizon = int(doc["horizon"])
        name = name or doc.get("name")
    scenario = Scenario(name or "chronics", gen_p, load_p, horizon,
                        maintenance, start=start)
    if forecast_noise > 0.0:
        rng = np.random.default_rng(np.random.SeedSequence(
            [noise_seed, zlib.crc32(scenario.name.encode())]))
        scenario.forecast_gen_p = gen_p * (1 + forecast_noise * rng.uniform(-1, 1, gen_p.shape))
        scenario.forecast_load_p = np.maximum(
            0.0, load_p * (1 + forecast_noise * rng.uniform(-1, 1, load_p.shape)))
    return scenario
