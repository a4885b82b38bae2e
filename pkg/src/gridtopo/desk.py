"""The shipped desk-scale grid and its scenario generator.

A 14-substation meshed transmission system: generation concentrated in
the north-west (substations 0-2), demand spread over the south-east.
Two corridors link the regions, so splitting the hub substations (1, 3,
5, 8) genuinely reroutes power.  Thermal limits are sized so that the
reference topology runs near 65% utilisation at base load and overloads
on corridor lines during the evening peak.

Scenarios are one simulated day (288 five-minute steps) with a two-peak
daily load curve, per-scenario amplitude and noise, and occasional line
maintenance.  Everything is deterministic given the scenario seed.
"""

from __future__ import annotations

import numpy as np

from .environment import OpponentConfig, Scenario
from .grid_core import Generator, GridModel, Line, Load

HORIZON = 288

# (from, to, reactance) of the 20 transmission lines
_EDGES = [
    (0, 1, 0.059), (0, 4, 0.223), (1, 2, 0.198), (1, 3, 0.176), (1, 4, 0.174),
    (2, 3, 0.171), (3, 4, 0.042), (3, 6, 0.209), (3, 8, 0.556), (4, 5, 0.252),
    (5, 10, 0.199), (5, 11, 0.256), (5, 12, 0.130), (6, 7, 0.176), (6, 8, 0.110),
    (8, 9, 0.085), (8, 13, 0.270), (9, 10, 0.192), (11, 12, 0.200), (12, 13, 0.348),
]

_GEN_SUBS = [0, 1, 2, 5, 7]          # substation of each generator; 0 is slack
_GEN_BASE = [0.0, 0.50, 0.35, 0.35, 0.25]  # scheduled output at base load, per unit

_LOAD_SUBS = [1, 2, 3, 4, 5, 8, 9, 10, 11, 12, 13]
_LOAD_SHARE = np.array([0.217, 0.30, 0.478, 0.076, 0.112,
                        0.295, 0.09, 0.105, 0.065, 0.135, 0.149])
_LOAD_SHARE = _LOAD_SHARE / _LOAD_SHARE.sum()

# Thermal limits per line, sized from the stressed reference flows: the
# 6-8 corridor (line 14) binds at the evening peak; its loss overloads
# 3-8, then 4-5, so an unmanaged peak cascades into losing the south.
_LIMITS = [0.75, 0.60, 0.30, 0.60, 0.50, 0.40, 0.55, 0.30, 0.30, 0.42,
           0.32, 0.20, 0.42, 0.52, 0.40, 0.30, 0.28, 0.16, 0.12, 0.30]

BASE_TOTAL_LOAD = 2.0  # per unit, scaled by the daily curve

OPPONENT_TARGETS = [3, 4, 6, 8, 9, 10, 14, 15]


def desk_grid() -> GridModel:
    lines = [Line(i, f, t, x, _LIMITS[i]) for i, (f, t, x) in enumerate(_EDGES)]
    gens = [Generator(i, s) for i, s in enumerate(_GEN_SUBS)]
    loads = [Load(i, s) for i, s in enumerate(_LOAD_SUBS)]
    return GridModel(list(range(14)), lines, gens, loads, 0)


def desk_opponent() -> OpponentConfig:
    return OpponentConfig(OPPONENT_TARGETS, attack_duration=48,
                          attack_cooldown=144, attack_probability=1.0 / 144.0)


def _daily_curve(steps: np.ndarray, peak_hour: float, peak_amp: float) -> np.ndarray:
    """Two-peak daily multiplier: ~0.84 overnight, peak_amp at the evening peak."""
    hours = (steps * 5.0 / 60.0) % 24.0
    shape = 0.38 * np.exp(-0.5 * ((hours - 8.5) / 1.9) ** 2) \
        + 1.00 * np.exp(-0.5 * ((hours - peak_hour) / 2.3) ** 2)
    return 0.84 + (peak_amp - 0.84) * np.minimum(shape, 1.0)


def desk_scenario(index: int, horizon: int = HORIZON,
                  maintenance: bool | None = None) -> Scenario:
    """Deterministic scenario ``desk-<index>``; index also seeds its RNG."""
    rng = np.random.default_rng(np.random.SeedSequence([987654321, index]))
    steps = np.arange(horizon + 1)

    peak_hour = 16.5 + rng.uniform(-1.0, 1.0)
    peak_amp = rng.uniform(1.32, 1.50)
    curve = _daily_curve(steps, peak_hour, peak_amp)

    # slow AR(1) wander on the total plus light per-load jitter
    wander = np.empty(horizon + 1)
    wander[0] = 0.0
    eps = rng.normal(0.0, 0.004, horizon + 1)
    for t in range(1, horizon + 1):
        wander[t] = 0.98 * wander[t - 1] + eps[t]
    total = BASE_TOTAL_LOAD * curve * (1.0 + wander)

    share = _LOAD_SHARE * rng.lognormal(0.0, 0.04, len(_LOAD_SHARE))
    share = share / share.sum()
    jitter = rng.lognormal(0.0, 0.01, (horizon + 1, len(_LOAD_SHARE)))
    load_p = total[:, None] * share[None, :] * jitter
    load_p = load_p / load_p.sum(axis=1, keepdims=True) * total[:, None]

    # non-slack generators follow the curve at their scheduled share;
    # the slack covers the remainder at solve time
    gen_p = np.zeros((horizon + 1, len(_GEN_SUBS)))
    dispatch = np.array(_GEN_BASE)
    gen_p[:, 1:] = dispatch[1:][None, :] * curve[:, None]
    gen_p[:, 0] = np.maximum(0.0, total - gen_p[:, 1:].sum(axis=1))

    plan = []
    use_maintenance = maintenance if maintenance is not None else (index % 3 == 2)
    if use_maintenance:
        line = [10, 16, 19][index % 3]
        start = int(60 + (index * 37) % 80)
        plan.append((line, start, 36))

    return Scenario(f"desk-{index:03d}", gen_p, load_p, horizon, plan)


def desk_scenarios(count: int = 10, offset: int = 0, horizon: int = HORIZON):
    return [desk_scenario(offset + i, horizon) for i in range(count)]


TRAIN_OFFSET = 100  # training days are disjoint from the evaluation days

# mined-set sizes, scaled from the large-grid 146/62/300 split
NORMAL_SET_SIZE = 12
ADVERSARIAL_SET_SIZE = 8
N1_SET_SIZE = 20


def mine_desk_sets(n_train: int = 16, seed: int = 0):
    """Run the three miners on the training days; returns (n1, adversarial,
    normal) action sets, the priority order of the enhanced agents."""
    from .action_space import enumerate_all_topology_actions
    from .environment import GridEnv
    from .teacher import (mine_adversarial, mine_greedy, mine_n1_offline,
                          reduce_actions)

    grid = desk_grid()
    pool = enumerate_all_topology_actions(grid)
    scenarios = desk_scenarios(n_train, offset=TRAIN_OFFSET)
    env = GridEnv(grid)
    normal = reduce_actions(mine_greedy(env, scenarios, pool, seed=seed),
                            NORMAL_SET_SIZE)
    adversarial = reduce_actions(
        mine_adversarial(env, scenarios, pool, OPPONENT_TARGETS,
                         outage_every=24, seed=seed), ADVERSARIAL_SET_SIZE)
    n1 = reduce_actions(
        mine_n1_offline(env, scenarios, pool, OPPONENT_TARGETS,
                        outage_every=24, seed=seed), N1_SET_SIZE)
    return n1, adversarial, normal
