"""Multi-seed paired benchmark, scoring, significance tests, analytics.

Every agent is evaluated on the same (scenario, seed) grid; seeds are
drawn once from the base seed so opponent schedules are identical across
agents.  Scenario scores anchor at -100 (immediate failure), 0 (the
do-nothing survival) and 80 (completion), interpolating linearly between
anchors.  Per-seed aggregates (means over scenarios) feed Welch's
unequal-variance t-test.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import betainc

from .environment import GridEnv
from .tutor import DoNothingAgent

DO_NOTHING = "do-nothing"


class DegenerateSample(ValueError):
    """Welch's test needs two samples with some variance."""


def welch_t_test(sample_a, sample_b):
    """Welch statistic, Welch-Satterthwaite degrees of freedom, two-sided p.

    The p-value comes from the t survival function expressed through the
    regularized incomplete beta function.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise DegenerateSample("need at least two values per sample")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        raise DegenerateSample("both samples have zero variance")
    sa, sb = va / len(a), vb / len(b)
    t = (a.mean() - b.mean()) / math.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa ** 2 / (len(a) - 1) + sb ** 2 / (len(b) - 1))
    p = betainc(df / 2.0, 0.5, df / (df + t * t))
    return float(t), float(df), float(p)


def score_scenario(steps_agent: int, steps_do_nothing: int, horizon: int) -> float:
    """Piecewise-linear score: -100 at zero survival, 0 at the do-nothing
    survival, 80 at completion."""
    s_a = min(max(steps_agent, 0), horizon)
    s_dn = min(max(steps_do_nothing, 0), horizon)
    if s_a < s_dn:
        return -100.0 * (1.0 - s_a / s_dn)
    if s_a >= horizon:
        return 80.0
    if s_dn >= horizon:  # unreachable upper anchor, but s_a < horizon here
        return -100.0 * (1.0 - s_a / s_dn)
    return 80.0 * (s_a - s_dn) / (horizon - s_dn)


@dataclass
class EpisodeRecord:
    agent: str
    scenario: str
    seed: int
    steps_survived: int
    horizon: int
    cause: str
    trace: list[dict] = field(default_factory=list, repr=False)

    @property
    def completed(self) -> bool:
        return self.steps_survived >= self.horizon


def run_episode(env: GridEnv, agent, name: str, scenario, seed: int,
                keep_trace: bool = True) -> EpisodeRecord:
    """Play one episode, recording the per-step trace.

    Each trace row holds the stress the agent saw (rho_obs), its action,
    the post-step stress, simulate-call count, decision wall time and
    the topology distance from reference after the step.
    """
    obs = env.reset(seed=seed, scenario=scenario)
    agent.episode_start()
    trace = []
    grid = env.grid
    while not env.done:
        rho_obs = obs.rho_max
        t0 = time.perf_counter()
        action, meta = agent.act(obs)
        wall = time.perf_counter() - t0
        result = env.step(action)
        obs = result.observation
        if keep_trace:
            changed = env.topo.assignment != 1
            distance = int(sum(
                bool(changed[grid.sub_slot_start[s]:
                             grid.sub_slot_start[s] + grid.sub_n_slots[s]].any())
                for s in range(grid.n_sub)))
            trace.append({
                "t": env.t, "kind": meta.get("kind", DO_NOTHING),
                "action": None if action is None else action.to_dict(),
                "rho_obs": float(rho_obs),
                "rho_max": float(obs.rho_max) if obs is not None else None,
                "simulate_count": int(meta.get("simulate_calls", 0)),
                "wall_time": wall,
                "topo_distance": distance,
                "illegal": bool(result.info.get("illegal", False)),
                "done": result.done,
                "cause": result.info.get("cause"),
            })
    return EpisodeRecord(name, scenario.name, seed, env.steps_survived,
                         scenario.horizon, env.cause, trace)


def save_trace(record: EpisodeRecord, path) -> None:
    with open(path, "w") as fh:
        for row in record.trace:
            fh.write(json.dumps(row) + "\n")


def load_trace(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


@dataclass
class BenchmarkResult:
    seeds: list[int]
    horizon: int
    records: dict            # (agent, scenario, seed) -> EpisodeRecord
    scores: list[dict]       # rows: agent, seed, scenario, steps, score
    per_seed: dict           # agent -> np.ndarray of per-seed aggregates

    def summary(self) -> list[dict]:
        out = []
        for agent, values in self.per_seed.items():
            v = np.asarray(values)
            out.append({"agent": agent, "mean": v.mean(), "sd": v.std(ddof=1) if len(v) > 1 else 0.0,
                        "median": float(np.median(v)), "q25": float(np.quantile(v, 0.25)),
                        "q75": float(np.quantile(v, 0.75)), "min": float(v.min()),
                        "max": float(v.max())})
        return out

    def ttests(self) -> list[dict]:
        rows = []
        names = list(self.per_seed)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                try:
                    t, df, p = welch_t_test(self.per_seed[a], self.per_seed[b])
                except DegenerateSample:
                    t, df, p = float("nan"), float("nan"), float("nan")
                rows.append({"agent_a": a, "agent_b": b, "t": t, "df": df, "p": p})
        return rows

    def write_csvs(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "scores.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, ["agent", "seed", "scenario", "steps", "score"])
            writer.writeheader()
            writer.writerows(self.scores)
        with open(directory / "summary.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, ["agent", "mean", "sd", "median",
                                         "q25", "q75", "min", "max"])
            writer.writeheader()
            writer.writerows(self.summary())
        with open(directory / "ttests.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, ["agent_a", "agent_b", "t", "df", "p"])
            writer.writeheader()
            writer.writerows(self.ttests())


def draw_seeds(base_seed: int, n_seeds: int) -> list[int]:
    rng = np.random.default_rng(base_seed)
    return [int(s) for s in rng.integers(0, 2 ** 31 - 1, size=n_seeds)]


def run_benchmark(grid, agents: dict, scenarios, opponent, n_seeds: int = 30,
                  base_seed: int = 0, keep_traces: bool = True,
                  progress=None) -> BenchmarkResult:
    """Evaluate every agent on the shared (scenario, seed) grid.

    The do-nothing survivals anchoring the score are computed once per
    (scenario, seed) and reused; if a do-nothing agent is requested it
    reuses the same episodes.
    """
    seeds = draw_seeds(base_seed, n_seeds)
    horizon = scenarios[0].horizon
    records: dict = {}
    env = GridEnv(grid, opponent=opponent)

    dn_agent = DoNothingAgent()
    dn_steps = {}
    for scenario in scenarios:
        for seed in seeds:
            rec = run_episode(env, dn_agent, DO_NOTHING, scenario, seed,
                              keep_trace=keep_traces)
            dn_steps[(scenario.name, seed)] = rec.steps_survived
            records[(DO_NOTHING, scenario.name, seed)] = rec
            if progress:
                progress(DO_NOTHING, scenario.name, seed, rec.steps_survived)

    for name, agent in agents.items():
        if name == DO_NOTHING:
            continue
        for scenario in scenarios:
            for seed in seeds:
                rec = run_episode(env, agent, name, scenario, seed,
                                  keep_trace=keep_traces)
                records[(name, scenario.name, seed)] = rec
                if progress:
                    progress(name, scenario.name, seed, rec.steps_survived)

    names = list(agents)
    if DO_NOTHING not in names:
        names = [DO_NOTHING] + names
    scores, per_seed = [], {}
    for name in names:
        aggregates = []
        for seed in seeds:
            seed_scores = []
            for scenario in scenarios:
                rec = records[(name, scenario.name, seed)]
                s = score_scenario(rec.steps_survived,
                                   dn_steps[(scenario.name, seed)], rec.horizon)
                seed_scores.append(s)
                scores.append({"agent": name, "seed": seed, "scenario": scenario.name,
                               "steps": rec.steps_survived, "score": round(s, 6)})
            aggregates.append(float(np.mean(seed_scores)))
        per_seed[name] = np.array(aggregates)
    return BenchmarkResult(seeds, horizon, records, scores, per_seed)


# -- behaviour analytics --------------------------------------------------

def analyze(records: dict) -> dict:
    """Substation action histograms, compute series on commonly survived
    steps, and per-step topology distance, from episode traces."""
    if not records:
        raise ValueError("no episode records to analyze")
    agents = sorted({key[0] for key in records})
    episodes = sorted({(key[1], key[2]) for key in records})

    histogram = {agent: {} for agent in agents}
    for (agent, _, _), rec in records.items():
        for row in rec.trace:
            action = row["action"]
            if action and action.get("type") == "topology":
                sub = action["sub"]
                histogram[agent][sub] = histogram[agent].get(sub, 0) + 1

    compute_rows = []
    for scenario, seed in episodes:
        cut = min(records[(a, scenario, seed)].steps_survived for a in agents
                  if (a, scenario, seed) in records)
        for agent in agents:
            rec = records.get((agent, scenario, seed))
            if rec is None:
                continue
            for row in rec.trace:
                if row["t"] <= cut:
                    compute_rows.append({"agent": agent, "scenario": scenario,
                                         "seed": seed, "t": row["t"],
                                         "simulate_count": row["simulate_count"],
                                         "wall_time": row["wall_time"]})

    distance_rows = []
    for (agent, scenario, seed), rec in records.items():
        for row in rec.trace:
            distance_rows.append({"agent": agent, "scenario": scenario, "seed": seed,
                                  "t": row["t"], "topo_distance": row["topo_distance"]})

    return {"substation_frequency": histogram, "compute": compute_rows,
            "distance": distance_rows}


def write_analytics(bundle: dict, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "substation_frequency.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["agent", "substation", "count"])
        for agent, counts in bundle["substation_frequency"].items():
            for sub in sorted(counts):
                writer.writerow([agent, sub, counts[sub]])
    for name, fields in (("compute", ["agent", "scenario", "seed", "t",
                                      "simulate_count", "wall_time"]),
                         ("distance", ["agent", "scenario", "seed", "t",
                                       "topo_distance"])):
        with open(directory / f"{name}.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fields)
            writer.writeheader()
            writer.writerows(bundle[name])
