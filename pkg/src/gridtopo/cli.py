"""Command-line interface: mine, reduce, run, train, evaluate, analyze.

File-based workflow around the desk grid (or any grid JSON): scenarios
live in a directory of chronics CSVs with JSON sidecars; mined records,
action sets and traces are JSON; scores and analytics are CSV.
"""

from __future__ import annotations

import argparse
import importlib.resources
import json
import sys
from pathlib import Path

from . import desk
from .action_space import ActionSet, enumerate_all_topology_actions
from .environment import GridEnv, OpponentConfig, load_chronics, save_chronics
from .evaluation import (analyze, run_benchmark, run_episode, save_trace,
                         write_analytics)
from .grid_core import GridModel, load_grid, save_grid
from .junior import MlpSpec, load_model, save_model, train
from .senior_hybrid import Senior, SeniorConfig
from .teacher import (load_records, mine_adversarial, mine_greedy,
                      mine_n1_offline, reduce_actions, save_records)
from .tutor import (DoNothingAgent, ExperienceDataset, Tutor, TutorConfig,
                    run_and_record)

AGENT_NAMES = ("do-nothing", "tutor", "tutor-n1", "tutor-n1-topo", "senior")


def _load_grid(path: str | None) -> GridModel:
    if path:
        return load_grid(path)
    data = importlib.resources.files("gridtopo").joinpath("data/desk_grid.json")
    with importlib.resources.as_file(data) as p:
        return load_grid(p)


def _load_scenarios(grid: GridModel, directory: str, noise: float = 0.0):
    scenarios = []
    for csv_path in sorted(Path(directory).glob("*.csv")):
        sidecar = csv_path.with_suffix(".json")
        scenarios.append(load_chronics(grid, csv_path,
                                       sidecar if sidecar.exists() else None,
                                       name=csv_path.stem, forecast_noise=noise))
    if not scenarios:
        raise SystemExit(f"no chronics CSVs found in {directory}")
    return scenarios


def _load_opponent(path: str | None) -> OpponentConfig | None:
    if not path:
        return None
    with open(path) as fh:
        return OpponentConfig.from_dict(json.load(fh))


def _load_sets(paths: list[str]) -> list[ActionSet]:
    return [ActionSet.load(p) for p in paths]


def _build_agent(name: str, grid: GridModel, sets: list[ActionSet],
                 model_dir: str | None):
    if name == "do-nothing":
        return DoNothingAgent()
    if name == "tutor":
        return Tutor(grid, TutorConfig(priority_sets=sets))
    if name == "tutor-n1":
        return Tutor(grid, TutorConfig(priority_sets=sets, n1_enabled=True))
    if name == "tutor-n1-topo":
        return Tutor(grid, TutorConfig(priority_sets=sets, n1_enabled=True,
                                       reversion_enabled=True))
    if name == "senior":
        if not model_dir:
            raise SystemExit("--model is required for the senior agent")
        actions = [a for s in sets for a in s]
        return Senior(grid, load_model(model_dir), actions, SeniorConfig())
    raise SystemExit(f"unknown agent {name!r}; choose from {', '.join(AGENT_NAMES)}")


def cmd_export_desk(args):
    out = Path(args.out)
    (out / "scenarios").mkdir(parents=True, exist_ok=True)
    grid = desk.desk_grid()
    save_grid(grid, out / "grid.json")
    with open(out / "opponent.json", "w") as fh:
        json.dump(desk.desk_opponent().to_dict(), fh, indent=1)
    for scenario in desk.desk_scenarios(args.eval_count):
        save_chronics(scenario, grid, out / "scenarios" / f"{scenario.name}.csv",
                      out / "scenarios" / f"{scenario.name}.json")
    train_dir = out / "train-scenarios"
    train_dir.mkdir(exist_ok=True)
    for scenario in desk.desk_scenarios(args.train_count, offset=desk.TRAIN_OFFSET):
        save_chronics(scenario, grid, train_dir / f"{scenario.name}.csv",
                      train_dir / f"{scenario.name}.json")
    print(f"wrote grid, opponent and {args.eval_count}+{args.train_count} "
          f"scenarios under {out}")


def cmd_teach(args):
    grid = _load_grid(args.grid)
    scenarios = _load_scenarios(grid, args.scenarios)
    pool = enumerate_all_topology_actions(grid)
    env = GridEnv(grid)
    opponent = _load_opponent(args.opponent)
    targets = opponent.target_lines if opponent else desk.OPPONENT_TARGETS
    if args.mode == "greedy":
        records = mine_greedy(env, scenarios, pool, seed=args.seed)
    elif args.mode == "adversarial":
        records = mine_adversarial(env, scenarios, pool, targets,
                                   outage_every=args.outage_every, seed=args.seed)
    else:
        records = mine_n1_offline(env, scenarios, pool, targets,
                                  outage_every=args.outage_every, seed=args.seed)
    save_records(records, args.out)
    print(f"{args.mode} teacher: {len(records)} records -> {args.out}")


def cmd_reduce(args):
    records = []
    for path in args.records:
        records.extend(load_records(path))
    action_set = reduce_actions(records, args.k)
    action_set.save(args.out)
    print(f"{len(action_set)} actions -> {args.out}")


def cmd_run(args):
    grid = _load_grid(args.grid)
    scenarios = _load_scenarios(grid, args.scenarios)
    sets = _load_sets(args.actions or [])
    agent = _build_agent(args.agent, grid, sets, args.model)
    env = GridEnv(grid, opponent=_load_opponent(args.opponent))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for scenario in scenarios:
        for seed in args.seeds:
            record = run_episode(env, agent, args.agent, scenario, seed)
            path = out / f"{args.agent}_{scenario.name}_{seed}.jsonl"
            save_trace(record, path)
            print(f"{scenario.name} seed {seed}: survived "
                  f"{record.steps_survived}/{record.horizon} ({record.cause})")


def cmd_train_junior(args):
    data = ExperienceDataset.load(args.data)
    hidden = [int(h) for h in args.hidden.split(",")] if args.hidden else None
    spec_kw = {"input_dim": data.manifest["vector_length"],
               "output_dim": len(data.manifest["actions"])}
    if hidden:
        spec_kw["hidden"] = hidden
    if args.epochs:
        spec_kw["max_epochs"] = args.epochs
    if args.learning_rate:
        spec_kw["learning_rate"] = args.learning_rate
    spec = MlpSpec(**spec_kw)
    model, report = train(spec, data.vectors, data.labels,
                          validation_split=args.validation_split, seed=args.seed)
    save_model(model, args.out)
    if report.top1:
        print(f"trained {report.stopped_epoch} epochs; val top-1 "
              f"{report.top1[-1]:.3f}, top-{report.k} {report.topk[-1]:.3f}")
    else:
        print(f"trained {report.stopped_epoch} epochs")
    # keep the action list next to the weights so `run --agent senior`
    # can check index consistency
    with open(Path(args.out) / "actions.json", "w") as fh:
        json.dump(data.manifest["actions"], fh, indent=1)


def cmd_record(args):
    grid = _load_grid(args.grid)
    scenarios = _load_scenarios(grid, args.scenarios)
    sets = _load_sets(args.actions)
    agent = _build_agent(args.agent, grid, sets, None)
    if isinstance(agent, DoNothingAgent):
        raise SystemExit("experience recording needs a tutor agent")
    env = GridEnv(grid, opponent=_load_opponent(args.opponent))
    data = run_and_record(env, agent, scenarios, args.seeds)
    data.save(args.out)
    print(f"{len(data)} experience pairs -> {args.out}")


def cmd_evaluate(args):
    grid = _load_grid(args.grid)
    scenarios = _load_scenarios(grid, args.scenarios)
    sets = _load_sets(args.actions or [])
    agents = {}
    for name in args.agents.split(","):
        name = name.strip()
        agents[name] = _build_agent(name, grid, sets, args.model)
    opponent = _load_opponent(args.opponent)

    def progress(agent, scenario, seed, steps):
        if not args.quiet:
            print(f"  {agent:>14} {scenario} seed {seed}: {steps}", file=sys.stderr)

    result = run_benchmark(grid, agents, scenarios, opponent,
                           n_seeds=args.seeds, base_seed=args.base_seed,
                           keep_traces=True, progress=progress)
    out = Path(args.out)
    result.write_csvs(out)
    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    for (agent, scenario, seed), record in result.records.items():
        save_trace(record, traces / f"{agent}_{scenario}_{seed}.jsonl")
    for row in result.summary():
        print(f"{row['agent']:>16}: mean {row['mean']:6.2f} (sd {row['sd']:.2f})  "
              f"median {row['median']:6.2f} ({row['q25']:.2f}, {row['q75']:.2f})")
    for row in result.ttests():
        print(f"welch {row['agent_a']} vs {row['agent_b']}: "
              f"t={row['t']:.3f} df={row['df']:.1f} p={row['p']:.2e}")
    print(f"results -> {out}")


def cmd_analyze(args):
    trace_dir = Path(args.inp) / "traces" if (Path(args.inp) / "traces").is_dir() \
        else Path(args.inp)
    records = {}
    from .evaluation import EpisodeRecord, load_trace
    for path in sorted(trace_dir.glob("*.jsonl")):
        agent, scenario, seed = path.stem.rsplit("_", 2)
        trace = load_trace(path)
        if not trace:
            continue
        last = trace[-1]
        steps = last["t"] if last["cause"] == "completed" else last["t"] - 1
        records[(agent, scenario, int(seed))] = EpisodeRecord(
            agent, scenario, int(seed), steps, steps, last["cause"] or "", trace)
    if not records:
        raise SystemExit(f"no traces found under {trace_dir}")
    bundle = analyze(records)
    out = Path(args.out or (Path(args.inp) / "analytics"))
    write_analytics(bundle, out)
    print(f"analytics -> {out}")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="gridtopo",
                                     description="grid topology-control suite")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-desk", help="write the desk grid, opponent and scenarios")
    p.add_argument("--out", required=True)
    p.add_argument("--eval-count", type=int, default=10)
    p.add_argument("--train-count", type=int, default=8)
    p.set_defaults(func=cmd_export_desk)

    p = sub.add_parser("teach", help="mine actions from scenarios")
    p.add_argument("--mode", choices=("greedy", "adversarial", "n1"), required=True)
    p.add_argument("--scenarios", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid")
    p.add_argument("--opponent")
    p.add_argument("--outage-every", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_teach)

    p = sub.add_parser("reduce", help="frequency-reduce mined records to an action set")
    p.add_argument("--records", nargs="+", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("run", help="run an agent over scenarios, writing traces")
    p.add_argument("--agent", required=True)
    p.add_argument("--scenarios", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid")
    p.add_argument("--opponent")
    p.add_argument("--actions", nargs="*")
    p.add_argument("--model")
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("record", help="record tutor experience for imitation")
    p.add_argument("--agent", default="tutor-n1-topo")
    p.add_argument("--scenarios", required=True)
    p.add_argument("--actions", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid")
    p.add_argument("--opponent")
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("train-junior", help="train the imitation network")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hidden")
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--validation-split", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_junior)

    p = sub.add_parser("evaluate", help="paired multi-seed benchmark")
    p.add_argument("--agents", required=True)
    p.add_argument("--scenarios", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid")
    p.add_argument("--opponent")
    p.add_argument("--actions", nargs="*")
    p.add_argument("--model")
    p.add_argument("--seeds", type=int, default=30)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", help="behaviour analytics from traces")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
