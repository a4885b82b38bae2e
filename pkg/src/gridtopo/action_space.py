"""Unitary topology and line actions: enumeration, application, JSON IO.

A topology action reassigns the element slots of a single substation
between its two busbars.  Canonical form fixes the first slot on busbar
1, which removes the global 1<->2 relabelling duplicate.  Line actions
connect or disconnect a single line.  Combined actions (one of each) are
only ever simulated, never executed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product

import numpy as np

from .grid_core import GridModel, TopologyVector


@dataclass(frozen=True)
class TopologyAction:
    substation: int
    target_config: tuple[int, ...]

    def __post_init__(self):
        if any(b not in (1, 2) for b in self.target_config):
            raise ValueError("busbar labels must be 1 or 2")
        if self.target_config and self.target_config[0] != 1:
            raise ValueError("canonical form requires the first slot on busbar 1")

    def key(self):
        return ("topology", self.substation, self.target_config)

    def to_dict(self) -> dict:
        return {"type": "topology", "sub": self.substation,
                "config": list(self.target_config)}


@dataclass(frozen=True)
class LineAction:
    line: int
    set_status: str  # "connect" | "disconnect"

    def __post_init__(self):
        if self.set_status not in ("connect", "disconnect"):
            raise ValueError(f"bad set_status {self.set_status!r}")

    def key(self):
        return ("line", self.line, self.set_status)

    def to_dict(self) -> dict:
        return {"type": "line", "line": self.line, "set": self.set_status}


@dataclass(frozen=True)
class CombinedAction:
    """At most one topology action and one line action, simulated jointly."""

    topology: TopologyAction | None = None
    line: LineAction | None = None


Action = TopologyAction | LineAction


def action_from_dict(doc: dict) -> Action:
    kind = doc.get("type")
    if kind == "topology":
        return TopologyAction(int(doc["sub"]), tuple(int(b) for b in doc["config"]))
    if kind == "line":
        return LineAction(int(doc["line"]), str(doc["set"]))
    raise ValueError(f"unknown action type {kind!r}")


class ActionSet:
    """Ordered, de-duplicated action list with per-action metadata.

    Order is the evaluation priority of downstream agents.  Metadata
    holds the mining origin and occurrence count.
    """

    def __init__(self, actions, meta=None):
        self.actions: list[Action] = list(actions)
        self.meta: list[dict] = [dict(m) for m in meta] if meta is not None \
            else [{} for _ in self.actions]
        if len(self.meta) != len(self.actions):
            raise ValueError("meta length must match actions")
        keys = [a.key() for a in self.actions]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate canonical actions in set")

    def __len__(self):
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def __getitem__(self, i):
        return self.actions[i]

    def to_json(self) -> str:
        entries = [dict(a.to_dict(), meta=m) for a, m in zip(self.actions, self.meta)]
        return json.dumps(entries, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ActionSet":
        entries = json.loads(text)
        actions, meta = [], []
        for e in entries:
            m = e.pop("meta", {})
            actions.append(action_from_dict(e))
            meta.append(m)
        return cls(actions, meta)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "ActionSet":
        with open(path) as fh:
            return cls.from_json(fh.read())


def reference_config(grid: GridModel, substation: int) -> TopologyAction:
    """The all-busbar-1 configuration of a substation (used for reversion)."""
    return TopologyAction(substation, (1,) * int(grid.sub_n_slots[substation]))


def enumerate_topology_actions(grid: GridModel, substation: int) -> list[TopologyAction]:
    """All canonical two-busbar splits of one substation.

    Of the 2^(n-1) canonical configurations, the reference (all busbar 1)
    is dropped, as is any configuration where a busbar hosts only
    generators/loads without a line end (statically isolated injections).
    Deeper infeasibility, e.g. islanding the grid under the current line
    statuses, is left to simulation.
    """
    n = int(grid.sub_n_slots[substation])
    slot_line = grid.slot_line(substation)
    is_line = slot_line >= 0
    actions = []
    for tail in product((1, 2), repeat=n - 1):
        config = (1,) + tail
        if all(b == 1 for b in config):
            continue
        cfg = np.array(config)
        valid = True
        for bus in (1, 2):
            on_bus = cfg == bus
            if on_bus.any() and not (on_bus & is_line).any():
                valid = False
                break
        if valid:
            actions.append(TopologyAction(substation, config))
    return actions


def enumerate_all_topology_actions(grid: GridModel) -> list[TopologyAction]:
    """Every canonical topology action of the grid, substation order."""
    out = []
    for sub in range(grid.n_sub):
        out.extend(enumerate_topology_actions(grid, sub))
    return out


def apply_topology_action(grid: GridModel, topo: TopologyVector,
                          action: TopologyAction) -> TopologyVector:
    """Overwrite one substation's slot assignments; all other slots untouched."""
    return topo.with_substation(grid, action.substation, np.array(action.target_config))


def is_applied(grid: GridModel, topo_vect: np.ndarray, action: TopologyAction) -> bool:
    """True when the substation already sits in the action's configuration
    (executing it would not change the grid)."""
    start = grid.sub_slot_start[action.substation]
    current = topo_vect[start:start + grid.sub_n_slots[action.substation]]
    return bool(np.array_equal(current, np.asarray(action.target_config)))


def is_revertible_difference(grid: GridModel, topo: TopologyVector,
                             reference: TopologyVector) -> list[int]:
    """Substations where any slot assignment differs from the reference."""
    diff = topo.assignment != reference.assignment
    out = []
    for sub in range(grid.n_sub):
        start = grid.sub_slot_start[sub]
        if diff[start:start + grid.sub_n_slots[sub]].any():
            out.append(sub)
    return out
