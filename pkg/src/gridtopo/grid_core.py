"""Static grid model, bus-splitting electrical graph, and DC power flow.

A grid is a set of substations, each with two busbars.  Every element
(line end, generator, load) occupies one slot at its substation and is
assigned to busbar 1 or 2.  Slot order within a substation is fixed:
line ends first (by line id, origin end before extremity end when a line
touches the substation twice is impossible since self-loops are
rejected), then generators (by id), then loads (by id).  The global
topology vector concatenates the slots of all substations in id order.

Power flow uses the linearized DC model: B . theta = P with
flow_l = (theta_i - theta_j) / x_l, slack angle 0, per-unit throughout.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import spsolve

NODAL_BALANCE_TOL = 1e-9


class GridModelError(ValueError):
    """Raised when a grid description violates the model invariants."""


@dataclass(frozen=True)
class Line:
    id: int
    from_sub: int
    to_sub: int
    x: float
    limit: float


@dataclass(frozen=True)
class Generator:
    id: int
    substation: int


@dataclass(frozen=True)
class Load:
    id: int
    substation: int


@dataclass(frozen=True)
class InjectionSnapshot:
    """Active power injections, per-unit.  Loads are non-negative."""

    gen_p: np.ndarray
    load_p: np.ndarray


class GridModel:
    """Static network description with precomputed slot indexing.

    Slots are global indices into the topology vector.  For each line l,
    ``line_or_slot[l]`` / ``line_ex_slot[l]`` hold the slots of its two
    ends; generators and loads have one slot each.
    """

    def __init__(self, substations, lines, generators, loads, slack_substation):
        self.substations = [int(s) for s in substations]
        self.lines = list(lines)
        self.generators = list(generators)
        self.loads = list(loads)
        self.slack_substation = int(slack_substation)
        self._validate()
        self._index()

    def _validate(self):
        subs = self.substations
        if subs != list(range(len(subs))):
            raise GridModelError("substation ids must be contiguous 0..S-1")
        sub_set = set(subs)
        if self.slack_substation not in sub_set:
            raise GridModelError("slack substation does not exist")
        for name, items in (("line", self.lines), ("generator", self.generators),
                            ("load", self.loads)):
            if [e.id for e in items] != list(range(len(items))):
                raise GridModelError(f"{name} ids must be contiguous 0..n-1")
        for l in self.lines:
            if l.from_sub not in sub_set or l.to_sub not in sub_set:
                raise GridModelError(f"line {l.id} references a missing substation")
            if l.from_sub == l.to_sub:
                raise GridModelError(f"line {l.id} is a self-loop")
            if not (l.x > 0.0):
                raise GridModelError(f"line {l.id} reactance must be > 0")
            if not (l.limit > 0.0):
                raise GridModelError(f"line {l.id} thermal limit must be > 0")
        for g in self.generators:
            if g.substation not in sub_set:
                raise GridModelError(f"generator {g.id} references a missing substation")
        for d in self.loads:
            if d.substation not in sub_set:
                raise GridModelError(f"load {d.id} references a missing substation")
        if not any(g.substation == self.slack_substation for g in self.generators):
            raise GridModelError("slack substation must host at least one generator")

    def _index(self):
        self.n_sub = len(self.substations)
        self.n_line = len(self.lines)
        self.n_gen = len(self.generators)
        self.n_load = len(self.loads)

        self.line_from_sub = np.array([l.from_sub for l in self.lines], dtype=np.intp)
        self.line_to_sub = np.array([l.to_sub for l in self.lines], dtype=np.intp)
        self.line_x = np.array([l.x for l in self.lines], dtype=np.float64)
        self.line_limit = np.array([l.limit for l in self.lines], dtype=np.float64)
        self.gen_sub = np.array([g.substation for g in self.generators], dtype=np.intp)
        self.load_sub = np.array([d.substation for d in self.loads], dtype=np.intp)

        # Per-substation slot layout: line ends, then generators, then loads.
        per_sub: list[list[tuple[str, int]]] = [[] for _ in range(self.n_sub)]
        for i, l in enumerate(self.lines):
            per_sub[self.line_from_sub[i]].append(("or", i))
            per_sub[self.line_to_sub[i]].append(("ex", i))
        for i in range(self.n_gen):
            per_sub[self.gen_sub[i]].append(("gen", i))
        for i in range(self.n_load):
            per_sub[self.load_sub[i]].append(("load", i))

        self.line_or_slot = np.empty(self.n_line, dtype=np.intp)
        self.line_ex_slot = np.empty(self.n_line, dtype=np.intp)
        self.gen_slot = np.empty(self.n_gen, dtype=np.intp)
        self.load_slot = np.empty(self.n_load, dtype=np.intp)
        self.sub_slot_start = np.empty(self.n_sub, dtype=np.intp)
        self.sub_n_slots = np.empty(self.n_sub, dtype=np.intp)
        slot_tables = {"or": self.line_or_slot, "ex": self.line_ex_slot,
                       "gen": self.gen_slot, "load": self.load_slot}
        slot = 0
        for s in range(self.n_sub):
            self.sub_slot_start[s] = slot
            self.sub_n_slots[s] = len(per_sub[s])
            for kind, idx in per_sub[s]:
                slot_tables[kind][idx] = slot
                slot += 1
        self.n_slots = slot
        if any(n == 0 for n in self.sub_n_slots):
            raise GridModelError("every substation must host at least one element")
        # The angle reference: first generator at the slack substation.
        self.slack_gen = int(np.flatnonzero(self.gen_sub == self.slack_substation)[0])

    def sub_slots(self, sub: int) -> np.ndarray:
        """Global slot indices of substation ``sub`` (by position)."""
        start = self.sub_slot_start[sub]
        return np.arange(start, start + self.sub_n_slots[sub])

    def slot_line(self, sub: int) -> np.ndarray:
        """Per slot of ``sub``: line index occupying the slot, or -1 for injections."""
        start = self.sub_slot_start[sub]
        out = np.full(self.sub_n_slots[sub], -1, dtype=np.intp)
        for l in np.flatnonzero(self.line_from_sub == sub):
            out[self.line_or_slot[l] - start] = l
        for l in np.flatnonzero(self.line_to_sub == sub):
            out[self.line_ex_slot[l] - start] = l
        return out

    def to_dict(self) -> dict:
        return {
            "substations": [{"id": s} for s in self.substations],
            "lines": [{"id": l.id, "from": l.from_sub, "to": l.to_sub,
                       "x": l.x, "limit": l.limit} for l in self.lines],
            "generators": [{"id": g.id, "substation": g.substation} for g in self.generators],
            "loads": [{"id": d.id, "substation": d.substation} for d in self.loads],
            "slack": self.slack_substation,
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _require_fields(obj: dict, required: dict, where: str) -> dict:
    unknown = set(obj) - set(required)
    if unknown:
        raise GridModelError(f"unknown field(s) {sorted(unknown)} in {where}")
    missing = set(required) - set(obj)
    if missing:
        raise GridModelError(f"missing field(s) {sorted(missing)} in {where}")
    return {k: required[k](obj[k]) for k in required}


def grid_from_dict(doc: dict) -> GridModel:
    """Parse the grid JSON document.  Unknown fields are rejected."""
    top = _require_fields(doc, {"substations": list, "lines": list, "generators": list,
                                "loads": list, "slack": int}, "grid document")
    subs = [_require_fields(s, {"id": int}, "substation")["id"] for s in top["substations"]]
    lines = []
    for e in top["lines"]:
        v = _require_fields(e, {"id": int, "from": int, "to": int,
                                "x": float, "limit": float}, "line")
        lines.append(Line(v["id"], v["from"], v["to"], v["x"], v["limit"]))
    gens = [Generator(**_require_fields(g, {"id": int, "substation": int}, "generator"))
            for g in top["generators"]]
    loads = [Load(**_require_fields(d, {"id": int, "substation": int}, "load"))
             for d in top["loads"]]
    return GridModel(subs, lines, gens, loads, top["slack"])


def load_grid(path) -> GridModel:
    with open(path) as fh:
        return grid_from_dict(json.load(fh))


def save_grid(grid: GridModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(grid.to_dict(), fh, indent=1)


class TopologyVector:
    """Busbar assignment for every element slot plus per-line connected flags.

    The reference topology assigns every element to busbar 1 with all
    lines connected.  Instances are treated as immutable values; the
    ``with_*`` methods return modified copies.
    """

    __slots__ = ("assignment", "line_connected")

    def __init__(self, assignment: np.ndarray, line_connected: np.ndarray):
        self.assignment = np.asarray(assignment, dtype=np.int8)
        self.line_connected = np.asarray(line_connected, dtype=bool)

    @classmethod
    def reference(cls, grid: GridModel) -> "TopologyVector":
        return cls(np.ones(grid.n_slots, dtype=np.int8), np.ones(grid.n_line, dtype=bool))

    def copy(self) -> "TopologyVector":
        return TopologyVector(self.assignment.copy(), self.line_connected.copy())

    def with_substation(self, grid: GridModel, sub: int, config: np.ndarray) -> "TopologyVector":
        config = np.asarray(config, dtype=np.int8)
        if len(config) != grid.sub_n_slots[sub]:
            raise ValueError(f"config length {len(config)} != slot count of substation {sub}")
        out = self.copy()
        start = grid.sub_slot_start[sub]
        out.assignment[start:start + len(config)] = config
        return out

    def with_line(self, line: int, connected: bool) -> "TopologyVector":
        out = self.copy()
        out.line_connected[line] = connected
        return out

    def sub_config(self, grid: GridModel, sub: int) -> np.ndarray:
        start = grid.sub_slot_start[sub]
        return self.assignment[start:start + grid.sub_n_slots[sub]].copy()

    def __eq__(self, other):
        return (isinstance(other, TopologyVector)
                and np.array_equal(self.assignment, other.assignment)
                and np.array_equal(self.line_connected, other.line_connected))

    def __hash__(self):
        return hash((self.assignment.tobytes(), self.line_connected.tobytes()))


@dataclass
class ElectricalGraph:
    """Occupied (substation, busbar) nodes and element-to-node resolution.

    ``node_keys[k] = 2 * substation + (busbar - 1)`` identifies node k.
    Line endpoints are -1 for disconnected lines.
    """

    grid: GridModel
    node_keys: np.ndarray
    line_from_node: np.ndarray
    line_to_node: np.ndarray
    gen_node: np.ndarray
    load_node: np.ndarray
    slack_node: int

    @property
    def n_nodes(self) -> int:
        return len(self.node_keys)

    @property
    def connected(self) -> np.ndarray:
        return self.line_from_node >= 0


@dataclass
class PowerFlowResult:
    """Angles, flows and capacity ratios of one DC solve.

    ``rho`` is |flow| / thermal limit for connected lines and 0 for
    disconnected ones. ``slack_component`` marks nodes reachable from the
    slack; elements outside it indicate islanding to the environment.
    """

    theta: np.ndarray
    flow: np.ndarray
    rho: np.ndarray
    rho_max: float
    converged: bool
    line_connected: np.ndarray = field(default=None, repr=False)
    slack_component: np.ndarray = field(default=None, repr=False)


def build_electrical_graph(grid: GridModel, topo: TopologyVector) -> ElectricalGraph:
    """Enumerate occupied (substation, busbar) pairs under ``topo``.

    Ends of disconnected lines do not occupy a node; a busbar with no
    connected element is dropped.
    """
    if len(topo.assignment) != grid.n_slots:
        raise ValueError("topology length does not match grid")
    conn = topo.line_connected
    or_key = 2 * grid.line_from_sub + (topo.assignment[grid.line_or_slot].astype(np.intp) - 1)
    ex_key = 2 * grid.line_to_sub + (topo.assignment[grid.line_ex_slot].astype(np.intp) - 1)
    gen_key = 2 * grid.gen_sub + (topo.assignment[grid.gen_slot].astype(np.intp) - 1)
    load_key = 2 * grid.load_sub + (topo.assignment[grid.load_slot].astype(np.intp) - 1)

    occupied = np.concatenate([or_key[conn], ex_key[conn], gen_key, load_key])
    node_keys = np.unique(occupied)

    line_from_node = np.full(grid.n_line, -1, dtype=np.intp)
    line_to_node = np.full(grid.n_line, -1, dtype=np.intp)
    line_from_node[conn] = np.searchsorted(node_keys, or_key[conn])
    line_to_node[conn] = np.searchsorted(node_keys, ex_key[conn])
    gen_node = np.searchsorted(node_keys, gen_key)
    load_node = np.searchsorted(node_keys, load_key)
    slack_node = int(gen_node[grid.slack_gen])
    return ElectricalGraph(grid, node_keys, line_from_node, line_to_node,
                           gen_node, load_node, slack_node)


def _slack_component(n: int, f: np.ndarray, t: np.ndarray, slack: int) -> np.ndarray:
    """Union-find over the line edges; True for nodes reachable from slack."""
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in zip(f.tolist(), t.tolist()):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    root = find(slack)
    return np.fromiter((find(i) == root for i in range(n)), dtype=bool, count=n)


def _assemble_csc(rows: np.ndarray, cols: np.ndarray, vals: np.ndarray, m: int) -> csc_matrix:
    """Coalesced CSC from triplets (duplicates summed), column-major order."""
    rows = rows.astype(np.int32)
    cols = cols.astype(np.int32)
    order = np.lexsort((rows, cols))
    rows, cols, vals = rows[order], cols[order], vals[order]
    first = np.empty(len(rows), dtype=bool)
    first[0] = True
    first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    starts = np.flatnonzero(first)
    data = np.add.reduceat(vals, starts)
    indices = rows[starts]
    indptr = np.zeros(m + 1, dtype=np.int32)
    np.cumsum(np.bincount(cols[starts], minlength=m), out=indptr[1:])
    return csc_matrix((data, indices, indptr), shape=(m, m))


def solve_dc_power_flow(graph: ElectricalGraph, inj: InjectionSnapshot) -> PowerFlowResult:
    """Sparse DC solve: B . theta = P on the slack's connected component.

    The slack generator absorbs any injection imbalance.  Components
    without the slack are solvable only if they carry zero net injection
    everywhere (their angles and flows are zero); otherwise the result is
    flagged non-converged, signalling a potential blackout.
    """
    grid = graph.grid
    n = graph.n_nodes
    conn = graph.connected
    f = graph.line_from_node[conn]
    t = graph.line_to_node[conn]
    x = grid.line_x[conn]

    P = np.zeros(n)
    np.add.at(P, graph.gen_node, np.asarray(inj.gen_p, dtype=np.float64))
    np.subtract.at(P, graph.load_node, np.asarray(inj.load_p, dtype=np.float64))

    slack_comp = _slack_component(n, f, t, graph.slack_node)

    def failed():
        zero = np.zeros(grid.n_line)
        return PowerFlowResult(np.zeros(n), zero, zero.copy(), 0.0, False,
                               conn.copy(), slack_comp)

    if np.any(np.abs(P[~slack_comp]) > NODAL_BALANCE_TOL):
        return failed()

    # Slack absorbs the imbalance of its own component (= total imbalance
    # once the check above passed).
    P[graph.slack_node] -= P[slack_comp].sum()

    # Reduced susceptance matrix: slack-component nodes minus the slack.
    keep = slack_comp.copy()
    keep[graph.slack_node] = False
    m = int(keep.sum())
    theta = np.zeros(n)
    if m > 0:
        red = np.full(n, -1, dtype=np.intp)
        red[keep] = np.arange(m)
        b = 1.0 / x
        rf, rt = red[f], red[t]
        mf, mt = rf >= 0, rt >= 0
        both = mf & mt
        rows = np.concatenate([rf[mf], rt[mt], rf[both], rt[both]])
        cols = np.concatenate([rf[mf], rt[mt], rt[both], rf[both]])
        vals = np.concatenate([b[mf], b[mt], -b[both], -b[both]])
        B = _assemble_csc(rows, cols, vals, m)
        try:
            sol = spsolve(B, P[keep])
        except RuntimeError:
            return failed()
        if not np.all(np.isfinite(sol)):
            return failed()
        theta[keep] = sol

    flow = np.zeros(grid.n_line)
    flow[conn] = (theta[f] - theta[t]) / x
    result = PowerFlowResult(theta, flow, None, 0.0, True, conn.copy(), slack_comp)
    result.rho, result.rho_max = line_capacities(result, grid)
    return result


def line_capacities(result: PowerFlowResult, grid: GridModel):
    """Capacity ratios: rho = |flow| / limit on connected lines, else 0."""
    connected = result.line_connected
    rho = np.where(connected, np.abs(result.flow) / grid.line_limit, 0.0)
    rho_max = float(rho[connected].max()) if connected.any() else 0.0
    return rho, rho_max


def elements_islanded(graph: ElectricalGraph, slack_component: np.ndarray) -> bool:
    """True if any generator or load sits outside the slack's component."""
    return bool(np.any(~slack_component[graph.gen_node])
                or np.any(~slack_component[graph.load_node]))
