"""Independent reference implementations used only to check the package.

Everything here is deliberately written with plain Python containers and
dense linear algebra, separate from the library's sparse code paths.
"""

from collections import defaultdict

import numpy as np

BALANCE_TOL = 1e-9


def dense_dc_solve(grid, topo, gen_p, load_p):
    """Dense-matrix DC solve from first principles.

    Returns (flow, converged, element_islanded).  Nodes are discovered
    with dictionaries, connectivity with BFS, and B theta = P is solved
    with numpy's dense solver.
    """
    nodes = {}

    def node_of(sub, bus):
        key = (int(sub), int(bus))
        if key not in nodes:
            nodes[key] = len(nodes)
        return nodes[key]

    line_ends = {}
    for l in range(grid.n_line):
        if not topo.line_connected[l]:
            continue
        fb = topo.assignment[grid.line_or_slot[l]]
        tb = topo.assignment[grid.line_ex_slot[l]]
        line_ends[l] = (node_of(grid.line_from_sub[l], fb),
                        node_of(grid.line_to_sub[l], tb))
    gen_nodes = [node_of(grid.gen_sub[g], topo.assignment[grid.gen_slot[g]])
                 for g in range(grid.n_gen)]
    load_nodes = [node_of(grid.load_sub[d], topo.assignment[grid.load_slot[d]])
                  for d in range(grid.n_load)]

    n = len(nodes)
    P = np.zeros(n)
    for g, node in enumerate(gen_nodes):
        P[node] += gen_p[g]
    for d, node in enumerate(load_nodes):
        P[node] -= load_p[d]

    adjacency = defaultdict(set)
    for (f, t) in line_ends.values():
        adjacency[f].add(t)
        adjacency[t].add(f)
    slack = gen_nodes[grid.slack_gen]
    seen = {slack}
    frontier = [slack]
    while frontier:
        cur = frontier.pop()
        for nxt in adjacency[cur]:
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)

    element_islanded = any(node not in seen for node in gen_nodes + load_nodes)
    outside = [i for i in range(n) if i not in seen]
    if any(abs(P[i]) > BALANCE_TOL for i in outside):
        return np.zeros(grid.n_line), False, element_islanded

    P[slack] -= sum(P[i] for i in seen)
    B = np.zeros((n, n))
    for l, (f, t) in line_ends.items():
        b = 1.0 / grid.line_x[l]
        B[f, f] += b
        B[t, t] += b
        B[f, t] -= b
        B[t, f] -= b
    keep = sorted(seen - {slack})
    theta = np.zeros(n)
    if keep:
        try:
            theta[keep] = np.linalg.solve(B[np.ix_(keep, keep)], P[keep])
        except np.linalg.LinAlgError:
            return np.zeros(grid.n_line), False, element_islanded

    flow = np.zeros(grid.n_line)
    for l, (f, t) in line_ends.items():
        flow[l] = (theta[f] - theta[t]) / grid.line_x[l]
    return flow, True, element_islanded


def dense_rho(grid, topo, flow):
    rho = np.zeros(grid.n_line)
    for l in range(grid.n_line):
        if topo.line_connected[l]:
            rho[l] = abs(flow[l]) / grid.line_limit[l]
    rho_max = max((rho[l] for l in range(grid.n_line) if topo.line_connected[l]),
                  default=0.0)
    return rho, rho_max


def slot_diff_substations(grid, topo, reference):
    """Brute-force slot-by-slot diff, grouped by substation."""
    changed = []
    for sub in range(grid.n_sub):
        for slot in range(grid.sub_slot_start[sub],
                          grid.sub_slot_start[sub] + grid.sub_n_slots[sub]):
            if topo.assignment[slot] != reference.assignment[slot]:
                changed.append(sub)
                break
    return changed
