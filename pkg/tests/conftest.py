import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gridtopo.grid_core import Generator, GridModel, Line, Load, TopologyVector


def random_grid(rng: np.random.Generator, n_sub: int | None = None) -> GridModel:
    """Random connected grid: spanning tree plus extra chords."""
    if n_sub is None:
        n_sub = int(rng.integers(3, 13))
    lines = []
    for s in range(1, n_sub):
        other = int(rng.integers(0, s))
        lines.append((s, other))
    n_extra = int(rng.integers(1, max(2, n_sub)))
    for _ in range(n_extra):
        a, b = rng.choice(n_sub, size=2, replace=False)
        lines.append((int(a), int(b)))
    line_objs = [Line(i, f, t, float(rng.uniform(0.05, 0.5)), float(rng.uniform(0.3, 2.0)))
                 for i, (f, t) in enumerate(lines)]
    n_gen = int(rng.integers(1, max(2, n_sub // 2 + 1)))
    gens = [Generator(0, 0)] + [Generator(i, int(rng.integers(0, n_sub)))
                                for i in range(1, n_gen)]
    n_load = int(rng.integers(1, n_sub + 1))
    loads = [Load(i, int(rng.integers(0, n_sub))) for i in range(n_load)]
    return GridModel(list(range(n_sub)), line_objs, gens, loads, 0)


def random_topology(rng: np.random.Generator, grid: GridModel,
                    split_prob: float = 0.3, disconnect_prob: float = 0.1) -> TopologyVector:
    topo = TopologyVector.reference(grid)
    assignment = topo.assignment.copy()
    for sub in range(grid.n_sub):
        if rng.random() < split_prob:
            slots = grid.sub_slots(sub)
            assignment[slots] = rng.integers(1, 3, size=len(slots))
    connected = rng.random(grid.n_line) >= disconnect_prob
    return TopologyVector(assignment, connected)


def random_injections(rng: np.random.Generator, grid: GridModel):
    gen_p = rng.uniform(0.0, 1.5, grid.n_gen)
    load_p = rng.uniform(0.0, 1.0, grid.n_load)
    return gen_p, load_p


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
