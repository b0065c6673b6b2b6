"""Shared small systems for tests."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for oracles.py

from reserveflow.grid import Generator, GridModel, Line, Node


@pytest.fixture
def two_bus_grid():
    """One cheap and one dear generator on opposite ends of a single line."""
    return GridModel(
        nodes=[Node("1"), Node("2")],
        lines=[Line("L1", "1", "2", reactance=0.1, f_max=120.0)],
        generators=[
            Generator("G1", "1", 0.0, 300.0, 10.0, 2.0, 2.0),
            Generator("G2", "2", 0.0, 300.0, 30.0, 2.0, 2.0),
        ],
    )


@pytest.fixture
def three_bus_grid():
    """Meshed triangle with three generators of distinct costs."""
    return GridModel(
        nodes=[Node("1"), Node("2"), Node("3")],
        lines=[Line("L12", "1", "2", 0.1, 80.0),
               Line("L23", "2", "3", 0.1, 80.0),
               Line("L31", "3", "1", 0.1, 80.0)],
        generators=[
            Generator("G1", "1", 0.0, 200.0, 8.0, 1.0, 1.0),
            Generator("G2", "2", 0.0, 200.0, 16.0, 1.5, 1.5),
            Generator("G3", "3", 0.0, 200.0, 28.0, 2.0, 2.0),
        ],
    )


def random_grid(rng, n_nodes=4, congested=False):
    """Ring-plus-chord grid with randomized parameters (always connected)."""
    nodes = [Node(str(i + 1)) for i in range(n_nodes)]
    lines = []
    for i in range(n_nodes):
        j = (i + 1) % n_nodes
        lines.append(Line(f"L{i + 1}-{j + 1}", str(i + 1), str(j + 1),
                          float(rng.uniform(0.05, 0.3)),
                          float(rng.uniform(40.0, 90.0) if congested
                                else rng.uniform(150.0, 300.0))))
    if n_nodes > 3:
        lines.append(Line("Lx", "1", "3", float(rng.uniform(0.05, 0.3)),
                          float(rng.uniform(40.0, 90.0) if congested
                                else rng.uniform(150.0, 300.0))))
    gens = []
    for i in range(n_nodes):
        gens.append(Generator(f"G{i + 1}", str(i + 1), 0.0,
                              float(rng.uniform(80.0, 250.0)),
                              float(rng.uniform(5.0, 40.0)),
                              float(rng.uniform(0.5, 4.0)),
                              float(rng.uniform(0.5, 4.0))))
    return GridModel(nodes, lines, gens)


def random_demand(rng, grid, load_factor=0.5):
    share = rng.dirichlet(np.ones(grid.n_nodes))
    return share * grid.p_max.sum() * load_factor
