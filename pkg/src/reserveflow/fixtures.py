"""Bundled test systems.

``five_bus`` is the package's reference instance: wind at buses 3 and 5, the
cheapest generator beside wind plant 1 at bus 3, the most expensive beside
wind plant 2 at bus 5, and tight limits on lines 1-5, 1-4 and 4-5.  Under a
system-wide reserve schedule the bus-5 unit wins the whole reserve auction
and its exports saturate the bus-5 cut, so errors at bus 3 strand the
reserves; deliverability-aware scenarios move reserve to bus 3 instead.
Parameters are documented in docs/fivebus.md.

``rts73`` builds a synthetic 73-bus, 120-line, three-zone system of the
RTS-GMLC scale, with a seeded generator fleet and VRE sites concentrated at
a handful of buses.
"""

from __future__ import annotations

import numpy as np

from .evalsim import GaussianSampler, HourInputs
from .grid import Generator, GridModel, Line, Node

FIVE_BUS_BASE_MVA = 100.0
FIVE_BUS_COV_PU2 = np.array([[0.141, 0.001],
                             [0.001, 0.141]])
FIVE_BUS_WIND_NODES = ("3", "5")
FIVE_BUS_TRAIN_SEED = 58
FIVE_BUS_TEST_SEED = 59


def five_bus() -> GridModel:
    nodes = [Node("1", zone="1"), Node("2", zone="1"), Node("3", zone="2"),
             Node("4", zone="2"), Node("5", zone="3")]
    lines = [
        Line("1-2", "1", "2", 0.0281, 480.0),
        Line("1-4", "1", "4", 0.0304, 278.0),
        Line("1-5", "1", "5", 0.04, 42.8),
        Line("2-3", "2", "3", 0.0108, 210.0),
        Line("3-4", "3", "4", 0.0297, 190.0),
        Line("4-5", "4", "5", 0.0297, 266.5),
    ]
    generators = [
        Generator("G1", "1", 0.0, 600.0, 29.0, 8.0, 8.0),
        Generator("G3", "3", 0.0, 260.0, 5.0, 8.0, 8.0),
        Generator("G5", "5", 0.0, 600.0, 35.0, 1.0, 1.0),
    ]
    return GridModel(nodes, lines, generators)


def five_bus_net_demand() -> np.ndarray:
    """Load minus wind point forecast per node (wind: 150 MW at 3 and 5)."""
    load = np.array([0.0, 390.0, 400.0, 310.0, 0.0])
    wind = five_bus_vre()
    return load - wind


def five_bus_vre() -> np.ndarray:
    return np.array([0.0, 0.0, 150.0, 0.0, 150.0])


def five_bus_sampler(seed: int = FIVE_BUS_TRAIN_SEED) -> GaussianSampler:
    return GaussianSampler(node_ids=FIVE_BUS_WIND_NODES,
                           cov=FIVE_BUS_COV_PU2,
                           base_mva=FIVE_BUS_BASE_MVA, seed=seed)


# ---------------------------------------------------------------------------
# synthetic 73-bus three-zone system
# ---------------------------------------------------------------------------

def rts73(seed: int = 7) -> GridModel:
    """73 buses in three zones, 120 lines, seeded generator fleet."""
    rng = np.random.default_rng(seed)
    nodes = []
    for z in range(3):
        for i in range(24):
            nid = z * 24 + i + 1
            nodes.append(Node(str(nid), zone=str(z + 1)))
    nodes.append(Node("73", zone="1"))

    lines = []

    def add_line(a: int, b: int, x: float, cap: float):
        lines.append(Line(f"{a}-{b}", str(a), str(b), x, cap))

    # intra-zone rings and chords: 37 lines per zone
    for z in range(3):
        base = z * 24
        for i in range(24):
            a = base + i + 1
            b = base + (i + 1) % 24 + 1
            add_line(a, b, float(rng.uniform(0.02, 0.08)),
                     float(rng.uniform(220.0, 420.0)))
        for k in range(13):
            a = base + int(rng.integers(1, 25))
            b = base + int(rng.integers(1, 25))
            while b == a or any(
                    {ln.from_node, ln.to_node} == {str(a), str(b)}
                    for ln in lines):
                a = base + int(rng.integers(1, 25))
                b = base + int(rng.integers(1, 25))
            add_line(a, b, float(rng.uniform(0.03, 0.10)),
                     float(rng.uniform(160.0, 320.0)))
    # inter-zone ties and the hub bus: 9 lines (total 120)
    add_line(13, 39, 0.05, 320.0)
    add_line(23, 41, 0.05, 320.0)
    add_line(7, 66, 0.06, 300.0)
    add_line(21, 56, 0.045, 260.0)
    add_line(42, 70, 0.05, 300.0)
    add_line(50, 64, 0.045, 240.0)
    add_line(1, 73, 0.03, 380.0)
    add_line(30, 73, 0.03, 380.0)
    add_line(60, 73, 0.03, 380.0)

    gens = []
    gen_buses = rng.choice(np.arange(1, 74), size=30, replace=False)
    for i, nb in enumerate(sorted(gen_buses)):
        pmax = float(rng.uniform(120.0, 420.0))
        gens.append(Generator(
            f"G{i + 1}", str(nb), 0.0, pmax,
            float(rng.uniform(8.0, 45.0)),
            float(rng.uniform(1.0, 7.0)),
            float(rng.uniform(1.0, 7.0))))
    return GridModel(nodes, lines, gens)


RTS73_VRE_NODES = ("21", "50", "56", "60", "64", "5", "33", "69")


def rts73_vre_profile(rng: np.random.Generator) -> np.ndarray:
    """VRE point forecast (MW) concentrated at the designated sites."""
    vre = np.zeros(73)
    caps = {"21": 220.0, "50": 260.0, "56": 200.0, "64": 240.0, "60": 180.0,
            "5": 120.0, "33": 140.0, "69": 120.0}
    for nid, cap in caps.items():
        vre[int(nid) - 1] = cap * float(rng.uniform(0.3, 0.8))
    return vre


def rts73_sampler(seed: int, scale: float = 1.0) -> GaussianSampler:
    """Correlated errors at the VRE sites (pu^2 on 100 MVA)."""
    k = len(RTS73_VRE_NODES)
    base_var = 0.10 * scale
    cov = np.full((k, k), 0.015 * scale)
    np.fill_diagonal(cov, base_var)
    return GaussianSampler(node_ids=RTS73_VRE_NODES, cov=cov,
                           base_mva=100.0, seed=seed)


def rts73_hours(grid: GridModel, n_hours: int = 24, k_train: int = 500,
                k_test: int = 500, seed: int = 11) -> list[HourInputs]:
    """Synthetic hourly inputs: demand profile, VRE forecasts, error draws."""
    rng = np.random.default_rng(seed)
    total_cap = grid.p_max.sum()
    share = rng.dirichlet(np.ones(grid.n_nodes) * 2.0)
    hours = []
    for h in range(n_hours):
        level = 0.45 + 0.15 * np.sin(2.0 * np.pi * h / 24.0)
        load = share * total_cap * level
        vre = rts73_vre_profile(rng)
        d_hat = load - vre
        sampler = rts73_sampler(seed=seed * 1000 + h)
        train = sampler.sample(k_train, grid.node_ids, d_hat, vre=vre,
                               seed=seed * 1000 + h)
        test = sampler.sample(k_test, grid.node_ids, d_hat, vre=vre,
                              seed=seed * 1000 + h + 500_000)
        hours.append(HourInputs(label=f"h{h:03d}", d_hat=d_hat, train=train,
                                test=test))
    return hours
