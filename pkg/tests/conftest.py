"""Shared fixtures: small reference graphs and random-network helpers."""

from __future__ import annotations

import numpy as np
import pytest

from matchnet import MatchingNetwork, ProductivityAssignment, load_network


def net_from_edges(edges, outcomes=None):
    """Build a network from (worker, firm) pairs; outcomes default to 1.0."""
    rows = []
    for k, (w, f) in enumerate(edges):
        y = 1.0 if outcomes is None else outcomes[k]
        rows.append((w, f, y))
    return load_network(rows)


@pytest.fixture
def alice_bob_net():
    """One four-cycle with the worked-example outcomes."""
    return load_network(
        [
            ("Alice", "Canon", 120.0),
            ("Alice", "Dell", 100.0),
            ("Bob", "Canon", 100.0),
            ("Bob", "Dell", 90.0),
        ]
    )


@pytest.fixture
def two_cycle_net():
    """Two disjoint four-cycles; the second solves d1=20, d2=900 under its labels."""
    return load_network(
        [
            ("Alice", "Canon", 120.0),
            ("Alice", "Dell", 100.0),
            ("Bob", "Canon", 100.0),
            ("Bob", "Dell", 90.0),
            ("Elizabeth", "Honda", 50.0),
            ("Elizabeth", "GeneralMotors", 40.0),
            ("Fred", "Honda", 40.0),
            ("Fred", "GeneralMotors", 50.0),
        ]
    )


@pytest.fixture
def two_cycle_instruments():
    from matchnet import InstrumentSet

    return InstrumentSet(
        z_alpha={"Alice": 16.0, "Bob": 14.0, "Elizabeth": 18.0, "Fred": 12.0},
        z_psi={
            "Canon": 170_000.0,
            "Dell": 110_000.0,
            "GeneralMotors": 160_000.0,
            "Honda": 190_000.0,
        },
    )


@pytest.fixture
def tree_net():
    """Acyclic graph (two tree components)."""
    return net_from_edges(
        [("i1", "j1"), ("i2", "j1"), ("i2", "j2"), ("i3", "j2"), ("i4", "j2"), ("i5", "j3")]
    )


@pytest.fixture
def single_cycle_net():
    """The tree plus one extra edge, creating exactly one four-cycle."""
    return net_from_edges(
        [
            ("i1", "j1"),
            ("i1", "j2"),
            ("i2", "j1"),
            ("i2", "j2"),
            ("i3", "j2"),
            ("i4", "j2"),
            ("i5", "j3"),
        ]
    )


@pytest.fixture
def two_component_net(single_cycle_net):
    """Same edges as single_cycle_net: {i5, j3} is a separate component."""
    return single_cycle_net


@pytest.fixture
def connected_variant_net():
    """two_component_net plus (i4, j3), which joins the components."""
    return net_from_edges(
        [
            ("i1", "j1"),
            ("i1", "j2"),
            ("i2", "j1"),
            ("i2", "j2"),
            ("i3", "j2"),
            ("i4", "j2"),
            ("i5", "j3"),
            ("i4", "j3"),
        ]
    )


@pytest.fixture
def snowball_fail_net(connected_variant_net):
    """Connected, but the snowball stalls: j3 reaches only one covered worker."""
    return connected_variant_net


@pytest.fixture
def snowball_pass_net():
    """snowball_fail_net plus (i5, j1): overlapping cycles cover everything."""
    return net_from_edges(
        [
            ("i1", "j1"),
            ("i1", "j2"),
            ("i2", "j1"),
            ("i2", "j2"),
            ("i3", "j2"),
            ("i4", "j2"),
            ("i5", "j3"),
            ("i4", "j3"),
            ("i5", "j1"),
        ]
    )


@pytest.fixture
def diameter_fail_net(snowball_pass_net):
    """Worker-side diameter 4: i3 and i5 share no firm."""
    return snowball_pass_net


@pytest.fixture
def diameter_pass_net():
    """diameter_fail_net plus (i3, j3): both within-side diameters drop to 2."""
    return net_from_edges(
        [
            ("i1", "j1"),
            ("i1", "j2"),
            ("i2", "j1"),
            ("i2", "j2"),
            ("i3", "j2"),
            ("i4", "j2"),
            ("i5", "j3"),
            ("i4", "j3"),
            ("i5", "j1"),
            ("i3", "j3"),
        ]
    )


@pytest.fixture
def loo_counterexample_net():
    """Leave-one-out connected, yet no seed makes the snowball cover it."""
    return net_from_edges(
        [
            ("i1", "j0"),
            ("i1", "j1"),
            ("i2", "j0"),
            ("i2", "j1"),
            ("i3", "j1"),
            ("i3", "j3"),
            ("i4", "j3"),
            ("i4", "j2"),
            ("i5", "j0"),
            ("i5", "j2"),
        ]
    )


@pytest.fixture
def sorting_example_net():
    """Nested 3x3 network used for the projection-bias worked example."""
    return net_from_edges(
        [("i1", "j1"), ("i1", "j2"), ("i1", "j3"), ("i2", "j2"), ("i2", "j3"), ("i3", "j3")]
    )


@pytest.fixture
def sorting_example_prod():
    return ProductivityAssignment(
        alpha={"i1": 4.0, "i2": 5.0, "i3": 2.0},
        psi={"j1": 10.0, "j2": 8.0, "j3": 1.0},
        beta=3.0,
    )


def complete_bipartite(n_workers: int, n_firms: int) -> MatchingNetwork:
    edges = [(f"w{i}", f"f{j}") for i in range(n_workers) for j in range(n_firms)]
    return net_from_edges(edges)


def random_network(rng: np.random.Generator, max_workers=6, max_firms=6, p=0.45):
    """Small random bipartite graph with at least one edge."""
    while True:
        nw = int(rng.integers(2, max_workers + 1))
        nf = int(rng.integers(2, max_firms + 1))
        adj = rng.random((nw, nf)) < p
        if adj.any():
            edges = [(f"w{i}", f"f{j}") for i in range(nw) for j in range(nf) if adj[i, j]]
            return net_from_edges(edges)


def random_connected_network(rng: np.random.Generator, max_workers=6, max_firms=6, p=0.5):
    from matchnet import is_connected

    while True:
        net = random_network(rng, max_workers, max_firms, p)
        if is_connected(net):
            return net


def random_assignment(rng: np.random.Generator, net, beta=None, spread=2.0):
    alpha = {w: float(rng.uniform(-spread, spread)) for w in net.workers}
    psi = {f: float(rng.uniform(-spread, spread)) for f in net.firms}
    b = float(rng.uniform(-1.5, 1.5)) if beta is None else float(beta)
    return ProductivityAssignment(alpha=alpha, psi=psi, beta=b)
