"""Graph-structural diagnostics for matching networks.

These checks decide which recovery targets the observed graph can support:
an additive model needs connectivity only, the interaction parameter needs a
four-cycle, firm-specific slopes need seed-and-snowballs coverage, and
rank-only recovery needs within-side diameters of two.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

from .exceptions import EmptyNetworkError, IncompleteAssignmentError
from .network import MatchingNetwork, ProductivityAssignment


@dataclass(frozen=True)
class FourCycle:
    """An edge-disjoint four-cycle: two workers and two firms, all matched.

    Canonical form stores the lexicographically smaller worker and firm
    first; the four edges are (w1,f1), (w1,f2), (w2,f1), (w2,f2).
    """

    workers: tuple[str, str]
    firms: tuple[str, str]

    def __post_init__(self):
        if self.workers[0] >= self.workers[1] or self.firms[0] >= self.firms[1]:
            raise ValueError("four-cycle must be in canonical (sorted) form")

    @property
    def edges(self) -> tuple[tuple[str, str], ...]:
        (w1, w2), (f1, f2) = self.workers, self.firms
        return ((w1, f1), (w1, f2), (w2, f1), (w2, f2))


def _component_of(net: MatchingNetwork, start: tuple[str, int]) -> set[tuple[str, int]]:
    """BFS over (key, side) nodes; side 0 = worker, 1 = firm."""
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for key, side in frontier:
            nbrs = net.worker_neighbors(key) if side == 0 else net.firm_neighbors(key)
            for other in nbrs:
                node = (other, 1 - side)
                if node not in seen:
                    seen.add(node)
                    nxt.append(node)
        frontier = nxt
    return seen


def connected_components(net: MatchingNetwork) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    """Partition nodes into components, each as (sorted workers, sorted firms).

    Components are ordered by their smallest contained key.
    """
    remaining = {(w, 0) for w in net.workers} | {(f, 1) for f in net.firms}
    comps = []
    while remaining:
        start = min(remaining)
        comp = _component_of(net, start)
        remaining -= comp
        ws = tuple(sorted(k for k, s in comp if s == 0))
        fs = tuple(sorted(k for k, s in comp if s == 1))
        comps.append((ws, fs))
    comps.sort(key=lambda c: min(c[0] + c[1]))
    return comps


def is_connected(net: MatchingNetwork) -> bool:
    return len(connected_components(net)) == 1


def largest_component(net: MatchingNetwork) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """The component with the most nodes (ties broken by component order)."""
    comps = connected_components(net)
    return max(comps, key=lambda c: (len(c[0]) + len(c[1]), c))


def enumerate_disjoint_four_cycles(net: MatchingNetwork) -> list[FourCycle]:
    """Deterministic greedy maximal edge-disjoint four-cycle packing.

    Firm pairs are visited in lexicographic order; their common workers are
    listed sorted and still-available workers are paired consecutively.  A
    cycle is accepted only if all four of its edges are unused.  The packing
    is maximal but not necessarily maximum; identical input yields an
    identical output list.
    """
    used: set[tuple[str, str]] = set()
    cycles: list[FourCycle] = []
    firms_sorted = sorted(net.firms)
    nbrs = {f: frozenset(net.firm_neighbors(f)) for f in net.firms}
    for f1, f2 in combinations(firms_sorted, 2):
        common = nbrs[f1] & nbrs[f2]
        if len(common) < 2:
            continue
        available = [
            w
            for w in sorted(common)
            if (w, f1) not in used and (w, f2) not in used
        ]
        for a, b in zip(available[::2], available[1::2]):
            cycle = FourCycle(workers=(a, b), firms=(f1, f2))
            if any(e in used for e in cycle.edges):  # cannot happen; guard anyway
                continue
            used.update(cycle.edges)
            cycles.append(cycle)
    return cycles


@dataclass(frozen=True)
class SnowballTrace:
    """Result of the iterative firm-seeded coverage check."""

    passed: bool
    seed: str | None
    worker_sets: tuple[frozenset[str], ...]
    firm_sets: tuple[frozenset[str], ...]


def _snowball_from(net: MatchingNetwork, seed: str) -> SnowballTrace:
    all_workers = set(net.workers)
    all_firms = set(net.firms)
    s_j: set[str] = {seed}
    worker_sets: list[frozenset[str]] = []
    firm_sets: list[frozenset[str]] = [frozenset(s_j)]
    while True:
        s_i = {w for w in all_workers if any(f in s_j for f in net.worker_neighbors(w))}
        worker_sets.append(frozenset(s_i))
        grown = set(s_j)
        for f in all_firms - s_j:
            if sum(1 for w in net.firm_neighbors(f) if w in s_i) >= 2:
                grown.add(f)
        if grown == s_j:
            break
        s_j = grown
        firm_sets.append(frozenset(s_j))
    passed = s_j == all_firms and worker_sets[-1] == all_workers
    return SnowballTrace(passed, seed, tuple(worker_sets), tuple(firm_sets))


def seed_and_snowballs(net: MatchingNetwork, seed: str | None = None) -> SnowballTrace:
    """Check firm-seeded snowball coverage, trying every firm when no seed is given.

    Each snowball step adds all workers linked to a reached firm, then every
    firm linked to at least two reached workers.  The property holds when
    some seed reaches every node; the trace records the sets at each step.
    """
    if net.n_matches == 0:
        raise EmptyNetworkError("cannot run the snowball check on an empty network")
    if seed is not None:
        if seed not in net._f_nbrs:
            raise KeyError(f"seed firm {seed!r} is not in the network")
        return _snowball_from(net, seed)
    first_trace: SnowballTrace | None = None
    for f in sorted(net.firms):
        trace = _snowball_from(net, f)
        if first_trace is None:
            first_trace = trace
        if trace.passed:
            return trace
    return first_trace  # type: ignore[return-value]  # nonempty network has >= 1 firm


def leave_one_out_connected(net: MatchingNetwork) -> bool:
    """True iff the graph stays connected after removing any single worker.

    Base connectivity is required; removing a worker removes its edges, and
    any firm left isolated counts as a disconnection.
    """
    if not is_connected(net):
        return False
    for w in net.workers:
        others = [x for x in net.workers if x != w]
        edges = {k: v for k, v in net._edges.items() if k[0] != w}
        sub = MatchingNetwork(others, net.firms, edges)
        if not is_connected(sub):
            return False
    return True


def _bfs_distances(net: MatchingNetwork, start: tuple[str, int]) -> dict[tuple[str, int], int]:
    dist = {start: 0}
    frontier = [start]
    d = 0
    while frontier:
        d += 1
        nxt = []
        for key, side in frontier:
            nbrs = net.worker_neighbors(key) if side == 0 else net.firm_neighbors(key)
            for other in nbrs:
                node = (other, 1 - side)
                if node not in dist:
                    dist[node] = d
                    nxt.append(node)
        frontier = nxt
    return dist


def _side_diameter(net: MatchingNetwork, side: int) -> float:
    keys = net.workers if side == 0 else net.firms
    if len(keys) < 2:
        return 0.0
    diam = 0.0
    for key in keys:
        dist = _bfs_distances(net, (key, side))
        for other in keys:
            if other == key:
                continue
            d = dist.get((other, side))
            if d is None:
                return math.inf
            diam = max(diam, float(d))
    return diam


def _side_at_most_two(net: MatchingNetwork, side: int) -> bool:
    # diam <= 2 on a side <=> every same-side pair shares a neighbor
    keys = net.workers if side == 0 else net.firms
    nbrs = {
        k: frozenset(net.worker_neighbors(k) if side == 0 else net.firm_neighbors(k))
        for k in keys
    }
    for a, b in combinations(keys, 2):
        if not (nbrs[a] & nbrs[b]):
            return False
    return True


def within_side_diameters(net: MatchingNetwork, check_only: bool = False):
    """Largest same-side shortest-path distances, inf when a side is split.

    With ``check_only=True`` returns a (bool, bool) pair certifying whether
    each side's diameter is at most two, short-circuiting the full BFS scan.
    """
    if check_only:
        return (_side_at_most_two(net, 0), _side_at_most_two(net, 1))
    return (_side_diameter(net, 0), _side_diameter(net, 1))


def informative_cycle_exists(net: MatchingNetwork, prod: ProductivityAssignment) -> bool:
    """True iff some four-cycle has distinct worker and firm productivities.

    Considers every four-cycle, not only the edge-disjoint selection.  This
    needs known productivities, so it applies to simulated or noiseless data.
    """
    prod.check_complete(net)
    firms_sorted = sorted(net.firms)
    nbrs = {f: frozenset(net.firm_neighbors(f)) for f in net.firms}
    for f1, f2 in combinations(firms_sorted, 2):
        if prod.psi[f1] == prod.psi[f2]:
            continue
        common = nbrs[f1] & nbrs[f2]
        if len(common) < 2:
            continue
        alphas = {prod.alpha[w] for w in common}
        if len(alphas) >= 2:
            return True
    return False


def count_four_cycles_total(net: MatchingNetwork) -> int:
    """Exact count of all four-cycles: sum over firm pairs of C(common, 2)."""
    if net.n_workers * net.n_firms >= 4000:
        # incidence-matrix path for larger graphs; exact integer arithmetic
        import numpy as np

        windex = {w: i for i, w in enumerate(net.workers)}
        inc = np.zeros((net.n_workers, net.n_firms), dtype=np.int64)
        for j, f in enumerate(net.firms):
            for w in net.firm_neighbors(f):
                inc[windex[w], j] = 1
        common = inc.T @ inc
        iu = np.triu_indices(net.n_firms, k=1)
        c = common[iu]
        return int((c * (c - 1) // 2).sum())
    total = 0
    nbrs = [frozenset(net.firm_neighbors(f)) for f in net.firms]
    for i, j in combinations(range(len(nbrs)), 2):
        c = len(nbrs[i] & nbrs[j])
        total += c * (c - 1) // 2
    return total


# -- aggregate report --------------------------------------------------------


@dataclass(frozen=True)
class DiagnosticsReport:
    """Everything the graph's structure says about what can be recovered."""

    n_workers: int
    n_firms: int
    n_matches: int
    connected: bool
    component_count: int
    largest_component_share: tuple[float, float]
    disjoint_cycle_count: int
    total_four_cycle_count: int
    cycle_node_coverage: tuple[float, float]
    seed_and_snowballs: bool
    snowball_seed: str | None
    leave_one_out: bool
    diameter_workers: float
    diameter_firms: float
    supports_additive: bool
    supports_interaction: bool
    supports_firm_slopes: bool
    supports_rank_recovery: bool
    overlapping_cycles_present: bool

    def to_dict(self) -> dict:
        def _num(x):
            return "inf" if math.isinf(x) else x

        return {
            "n_workers": self.n_workers,
            "n_firms": self.n_firms,
            "n_matches": self.n_matches,
            "connected": self.connected,
            "component_count": self.component_count,
            "largest_component_worker_share": self.largest_component_share[0],
            "largest_component_firm_share": self.largest_component_share[1],
            "disjoint_cycle_count": self.disjoint_cycle_count,
            "total_four_cycle_count": self.total_four_cycle_count,
            "cycle_worker_coverage": self.cycle_node_coverage[0],
            "cycle_firm_coverage": self.cycle_node_coverage[1],
            "seed_and_snowballs": self.seed_and_snowballs,
            "snowball_seed": self.snowball_seed,
            "leave_one_out": self.leave_one_out,
            "diameter_workers": _num(self.diameter_workers),
            "diameter_firms": _num(self.diameter_firms),
            "supports_additive": self.supports_additive,
            "supports_interaction": self.supports_interaction,
            "supports_firm_slopes": self.supports_firm_slopes,
            "supports_rank_recovery": self.supports_rank_recovery,
            "overlapping_cycles_present": self.overlapping_cycles_present,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        d = self.to_dict()
        lines = ["network diagnostics", "-" * 19]
        lines.append(f"workers / firms / matches : {self.n_workers} / {self.n_firms} / {self.n_matches}")
        lines.append(f"connected                 : {self.connected} ({self.component_count} components)")
        lines.append(
            "largest component share   : "
            f"{self.largest_component_share[0]:.3f} workers, {self.largest_component_share[1]:.3f} firms"
        )
        lines.append(f"edge-disjoint 4-cycles    : {self.disjoint_cycle_count}")
        lines.append(f"total 4-cycles            : {self.total_four_cycle_count}")
        lines.append(
            "cycle node coverage       : "
            f"{self.cycle_node_coverage[0]:.3f} workers, {self.cycle_node_coverage[1]:.3f} firms"
        )
        lines.append(f"seed-and-snowballs        : {self.seed_and_snowballs}"
                     + (f" (seed {self.snowball_seed})" if self.seed_and_snowballs else ""))
        lines.append(f"leave-one-out connected   : {self.leave_one_out}")
        lines.append(f"within-side diameters     : ({d['diameter_workers']}, {d['diameter_firms']})")
        lines.append("")
        lines.append("supported recovery targets")
        lines.append("-" * 26)
        lines.append(f"additive effects (connectivity)        : {self.supports_additive}")
        lines.append(f"interaction parameter (4-cycle)        : {self.supports_interaction}")
        lines.append(f"firm-specific slopes (snowballs)       : {self.supports_firm_slopes}")
        lines.append(f"rankings only (diameter-2)             : {self.supports_rank_recovery}")
        lines.append(
            "productivities under interaction       : "
            f"{self.supports_additive and self.supports_interaction}"
        )
        if not self.supports_interaction:
            lines.append("note: no 4-cycle, so the interaction parameter is not identified")
        if self.overlapping_cycles_present:
            lines.append(
                "note: overlapping (non-edge-disjoint) 4-cycles exist; "
                "only the edge-disjoint selection is used for estimation"
            )
        return "\n".join(lines)


def build_report(net: MatchingNetwork) -> DiagnosticsReport:
    """Run the full structural battery over a network."""
    comps = connected_components(net)
    connected = len(comps) == 1
    big_w, big_f = largest_component(net)
    share = (len(big_w) / net.n_workers, len(big_f) / net.n_firms)
    cycles = enumerate_disjoint_four_cycles(net)
    cyc_w = {w for c in cycles for w in c.workers}
    cyc_f = {f for c in cycles for f in c.firms}
    coverage = (len(cyc_w) / net.n_workers, len(cyc_f) / net.n_firms)
    trace = seed_and_snowballs(net)
    loo = leave_one_out_connected(net)
    diam_w, diam_f = within_side_diameters(net)
    total = count_four_cycles_total(net)
    return DiagnosticsReport(
        n_workers=net.n_workers,
        n_firms=net.n_firms,
        n_matches=net.n_matches,
        connected=connected,
        component_count=len(comps),
        largest_component_share=share,
        disjoint_cycle_count=len(cycles),
        total_four_cycle_count=total,
        cycle_node_coverage=coverage,
        seed_and_snowballs=trace.passed,
        snowball_seed=trace.seed if trace.passed else None,
        leave_one_out=loo,
        diameter_workers=diam_w,
        diameter_firms=diam_f,
        supports_additive=connected,
        supports_interaction=total >= 1,
        supports_firm_slopes=trace.passed,
        supports_rank_recovery=diam_w == 2 and diam_f == 2,
        overlapping_cycles_present=total > len(cycles),
    )
