"""Immutable bipartite matching networks with per-edge outcomes.

A matching network records which worker-firm pairs were observed together
and the (averaged) outcome of each observed match.  Construction is the only
mutating phase; instances are value-immutable afterwards and safe to share
across threads.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping, Sequence

from .exceptions import (
    EdgeListParseError,
    EmptyNetworkError,
    IncompleteAssignmentError,
    MissingEdgeError,
)

EDGE_FILE_HEADER = ("worker", "firm", "outcome")


class Side(Enum):
    WORKER = "worker"
    FIRM = "firm"


@dataclass(frozen=True, order=True)
class NodeId:
    """A node identity: which side of the bipartition plus an opaque string key."""

    side: Side
    key: str

    def __post_init__(self):
        if not self.key:
            raise ValueError("node key must be a nonempty string")


@dataclass(frozen=True)
class Match:
    """One observed worker-firm match.

    ``multiplicity`` counts how many raw rows were averaged into ``outcome``;
    it is audit metadata only and never enters estimation.
    """

    worker: str
    firm: str
    outcome: float
    multiplicity: int = 1

    def __post_init__(self):
        if not math.isfinite(self.outcome):
            raise ValueError(f"outcome for ({self.worker}, {self.firm}) is not finite")
        if self.multiplicity < 1:
            raise ValueError("multiplicity must be a positive integer")


class MatchingNetwork:
    """Bipartite graph of observed matches, keyed by raw string identifiers.

    Node ordering is first-appearance order of the edge rows used to build
    the network.  At most one match exists per (worker, firm) pair.
    """

    __slots__ = ("_workers", "_firms", "_edges", "_w_nbrs", "_f_nbrs")

    def __init__(
        self,
        workers: Sequence[str],
        firms: Sequence[str],
        edges: Mapping[tuple[str, str], tuple[float, int]],
    ):
        self._workers = tuple(workers)
        self._firms = tuple(firms)
        self._edges = dict(edges)
        w_nbrs: dict[str, list[str]] = {w: [] for w in self._workers}
        f_nbrs: dict[str, list[str]] = {f: [] for f in self._firms}
        for (w, f) in self._edges:
            w_nbrs[w].append(f)
            f_nbrs[f].append(w)
        self._w_nbrs = {w: tuple(v) for w, v in w_nbrs.items()}
        self._f_nbrs = {f: tuple(v) for f, v in f_nbrs.items()}

    # -- basic accessors ---------------------------------------------------

    @property
    def workers(self) -> tuple[str, ...]:
        return self._workers

    @property
    def firms(self) -> tuple[str, ...]:
        return self._firms

    @property
    def n_workers(self) -> int:
        return len(self._workers)

    @property
    def n_firms(self) -> int:
        return len(self._firms)

    @property
    def n_matches(self) -> int:
        return len(self._edges)

    def has_match(self, worker: str, firm: str) -> bool:
        return (worker, firm) in self._edges

    def outcome(self, worker: str, firm: str) -> float:
        try:
            return self._edges[(worker, firm)][0]
        except KeyError:
            raise MissingEdgeError(f"no match between worker {worker!r} and firm {firm!r}")

    def multiplicity(self, worker: str, firm: str) -> int:
        try:
            return self._edges[(worker, firm)][1]
        except KeyError:
            raise MissingEdgeError(f"no match between worker {worker!r} and firm {firm!r}")

    def worker_neighbors(self, worker: str) -> tuple[str, ...]:
        return self._w_nbrs[worker]

    def firm_neighbors(self, firm: str) -> tuple[str, ...]:
        return self._f_nbrs[firm]

    def matches(self) -> Iterator[Match]:
        for (w, f), (y, m) in self._edges.items():
            yield Match(w, f, y, m)

    def node_ids(self) -> Iterator[NodeId]:
        for w in self._workers:
            yield NodeId(Side.WORKER, w)
        for f in self._firms:
            yield NodeId(Side.FIRM, f)

    # -- derived views -----------------------------------------------------

    def canonical_edges(self) -> list[tuple[str, str, float]]:
        """Edge list sorted by (worker key, firm key); the export order."""
        return [(w, f, self._edges[(w, f)][0]) for (w, f) in sorted(self._edges)]

    def with_outcomes(self, outcomes: Mapping[tuple[str, str], float]) -> "MatchingNetwork":
        """Copy of the network with outcomes replaced; structure unchanged."""
        edges = {}
        for key, (y, m) in self._edges.items():
            new_y = float(outcomes.get(key, y))
            if not math.isfinite(new_y):
                raise ValueError(f"replacement outcome for {key} is not finite")
            edges[key] = (new_y, m)
        return MatchingNetwork(self._workers, self._firms, edges)

    def subnetwork(self, workers: Iterable[str], firms: Iterable[str]) -> "MatchingNetwork":
        """Restriction to the given nodes, keeping only matches inside them."""
        wset, fset = set(workers), set(firms)
        edges = {k: v for k, v in self._edges.items() if k[0] in wset and k[1] in fset}
        if not edges:
            raise EmptyNetworkError("the requested restriction contains no matches")
        kept_w = [w for w in self._workers if w in wset]
        kept_f = [f for f in self._firms if f in fset]
        return MatchingNetwork(kept_w, kept_f, edges)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MatchingNetwork):
            return NotImplemented
        return (
            self._workers == other._workers
            and self._firms == other._firms
            and self._edges == other._edges
        )

    def __hash__(self):
        return hash((self._workers, self._firms, tuple(sorted(self._edges.items()))))

    def __repr__(self):
        return (
            f"MatchingNetwork(workers={self.n_workers}, firms={self.n_firms}, "
            f"matches={self.n_matches})"
        )


@dataclass(frozen=True)
class ProductivityAssignment:
    """Latent worker/firm productivities plus the interaction parameter."""

    alpha: Mapping[str, float]
    psi: Mapping[str, float]
    beta: float = 0.0

    def __post_init__(self):
        for name, mapping in (("alpha", self.alpha), ("psi", self.psi)):
            for key, value in mapping.items():
                if not math.isfinite(value):
                    raise ValueError(f"{name}[{key!r}] is not finite")
        if not math.isfinite(self.beta):
            raise ValueError("beta is not finite")

    def theta(self, worker: str, firm: str) -> float:
        """Systematic outcome a + p + beta*a*p for the given pair."""
        a = self.alpha[worker]
        p = self.psi[firm]
        return a + p + self.beta * a * p

    def check_complete(self, net: MatchingNetwork) -> None:
        missing = [w for w in net.workers if w not in self.alpha]
        missing += [f for f in net.firms if f not in self.psi]
        if missing:
            raise IncompleteAssignmentError(
                f"assignment is missing productivities for: {', '.join(sorted(missing))}"
            )


def load_network(
    edge_rows: Iterable[tuple[str, str, object]],
) -> MatchingNetwork:
    """Build a network from (worker_key, firm_key, outcome) rows.

    Duplicate (worker, firm) rows are collapsed to a single match whose
    outcome is the arithmetic mean of the raw outcomes and whose
    multiplicity is the row count.  Node order is first appearance.
    """
    workers: list[str] = []
    firms: list[str] = []
    seen_w: set[str] = set()
    seen_f: set[str] = set()
    sums: dict[tuple[str, str], float] = {}
    counts: dict[tuple[str, str], int] = {}
    n_rows = 0
    for idx, row in enumerate(edge_rows):
        try:
            w, f, y = row
        except (TypeError, ValueError):
            raise EdgeListParseError("expected (worker, firm, outcome)", row=idx)
        w, f = str(w), str(f)
        if not w or not f:
            raise EdgeListParseError("worker and firm keys must be nonempty", row=idx)
        try:
            y = float(y)
        except (TypeError, ValueError):
            raise EdgeListParseError(f"outcome {y!r} is not numeric", row=idx)
        if not math.isfinite(y):
            raise EdgeListParseError(f"outcome {y!r} is not finite", row=idx)
        if w not in seen_w:
            seen_w.add(w)
            workers.append(w)
        if f not in seen_f:
            seen_f.add(f)
            firms.append(f)
        key = (w, f)
        sums[key] = sums.get(key, 0.0) + y
        counts[key] = counts.get(key, 0) + 1
        n_rows += 1
    if n_rows == 0:
        raise EmptyNetworkError("edge list is empty")
    edges = {k: (sums[k] / counts[k], counts[k]) for k in sums}
    return MatchingNetwork(workers, firms, edges)


def synthesize_outcomes(
    net: MatchingNetwork,
    prod: ProductivityAssignment,
    noise: Mapping[tuple[str, str], float] | None = None,
) -> MatchingNetwork:
    """Replace every outcome with a + p + beta*a*p (+ noise); structure unchanged."""
    prod.check_complete(net)
    noise = noise or {}
    outcomes = {}
    for m in net.matches():
        key = (m.worker, m.firm)
        outcomes[key] = prod.theta(m.worker, m.firm) + float(noise.get(key, 0.0))
    return net.with_outcomes(outcomes)


# -- edge-list file format -------------------------------------------------


def read_edge_file(path, delimiter: str = ",") -> MatchingNetwork:
    """Load a delimiter-separated edge file with header ``worker,firm,outcome``."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return _read_edge_stream(fh, delimiter)


def _read_edge_stream(fh, delimiter: str = ",") -> MatchingNetwork:
    reader = csv.reader(fh, delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyNetworkError("edge file is empty")
    if tuple(h.strip().lower() for h in header) != EDGE_FILE_HEADER:
        raise EdgeListParseError(
            f"expected header {','.join(EDGE_FILE_HEADER)!r}, got {','.join(header)!r}", row=0
        )

    def rows():
        for i, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise EdgeListParseError(f"expected 3 fields, got {len(row)}", row=i)
            yield row[0].strip(), row[1].strip(), row[2].strip()

    return load_network(rows())


def write_edge_file(net: MatchingNetwork, path, delimiter: str = ",") -> None:
    """Write the canonical (sorted) edge list with the standard header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(EDGE_FILE_HEADER)
        for w, f, y in net.canonical_edges():
            writer.writerow([w, f, repr(y)])


def edge_file_text(net: MatchingNetwork, delimiter: str = ",") -> str:
    """Canonical edge list as a string (same content as :func:`write_edge_file`)."""
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter)
    writer.writerow(EDGE_FILE_HEADER)
    for w, f, y in net.canonical_edges():
        writer.writerow([w, f, repr(y)])
    return buf.getvalue()
