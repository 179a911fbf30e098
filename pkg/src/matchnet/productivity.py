"""Recovery of node productivities and misspecification analytics.

Three routes, by interaction regime: additive projection when the
interaction parameter is zero, alternating least squares on the transformed
multiplicative model when it is not, and rank-only recovery when the model
is merely monotone.  Also the closed-form bias that the additive projection
suffers when the data actually carry interactions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .diagnostics import connected_components, within_side_diameters
from .exceptions import (
    DegenerateUpdateError,
    MonotonicityViolationError,
    NotIdentifiedError,
    UndefinedCorrelationError,
)
from .network import MatchingNetwork, ProductivityAssignment

# Below this edge density the normal equations are factored sparsely.
SPARSE_DENSITY_CUTOFF = 0.05

SERIATION_TIE_TOL = 1e-12


def _require_connected(net: MatchingNetwork, what: str) -> None:
    comps = connected_components(net)
    if len(comps) > 1:
        raise NotIdentifiedError(
            f"{what} requires a connected network, but this one has {len(comps)} "
            "components; restrict to a single component (e.g. the largest) first"
        )


def _edge_arrays(net: MatchingNetwork):
    """Dense integer indexing of the edge list: (wi, fi, y, windex, findex)."""
    windex = {w: i for i, w in enumerate(net.workers)}
    findex = {f: i for i, f in enumerate(net.firms)}
    edges = list(net.matches())
    wi = np.array([windex[m.worker] for m in edges], dtype=np.intp)
    fi = np.array([findex[m.firm] for m in edges], dtype=np.intp)
    y = np.array([m.outcome for m in edges])
    return wi, fi, y, windex, findex


def _normal_equation_solver(
    net: MatchingNetwork, reference_worker: str
) -> tuple[Callable[[np.ndarray], np.ndarray], list[str], np.ndarray, np.ndarray]:
    """Factor the (I+J-1)-dim normal equations of the additive projection.

    The system matrix is the signless Laplacian block with the reference
    worker's row and column dropped.  Returns a solve callable plus the free
    worker order and the edge index arrays.
    """
    wi, fi, _, windex, _ = _edge_arrays(net)
    free_workers = [w for w in net.workers if w != reference_worker]
    free_index = {w: i for i, w in enumerate(free_workers)}
    W1, F = len(free_workers), net.n_firms
    m = W1 + F
    # row index of each edge's worker in the reduced system (-1 for reference)
    w_row = np.array(
        [free_index.get(net.workers[i], -1) for i in wi], dtype=np.intp
    )
    f_row = fi + W1
    rows, cols, vals = [], [], []
    # diagonal: node degrees
    deg_w = np.bincount(w_row[w_row >= 0], minlength=W1).astype(float)
    deg_f = np.bincount(fi, minlength=F).astype(float)
    rows.extend(range(W1))
    cols.extend(range(W1))
    vals.extend(deg_w)
    rows.extend(range(W1, m))
    cols.extend(range(W1, m))
    vals.extend(deg_f)
    # off-diagonal: adjacency between free workers and firms
    mask = w_row >= 0
    rows.extend(w_row[mask])
    cols.extend(f_row[mask])
    vals.extend(np.ones(int(mask.sum())))
    rows.extend(f_row[mask])
    cols.extend(w_row[mask])
    vals.extend(np.ones(int(mask.sum())))
    density = net.n_matches / (net.n_workers * net.n_firms)
    if density < SPARSE_DENSITY_CUTOFF and m > 2:
        Q = sp.csc_matrix((vals, (rows, cols)), shape=(m, m))
        lu = spla.splu(Q)
        solve = lu.solve
    else:
        Q = np.zeros((m, m))
        np.add.at(Q, (np.array(rows, dtype=np.intp), np.array(cols, dtype=np.intp)), vals)
        lu = None
        solve = lambda b: np.linalg.solve(Q, b)  # noqa: E731
    return solve, free_workers, w_row, f_row


@dataclass(frozen=True)
class TwfeProjection:
    """Additive projection with the reference worker pinned to zero."""

    alpha: Mapping[str, float]
    psi: Mapping[str, float]
    normalized_worker: str
    residual_norm: float


def twfe_project(
    net: MatchingNetwork,
    targets: Mapping[tuple[str, str], float] | None = None,
    reference_worker: str | None = None,
) -> TwfeProjection:
    """Least-squares additive fit target ~ alpha_w + psi_f with alpha_ref = 0.

    ``targets`` defaults to the stored outcomes; pass noiseless systematic
    values to study the projection itself.  The network must be connected,
    otherwise the split components cannot share a normalization.
    """
    _require_connected(net, "the additive projection")
    if reference_worker is None:
        reference_worker = net.workers[0]
    if reference_worker not in set(net.workers):
        raise KeyError(f"reference worker {reference_worker!r} is not in the network")
    wi, fi, y, windex, findex = _edge_arrays(net)
    if targets is not None:
        t = np.array([targets[(m.worker, m.firm)] for m in net.matches()])
    else:
        t = y
    solve, free_workers, w_row, f_row = _normal_equation_solver(net, reference_worker)
    W1 = len(free_workers)
    rhs = np.zeros(W1 + net.n_firms)
    mask = w_row >= 0
    np.add.at(rhs, w_row[mask], t[mask])
    np.add.at(rhs, f_row, t)
    c = solve(rhs)
    alpha = {reference_worker: 0.0}
    alpha.update({w: float(c[i]) for i, w in enumerate(free_workers)})
    psi = {f: float(c[W1 + j]) for f, j in findex.items()}
    fitted = np.where(mask, c[np.maximum(w_row, 0)], 0.0) + c[f_row]
    residual_norm = float(np.linalg.norm(t - fitted))
    return TwfeProjection(alpha, psi, reference_worker, residual_norm)


@dataclass(frozen=True)
class MisspecificationBias:
    """Closed-form gap between the additive projection and the (normalized) truth.

    Bias for node v is beta times the v-th entry of Lambda @ g, where Lambda
    inverts the signless Laplacian and g collects the per-node sums of the
    omitted interaction products.  The truth is location-normalized: worker
    values are relative to the reference worker, firm values absorb it.
    """

    alpha: Mapping[str, float]
    psi: Mapping[str, float]
    reference_worker: str


def misspecification_bias(
    net: MatchingNetwork,
    prod: ProductivityAssignment,
    reference_worker: str | None = None,
) -> MisspecificationBias:
    """Per-node additive-projection bias under an interacting data process.

    Equals ``twfe_project`` on noiseless systematic outcomes minus the
    normalized truth (alpha - alpha_ref, psi + alpha_ref), without running
    the projection.  Every term is proportional to the interaction
    parameter, so it vanishes when that parameter is zero.
    """
    _require_connected(net, "the bias decomposition")
    prod.check_complete(net)
    if reference_worker is None:
        reference_worker = net.workers[0]
    if reference_worker not in set(net.workers):
        raise KeyError(f"reference worker {reference_worker!r} is not in the network")
    solve, free_workers, w_row, f_row = _normal_equation_solver(net, reference_worker)
    W1 = len(free_workers)
    h = np.array([prod.alpha[m.worker] * prod.psi[m.firm] for m in net.matches()])
    rhs = np.zeros(W1 + net.n_firms)
    mask = w_row >= 0
    np.add.at(rhs, w_row[mask], h[mask])
    np.add.at(rhs, f_row, h)
    bias_vec = prod.beta * solve(rhs)
    alpha = {reference_worker: 0.0}
    alpha.update({w: float(bias_vec[i]) for i, w in enumerate(free_workers)})
    psi = {f: float(bias_vec[W1 + j]) for j, f in enumerate(net.firms)}
    return MisspecificationBias(alpha, psi, reference_worker)


@dataclass(frozen=True)
class AlsFit:
    """Alternating-least-squares fit of the transformed multiplicative model.

    ``alpha_prime``/``psi_prime`` solve (1 + beta*y) ~ a' * p' with the firm
    vector held at unit norm; ``alpha``/``psi`` are the back-transformed
    productivities.  When no reference worker pins the scale, the remaining
    one-parameter scale freedom is reported via ``scale_fixed``.
    """

    alpha_prime: Mapping[str, float]
    psi_prime: Mapping[str, float]
    alpha: Mapping[str, float]
    psi: Mapping[str, float]
    beta_input: float
    objective_trace: tuple[float, ...]
    iterations: int
    converged: bool
    scale_fixed: bool


def als_fit(
    net: MatchingNetwork,
    beta_hat: float,
    init_psi: Mapping[str, float] | None = None,
    tol: float = 1e-10,
    max_iter: int = 500,
    reference_worker: str | None = None,
    reference_value: float = 0.0,
) -> AlsFit:
    """Fit productivities for a nonzero interaction parameter.

    Transforms outcomes to y' = 1 + beta*y and alternates the two
    closed-form single-regressor updates, rescaling the firm vector to unit
    norm after every sweep.  Stops when the relative objective decrease
    falls below ``tol`` or after ``max_iter`` sweeps.  The objective is
    non-increasing across sweeps (exact arithmetic).
    """
    if beta_hat == 0.0:
        raise ValueError(
            "beta is zero: the model is additive, use twfe_project instead of als_fit"
        )
    _require_connected(net, "alternating least squares")
    wi, fi, y, windex, findex = _edge_arrays(net)
    W, F = net.n_workers, net.n_firms
    if np.bincount(wi, minlength=W).min() < 1 or np.bincount(fi, minlength=F).min() < 1:
        raise DegenerateUpdateError("every node must have degree at least one")
    yprime = 1.0 + beta_hat * y
    if init_psi is None:
        psi = np.full(F, 1.0 / math.sqrt(F))
    else:
        missing = [f for f in net.firms if f not in init_psi]
        if missing:
            raise ValueError(f"init_psi is missing firms: {', '.join(sorted(missing))}")
        psi = np.array([float(init_psi[f]) for f in net.firms])
        nrm = np.linalg.norm(psi)
        if nrm == 0.0:
            raise ValueError("init_psi is the zero vector; the unit-norm constraint cannot hold")
        psi = psi / nrm
    alpha = np.zeros(W)
    trace: list[float] = []
    prev = math.inf
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        den_a = np.bincount(wi, weights=psi[fi] ** 2, minlength=W)
        if np.any(den_a == 0.0):
            raise DegenerateUpdateError("a worker update has a zero denominator")
        alpha = np.bincount(wi, weights=psi[fi] * yprime, minlength=W) / den_a
        den_p = np.bincount(fi, weights=alpha[wi] ** 2, minlength=F)
        if np.any(den_p == 0.0):
            raise DegenerateUpdateError("a firm update has a zero denominator")
        psi = np.bincount(fi, weights=alpha[wi] * yprime, minlength=F) / den_p
        c = np.linalg.norm(psi)
        if c == 0.0:
            raise DegenerateUpdateError("the firm vector collapsed to zero")
        psi /= c
        alpha *= c
        resid = yprime - alpha[wi] * psi[fi]
        obj = float(resid @ resid)
        trace.append(obj)
        if obj == 0.0 or (math.isfinite(prev) and prev - obj <= tol * prev):
            converged = True
            break
        prev = obj

    scale_fixed = reference_worker is not None
    if scale_fixed:
        if reference_worker not in windex:
            raise KeyError(f"reference worker {reference_worker!r} is not in the network")
        a_ref = alpha[windex[reference_worker]]
        if a_ref == 0.0:
            raise DegenerateUpdateError(
                "the reference worker's fitted value is zero; its scale cannot be pinned"
            )
        c = (1.0 + beta_hat * reference_value) / a_ref
        alpha = alpha * c
        psi = psi / c
    alpha_prime = {w: float(alpha[i]) for w, i in windex.items()}
    psi_prime = {f: float(psi[j]) for f, j in findex.items()}
    back_a = {w: (v - 1.0) / beta_hat for w, v in alpha_prime.items()}
    back_p = {f: (v - 1.0) / beta_hat for f, v in psi_prime.items()}
    return AlsFit(
        alpha_prime=alpha_prime,
        psi_prime=psi_prime,
        alpha=back_a,
        psi=back_p,
        beta_input=beta_hat,
        objective_trace=tuple(trace),
        iterations=sweeps,
        converged=converged,
        scale_fixed=scale_fixed,
    )


@dataclass(frozen=True)
class SeriationRanks:
    """Total orders of workers and firms, lowest first, ties grouped."""

    worker_groups: tuple[tuple[str, ...], ...]
    firm_groups: tuple[tuple[str, ...], ...]

    @property
    def worker_order(self) -> tuple[str, ...]:
        return tuple(w for g in self.worker_groups for w in g)

    @property
    def firm_order(self) -> tuple[str, ...]:
        return tuple(f for g in self.firm_groups for f in g)


def _rank_side(
    keys: tuple[str, ...],
    partners: Callable[[str], tuple[str, ...]],
    value: Callable[[str, str], float],
    side_name: str,
) -> tuple[tuple[str, ...], ...]:
    n = len(keys)
    cmp: dict[tuple[str, str], int] = {}
    for i in range(n):
        for j in range(i + 1, n):
            a, b = keys[i], keys[j]
            shared = [p for p in partners(a) if p in set(partners(b))]
            signs = set()
            for p in shared:
                d = value(a, p) - value(b, p)
                signs.add(0 if abs(d) <= SERIATION_TIE_TOL else (1 if d > 0 else -1))
            if 1 in signs and -1 in signs:
                raise MonotonicityViolationError(
                    f"{side_name} {a!r} and {b!r} compare differently through different partners"
                )
            cmp[(a, b)] = 1 if 1 in signs else (-1 if -1 in signs else 0)
            cmp[(b, a)] = -cmp[(a, b)]
    wins = {k: sum(1 for other in keys if other != k and cmp[(k, other)] == 1) for k in keys}
    ordered = sorted(keys, key=lambda k: (wins[k], k))
    # group ties and verify the pairwise comparisons are transitive
    groups: list[list[str]] = []
    for k in ordered:
        if groups and wins[k] == wins[groups[-1][0]]:
            groups[-1].append(k)
        else:
            groups.append([k])
    level = {k: gi for gi, g in enumerate(groups) for k in g}
    for (a, b), s in cmp.items():
        expected = 0 if level[a] == level[b] else (1 if level[a] > level[b] else -1)
        if s != expected:
            raise MonotonicityViolationError(
                f"pairwise comparisons among {side_name}s are not transitive "
                f"(first detected at {a!r} vs {b!r})"
            )
    return tuple(tuple(sorted(g)) for g in groups)


def seriation_ranks(
    net: MatchingNetwork,
    targets: Mapping[tuple[str, str], float] | None = None,
) -> SeriationRanks:
    """Recover productivity rankings from noiseless monotone outcomes.

    Needs within-side diameters of two so that every same-side pair shares a
    partner; each pair is then ordered by comparing outcomes through every
    shared partner, with |difference| <= 1e-12 treated as a tie.
    Inconsistent or intransitive comparisons raise, because they contradict
    a monotone data process.
    """
    ok_w, ok_f = within_side_diameters(net, check_only=True)
    if not (ok_w and ok_f):
        raise NotIdentifiedError(
            "within-side diameters exceed two; rankings are not identified on this network"
        )

    def value(w: str, f: str) -> float:
        if targets is not None:
            return float(targets[(w, f)])
        return net.outcome(w, f)

    worker_groups = _rank_side(
        net.workers, net.worker_neighbors, value, "worker"
    )
    firm_groups = _rank_side(
        net.firms, net.firm_neighbors, lambda f, w: value(w, f), "firm"
    )
    return SeriationRanks(worker_groups, firm_groups)


@dataclass(frozen=True)
class SortingReport:
    """How the additive projection distorts the measured sorting pattern."""

    rho_true: float
    rho_projected: float
    bias: MisspecificationBias

    def __post_init__(self):
        if not (-1.0 - 1e-12 <= self.rho_true <= 1.0 + 1e-12):
            raise ValueError("rho_true outside [-1, 1]")
        if not (-1.0 - 1e-12 <= self.rho_projected <= 1.0 + 1e-12):
            raise ValueError("rho_projected outside [-1, 1]")


def sorting_report(
    net: MatchingNetwork,
    prod: ProductivityAssignment,
    reference_worker: str | None = None,
) -> SortingReport:
    """Compare true sorting against what the additive projection would report.

    Projects the noiseless systematic outcomes, correlates the projected
    worker/firm values across matches, and attaches the per-node bias terms
    explaining the gap.  Correlations are location-invariant, so the
    reference-worker normalization does not affect either number.
    """
    prod.check_complete(net)
    targets = {(m.worker, m.firm): prod.theta(m.worker, m.firm) for m in net.matches()}
    proj = twfe_project(net, targets=targets, reference_worker=reference_worker)
    return SortingReport(
        rho_true=sorting_correlation(net, prod.alpha, prod.psi),
        rho_projected=sorting_correlation(net, proj.alpha, proj.psi),
        bias=misspecification_bias(net, prod, reference_worker=proj.normalized_worker),
    )


def write_productivity_file(
    path,
    alpha: Mapping[str, float],
    psi: Mapping[str, float],
    metadata: Mapping[str, object] | None = None,
    delimiter: str = ",",
) -> None:
    """Write recovered productivities as ``id,side,value`` rows.

    Metadata (normalization, the interaction value used, fit diagnostics)
    goes into leading ``#`` comment lines.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"# {key}: {value}\n")
        fh.write("id,side,value\n")
        for w in sorted(alpha):
            fh.write(f"{w},worker,{alpha[w]!r}\n")
        for f in sorted(psi):
            fh.write(f"{f},firm,{psi[f]!r}\n")


def read_productivity_file(path, delimiter: str = ",") -> tuple[dict[str, float], dict[str, float]]:
    """Read an ``id,side,value`` productivity file back into (alpha, psi)."""
    import csv

    from .exceptions import EdgeListParseError

    alpha: dict[str, float] = {}
    psi: dict[str, float] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(rows, delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise EdgeListParseError("productivity file is empty", row=0)
    if tuple(h.strip().lower() for h in header) != ("id", "side", "value"):
        raise EdgeListParseError(
            f"expected header 'id,side,value', got {','.join(header)!r}", row=0
        )
    for i, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3:
            raise EdgeListParseError(f"expected 3 fields, got {len(row)}", row=i)
        key, side, raw = row[0].strip(), row[1].strip().lower(), row[2]
        try:
            value = float(raw)
        except ValueError:
            raise EdgeListParseError(f"value {raw!r} is not numeric", row=i)
        if side == "worker":
            alpha[key] = value
        elif side == "firm":
            psi[key] = value
        else:
            raise EdgeListParseError(f"side must be 'worker' or 'firm', got {side!r}", row=i)
    return alpha, psi


def sorting_correlation(
    net: MatchingNetwork,
    alpha_map: Mapping[str, float],
    psi_map: Mapping[str, float],
) -> float:
    """Pearson correlation of matched (worker, firm) values, one row per match."""
    a, p = [], []
    for m in net.matches():
        if m.worker not in alpha_map:
            raise KeyError(f"no worker value for {m.worker!r}")
        if m.firm not in psi_map:
            raise KeyError(f"no firm value for {m.firm!r}")
        a.append(float(alpha_map[m.worker]))
        p.append(float(psi_map[m.firm]))
    if len(a) < 2:
        raise UndefinedCorrelationError("need at least two matches to correlate")
    av = np.array(a)
    pv = np.array(p)
    av -= av.mean()
    pv -= pv.mean()
    denom = math.sqrt(float(av @ av) * float(pv @ pv))
    if denom == 0.0:
        raise UndefinedCorrelationError("one side has zero variance across matches")
    return float(av @ pv) / denom
