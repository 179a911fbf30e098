"""Simulation engine for the cycle-based interaction estimator.

Estimation draws its information entirely from four-cycles, so the engine
abstracts from the rest of the graph: it fixes a population of L cycles
(productivities and label signs drawn once) and then repeatedly redraws the
edge noise, tracking the estimator's error, interval width, and the
no-complementarities test decision across replications.

All randomness flows through counter-based Philox streams keyed by purpose
and indexed by replication, so results are bit-identical for a given
configuration regardless of execution order or thread count.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm

from .diagnostics import count_four_cycles_total  # re-exported: structural count
from .estimation import DEGENERATE_DENOMINATOR_RTOL
from .exceptions import MatchnetError
from .network import MatchingNetwork

__all__ = [
    "SimConfig",
    "SimReport",
    "CyclePopulation",
    "draw_cycle_population",
    "run_simulation",
    "er_generate",
    "count_four_cycles_total",
    "outcome_labeling_bias_experiment",
    "GridCell",
    "read_grid_file",
    "default_grid",
    "run_grid",
    "format_grid_tables",
]

# Stream channels for the Philox key; replication index goes in the counter.
_CH_POPULATION = 10
_CH_POP_SIGNS = 11
_CH_NOISE = 12
_CH_ER = 13
_CH_LABEL_EXP = 14

_MASK64 = (1 << 64) - 1

# Population distribution: worker pair means (1, 3), firm pair means (1, 3),
# unit variances, 0.5 worker-firm covariance, zero within-side covariance.
POPULATION_MEAN = np.array([1.0, 3.0, 1.0, 3.0])
POPULATION_COV = np.array(
    [
        [1.0, 0.0, 0.5, 0.5],
        [0.0, 1.0, 0.5, 0.5],
        [0.5, 0.5, 1.0, 0.0],
        [0.5, 0.5, 0.0, 1.0],
    ]
)


def _stream(seed: int, channel: int, counter: int = 0) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(key=[seed & _MASK64, channel], counter=counter << 128)
    )


@dataclass(frozen=True)
class SimConfig:
    """One simulation cell: cycle count, noise scale, label quality, truth."""

    n_cycles: int
    sigma: float
    p_correct: float
    beta0: float
    gamma: float = 0.10
    reps: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.n_cycles < 1:
            raise ValueError("n_cycles must be at least 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not 0.5 <= self.p_correct <= 1.0:
            raise ValueError("p_correct must lie in [0.5, 1]")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")


@dataclass(frozen=True)
class SimReport:
    """Replication-level aggregates for one cell.

    ``mse``, ``avg_ci_width`` and ``rejection_rate`` exclude replications
    whose denominator was numerically degenerate (counted in
    ``rep_failures``); ``mse_including`` keeps every replication.
    """

    mse: float
    avg_ci_width: float
    rejection_rate: float
    rep_failures: int
    n_reps: int
    mse_including: float


@dataclass(frozen=True)
class CyclePopulation:
    """Fixed per-cycle productivities (ordered high/low) and label signs.

    ``pi_alpha`` holds the worker-side sign of each cycle's labeling
    relative to the true productivity order; the firm side is always
    labeled correctly in this design.
    """

    alpha_hi: np.ndarray
    alpha_lo: np.ndarray
    psi_hi: np.ndarray
    psi_lo: np.ndarray
    pi_alpha: np.ndarray


def draw_cycle_population(n_cycles: int, p_correct: float, seed: int) -> CyclePopulation:
    """Draw the cycle population once: productivities and fixed label signs.

    Each cycle's four productivities are one multivariate-normal draw with
    mean ``POPULATION_MEAN`` and covariance ``POPULATION_COV``; the true
    ordered labels come from sorting each side's realized pair, and the
    worker-side label is then correct with probability ``p_correct``.
    """
    if n_cycles < 1:
        raise ValueError("n_cycles must be at least 1")
    if not 0.0 <= p_correct <= 1.0:
        raise ValueError("p_correct must lie in [0, 1]")
    gen = _stream(seed, _CH_POPULATION)
    draws = gen.multivariate_normal(POPULATION_MEAN, POPULATION_COV, size=n_cycles)
    alpha_hi = np.maximum(draws[:, 0], draws[:, 1])
    alpha_lo = np.minimum(draws[:, 0], draws[:, 1])
    psi_hi = np.maximum(draws[:, 2], draws[:, 3])
    psi_lo = np.minimum(draws[:, 2], draws[:, 3])
    sign_gen = _stream(seed, _CH_POP_SIGNS)
    pi_alpha = np.where(sign_gen.random(n_cycles) < p_correct, 1.0, -1.0)
    return CyclePopulation(alpha_hi, alpha_lo, psi_hi, psi_lo, pi_alpha)


def _theta(a: np.ndarray, p: np.ndarray, beta0: float) -> np.ndarray:
    return a + p + beta0 * a * p


def run_simulation(cfg: SimConfig, n_threads: int = 1) -> SimReport:
    """Run one cell: fixed population, ``cfg.reps`` independent noise draws.

    Per replication the four edge outcomes of every cycle get fresh
    N(0, sigma^2) noise; the estimator, its confidence interval at level
    ``gamma``, and the no-complementarities test are recorded.  Thread
    parallelism only partitions the replication loop; per-replication
    streams make the output independent of the partitioning.
    """
    pop = draw_cycle_population(cfg.n_cycles, cfg.p_correct, cfg.seed)
    L = cfg.n_cycles
    th_hh = _theta(pop.alpha_hi, pop.psi_hi, cfg.beta0)
    th_hl = _theta(pop.alpha_hi, pop.psi_lo, cfg.beta0)
    th_lh = _theta(pop.alpha_lo, pop.psi_hi, cfg.beta0)
    th_ll = _theta(pop.alpha_lo, pop.psi_lo, cfg.beta0)
    s = pop.pi_alpha  # pi_psi = +1 throughout
    z = float(norm.ppf(1.0 - cfg.gamma / 2.0))
    sqrt_l = math.sqrt(L)

    beta = np.empty(cfg.reps)
    width = np.empty(cfg.reps)
    reject = np.zeros(cfg.reps, dtype=bool)
    degenerate = np.zeros(cfg.reps, dtype=bool)

    def one_rep(r: int) -> None:
        gen = _stream(cfg.seed, _CH_NOISE, counter=r + 1)
        eta = gen.standard_normal((L, 4)) * cfg.sigma  # edge slots: hh, hl, lh, ll
        y_hh = th_hh + eta[:, 0]
        y_hl = th_hl + eta[:, 1]
        y_lh = th_lh + eta[:, 2]
        y_ll = th_ll + eta[:, 3]
        d1 = s * (y_hh - y_lh - y_hl + y_ll)
        d2 = s * (y_hh * y_ll - y_lh * y_hl)
        m1 = d1.mean()
        m2 = d2.mean()
        if abs(m2) < DEGENERATE_DENOMINATOR_RTOL * (1.0 + np.abs(d2).mean()):
            degenerate[r] = True
            beta[r] = math.inf if m2 == 0.0 else -m1 / m2
            width[r] = math.inf
            return
        b = -m1 / m2
        u = d1 + b * d2
        sigma_u = math.sqrt(float(u @ u) / L)
        beta[r] = b
        width[r] = 2.0 * z * sigma_u / (sqrt_l * abs(m2))
        ssq = float(u @ u)
        if ssq > 0.0:
            reject[r] = abs(float(d1.sum()) / math.sqrt(ssq)) >= z
        else:
            reject[r] = d1.sum() != 0.0

    if n_threads > 1:
        blocks = np.array_split(np.arange(cfg.reps), n_threads)
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(lambda idx: [one_rep(int(r)) for r in idx], blocks))
    else:
        for r in range(cfg.reps):
            one_rep(r)

    ok = ~degenerate
    n_ok = int(ok.sum())
    if n_ok == 0:
        raise MatchnetError("every replication had a degenerate denominator; cell aborted")
    err = beta - cfg.beta0
    mse = float(np.mean(err[ok] ** 2))
    finite = np.isfinite(beta)
    mse_inc = float(np.mean(err[finite] ** 2)) if finite.any() else math.inf
    return SimReport(
        mse=mse,
        avg_ci_width=float(np.mean(width[ok])),
        rejection_rate=float(np.mean(reject[ok])),
        rep_failures=int(degenerate.sum()),
        n_reps=cfg.reps,
        mse_including=mse_inc,
    )


def er_generate(n_workers: int, n_firms: int, p_link: float, seed: int) -> MatchingNetwork:
    """Random bipartite graph: each pair linked independently with ``p_link``.

    Structure only; every outcome is set to 0.0 and all nodes are declared
    even when isolated.
    """
    if not 0.0 < p_link <= 1.0:
        raise ValueError("p_link must lie in (0, 1]")
    if n_workers < 1 or n_firms < 1:
        raise ValueError("both sides need at least one node")
    gen = _stream(seed, _CH_ER)
    adj = gen.random((n_workers, n_firms)) < p_link
    workers = [f"w{i:04d}" for i in range(n_workers)]
    firms = [f"f{j:04d}" for j in range(n_firms)]
    edges = {
        (workers[i], firms[j]): (0.0, 1)
        for i, j in zip(*np.nonzero(adj))
    }
    return MatchingNetwork(workers, firms, edges)


# Discrete error distributions for the outcome-labeling experiment:
# (values, probabilities) for the noise on the high worker's two edges.
_LABEL_EXP_DISTS = {
    1: (((3.0, -1.0), (0.25, 0.75)), ((2.0, -5.0), (5.0 / 7.0, 2.0 / 7.0))),
    2: (((1.0, -3.0), (0.75, 0.25)), ((6.0, -2.0), (0.25, 0.75))),
}


def outcome_labeling_bias_experiment(
    dist_id: int,
    n_cycles: int,
    reps: int,
    seed: int,
    labeling: str = "outcome",
) -> float:
    """Average large-L estimate when cycle labels are read off the outcomes.

    Setup: zero interaction, unit productivity gaps on both sides (worker
    values 2 and 1, firm values 2 and 1), and noise only on the high
    worker's two edges, drawn from one of two discrete distributions.  In
    this design the labeled cycle statistics reduce to closed forms in the
    two noise draws e1 (high-firm edge) and e2 (low-firm edge):

    * the outcome rule's sign product reduces to sign(e1-e2)*sign(e1+e2),
      and the estimate averages (e1-e2) against (2*e1-3*e2-1) under it,
      which converges to 5/9 (distribution 1) or -3/5 (distribution 2);
    * ``labeling="oracle"`` keeps the true signs, under which the estimate
      converges to the true value 0.
    """
    if dist_id not in _LABEL_EXP_DISTS:
        raise ValueError("dist_id must be 1 or 2")
    if labeling not in ("outcome", "oracle"):
        raise ValueError("labeling must be 'outcome' or 'oracle'")
    (v1, p1), (v2, p2) = _LABEL_EXP_DISTS[dist_id]
    estimates = np.empty(reps)
    for r in range(reps):
        gen = _stream(seed, _CH_LABEL_EXP, counter=r + 1)
        e1 = np.where(gen.random(n_cycles) < p1[0], v1[0], v1[1])
        e2 = np.where(gen.random(n_cycles) < p2[0], v2[0], v2[1])
        num_true = e1 - e2                 # d1 under true labels
        den_true = 2.0 * e1 - 3.0 * e2 - 1.0  # d2 under true labels
        if labeling == "oracle":
            estimates[r] = -num_true.mean() / den_true.mean()
        else:
            pp = np.sign(e1 - e2) * np.sign(e1 + e2)
            estimates[r] = (num_true * pp).mean() / (den_true * pp).mean()
    return float(estimates.mean())


# -- simulation grids --------------------------------------------------------


@dataclass(frozen=True)
class GridCell:
    sigma: float
    n_cycles: int
    p_correct: float
    beta0: float


GRID_FILE_HEADER = ("sigma", "l", "p", "beta0")


def default_grid() -> list[GridCell]:
    """The full 12x4 design (3 sigmas x 4 cycle counts x 4 label strengths),
    once under a zero interaction and once under a unit one."""
    cells = []
    for beta0 in (0.0, 1.0):
        for sigma in (0.5, 1.0, 2.0):
            for L in (100, 500, 1000, 5000):
                for p in (1.0, 0.85, 0.65, 0.5):
                    cells.append(GridCell(sigma, L, p, beta0))
    return cells


def read_grid_file(path, delimiter: str = ",") -> list[GridCell]:
    """Read a grid file with header ``sigma,L,p,beta0``, one cell per row."""
    import csv

    from .exceptions import EdgeListParseError

    cells = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise EdgeListParseError("grid file is empty", row=0)
        if tuple(h.strip().lower() for h in header) != GRID_FILE_HEADER:
            raise EdgeListParseError(
                f"expected header 'sigma,L,p,beta0', got {','.join(header)!r}", row=0
            )
        for i, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise EdgeListParseError(f"expected 4 fields, got {len(row)}", row=i)
            try:
                sigma = float(row[0])
                L = int(row[1])
                p = float(row[2])
                beta0 = float(row[3])
            except ValueError as exc:
                raise EdgeListParseError(str(exc), row=i)
            try:
                SimConfig(n_cycles=L, sigma=sigma, p_correct=p, beta0=beta0)
            except ValueError as exc:
                raise EdgeListParseError(str(exc), row=i)
            cells.append(GridCell(sigma, L, p, beta0))
    if not cells:
        raise EdgeListParseError("grid file has no cells", row=0)
    return cells


def cell_seed(base_seed: int, cell: GridCell) -> int:
    """Stable per-cell seed so grid composition does not entangle streams."""
    text = f"{base_seed}|{cell.sigma!r}|{cell.n_cycles}|{cell.p_correct!r}|{cell.beta0!r}"
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big") & (_MASK64 >> 1)


def run_grid(
    cells: Sequence[GridCell],
    reps: int,
    seed: int,
    gamma: float = 0.10,
    n_threads: int = 1,
) -> list[tuple[GridCell, SimReport]]:
    results = []
    for cell in cells:
        cfg = SimConfig(
            n_cycles=cell.n_cycles,
            sigma=cell.sigma,
            p_correct=cell.p_correct,
            beta0=cell.beta0,
            gamma=gamma,
            reps=reps,
            seed=cell_seed(seed, cell),
        )
        results.append((cell, run_simulation(cfg, n_threads=n_threads)))
    return results


def format_grid_tables(
    results: Iterable[tuple[GridCell, SimReport]], delimiter: str = ","
) -> str:
    """Render grid results as delimiter-separated tables, one block per
    (statistic, beta0): rows are sigma x L, columns are the label strengths."""
    results = list(results)
    betas = sorted({c.beta0 for c, _ in results})
    ps = sorted({c.p_correct for c, _ in results}, reverse=True)
    row_keys = sorted({(c.sigma, c.n_cycles) for c, _ in results})
    lookup = {(c.sigma, c.n_cycles, c.p_correct, c.beta0): r for c, r in results}
    stats = [
        ("mse", lambda r: r.mse),
        ("avg_ci_width", lambda r: r.avg_ci_width),
        ("rejection_rate", lambda r: r.rejection_rate),
        ("rep_failures", lambda r: r.rep_failures),
    ]
    lines = []
    for beta0 in betas:
        for name, getter in stats:
            lines.append(f"# {name} (beta0={beta0:g})")
            lines.append(delimiter.join(["sigma", "L"] + [f"p={p:g}" for p in ps]))
            for sigma, L in row_keys:
                row = [f"{sigma:g}", str(L)]
                for p in ps:
                    rep = lookup.get((sigma, L, p, beta0))
                    row.append("" if rep is None else f"{getter(rep):.6g}")
                lines.append(delimiter.join(row))
            lines.append("")
    return "\n".join(lines)
