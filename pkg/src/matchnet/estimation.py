"""Cycle statistics, labeling rules, and the interaction-parameter estimator.

Every edge-disjoint four-cycle contributes one observation pair (d1, d2).
Their ratio estimates the interaction parameter without ever estimating the
node productivities; the same statistics drive the no-complementarities
test.  Labels inside each cycle are sign conventions: flipping one side of
a cycle's labels negates both of its statistics, which is why any labeling
rule enters only through the signs it induces.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm

from .diagnostics import FourCycle, enumerate_disjoint_four_cycles
from .exceptions import (
    DegenerateStatisticError,
    EdgeListParseError,
    InstrumentCoverageError,
    NoCyclesError,
    UninformativeCyclesError,
)
from .network import MatchingNetwork, ProductivityAssignment

DEFAULT_SEED = 0

# Stream channels for the counter-based sign generator; the per-cycle index
# is the counter, so draws are reproducible independent of evaluation order.
_CH_RANDOM_ALPHA = 1
_CH_RANDOM_PSI = 2
_CH_TIE_ALPHA = 3
_CH_TIE_PSI = 4

LABELING_RULES = ("rank", "random", "outcome", "oracle")

_MASK64 = (1 << 64) - 1


def seeded_sign(seed: int, channel: int, index: int) -> int:
    """Deterministic fair sign draw: +1 when the stream's uniform is < 0.5."""
    bitgen = np.random.Philox(key=[seed & _MASK64, channel], counter=index << 128)
    return 1 if np.random.Generator(bitgen).random() < 0.5 else -1


@dataclass(frozen=True)
class InstrumentSet:
    """Observable node characteristics used to order workers/firms in cycles."""

    z_alpha: Mapping[str, float]
    z_psi: Mapping[str, float]

    def __post_init__(self):
        for name, mapping in (("z_alpha", self.z_alpha), ("z_psi", self.z_psi)):
            for key, value in mapping.items():
                if not math.isfinite(value):
                    raise ValueError(f"{name}[{key!r}] is not finite")


@dataclass(frozen=True)
class Labeling:
    """A labeling rule together with the per-cycle signs it induced.

    Signs are relative to each cycle's canonical (sorted) node order: +1
    keeps the stored order as (primary, secondary), -1 swaps it.
    """

    rule: str
    seed: int
    signs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.rule not in LABELING_RULES:
            raise ValueError(f"unknown labeling rule {self.rule!r}")
        for sa, sp in self.signs:
            if sa not in (-1, 1) or sp not in (-1, 1):
                raise ValueError("labeling signs must be -1 or +1")


@dataclass(frozen=True)
class CycleStats:
    """The two labeled statistics of one four-cycle."""

    cycle: FourCycle
    delta1: float
    delta2: float
    signs: tuple[int, int]


def cycle_stats(net: MatchingNetwork, cycle: FourCycle, signs: tuple[int, int]) -> CycleStats:
    """Compute (d1, d2) for one cycle under the given label signs.

    With labeled workers (i, i') and firms (j, j'):
    d1 = y_ij - y_i'j - y_ij' + y_i'j'  and  d2 = y_ij*y_i'j' - y_i'j*y_ij'.
    Negating either sign negates both statistics exactly: the values are
    evaluated once in canonical order and multiplied by the sign product.
    """
    sa, sp = signs
    if sa not in (-1, 1) or sp not in (-1, 1):
        raise ValueError("labeling signs must be -1 or +1")
    w1, w2 = cycle.workers
    f1, f2 = cycle.firms
    y11 = net.outcome(w1, f1)
    y21 = net.outcome(w2, f1)
    y12 = net.outcome(w1, f2)
    y22 = net.outcome(w2, f2)
    s = sa * sp
    d1 = s * (y11 - y21 - y12 + y22)
    d2 = s * (y11 * y22 - y21 * y12)
    return CycleStats(cycle, d1, d2, (sa, sp))


def _sign_or_tiebreak(diff: float, seed: int, channel: int, index: int) -> int:
    if diff > 0:
        return 1
    if diff < 0:
        return -1
    return seeded_sign(seed, channel, index)


def assign_labels(
    cycles: Sequence[FourCycle],
    rule: str,
    instruments: InstrumentSet | None = None,
    net: MatchingNetwork | None = None,
    prod: ProductivityAssignment | None = None,
    seed: int = DEFAULT_SEED,
) -> Labeling:
    """Assign per-cycle label signs under one of the four rules.

    rank    -- higher-instrument node is primary; ties resolved by a seeded
               coin flip (per-cycle counter, so order-independent).
    random  -- i.i.d. seeded fair signs on each side.
    outcome -- primary labels from the within-cycle average-outcome
               comparisons.  Biased by construction; demonstration only.
    oracle  -- signs from the true productivity order (simulation use).
    """
    if rule not in LABELING_RULES:
        raise ValueError(f"unknown labeling rule {rule!r}; expected one of {LABELING_RULES}")
    signs: list[tuple[int, int]] = []
    if rule == "rank":
        if instruments is None:
            raise ValueError("rank labeling requires an InstrumentSet")
        for ell, cyc in enumerate(cycles):
            for w in cyc.workers:
                if w not in instruments.z_alpha:
                    raise InstrumentCoverageError(f"no worker instrument value for {w!r}")
            for f in cyc.firms:
                if f not in instruments.z_psi:
                    raise InstrumentCoverageError(f"no firm instrument value for {f!r}")
            da = instruments.z_alpha[cyc.workers[0]] - instruments.z_alpha[cyc.workers[1]]
            dp = instruments.z_psi[cyc.firms[0]] - instruments.z_psi[cyc.firms[1]]
            signs.append(
                (
                    _sign_or_tiebreak(da, seed, _CH_TIE_ALPHA, ell),
                    _sign_or_tiebreak(dp, seed, _CH_TIE_PSI, ell),
                )
            )
    elif rule == "random":
        for ell in range(len(cycles)):
            signs.append(
                (
                    seeded_sign(seed, _CH_RANDOM_ALPHA, ell),
                    seeded_sign(seed, _CH_RANDOM_PSI, ell),
                )
            )
    elif rule == "outcome":
        if net is None:
            raise ValueError("outcome labeling requires the network")
        for ell, cyc in enumerate(cycles):
            (w1, w2), (f1, f2) = cyc.workers, cyc.firms
            y11, y12 = net.outcome(w1, f1), net.outcome(w1, f2)
            y21, y22 = net.outcome(w2, f1), net.outcome(w2, f2)
            row_diff = (y11 + y12) - (y21 + y22)
            col_diff = (y11 + y21) - (y12 + y22)
            signs.append(
                (
                    _sign_or_tiebreak(row_diff, seed, _CH_TIE_ALPHA, ell),
                    _sign_or_tiebreak(col_diff, seed, _CH_TIE_PSI, ell),
                )
            )
    else:  # oracle
        if prod is None:
            raise ValueError("oracle labeling requires a ProductivityAssignment")
        for ell, cyc in enumerate(cycles):
            da = prod.alpha[cyc.workers[0]] - prod.alpha[cyc.workers[1]]
            dp = prod.psi[cyc.firms[0]] - prod.psi[cyc.firms[1]]
            signs.append(
                (
                    _sign_or_tiebreak(da, seed, _CH_TIE_ALPHA, ell),
                    _sign_or_tiebreak(dp, seed, _CH_TIE_PSI, ell),
                )
            )
    return Labeling(rule=rule, seed=seed, signs=tuple(signs))


@dataclass(frozen=True)
class BetaEstimate:
    """Interaction-parameter estimate with inference ingredients.

    ``scale`` is sigma_u_hat / (sqrt(L) * |mean d2|); the absolute value in
    the denominator keeps the confidence interval orientation independent of
    the labeling sign.  ``t_stat`` and ``p_value`` are NaN when every
    residual and the statistic's numerator are exactly zero (pure noiseless
    additive data); the modularity test rejects that case explicitly.
    """

    beta_hat: float
    mean_delta1: float
    mean_delta2: float
    sigma_u_hat: float
    scale: float
    ci: tuple[float, float]
    t_stat: float
    p_value: float
    n_cycles: int
    gamma: float
    labeling_rule: str
    seed: int


# Relative tolerance for declaring the denominator degenerate: near-zero
# |mean d2| signals failing cycle heterogeneity, not a numeric answer.
DEGENERATE_DENOMINATOR_RTOL = 1e-12


def _mean_d2_is_degenerate(d2: np.ndarray) -> bool:
    return abs(float(d2.mean())) < DEGENERATE_DENOMINATOR_RTOL * (1.0 + float(np.abs(d2).mean()))


def estimate_beta(
    net: MatchingNetwork,
    labeling: str | Labeling = "rank",
    instruments: InstrumentSet | None = None,
    gamma: float = 0.10,
    seed: int = DEFAULT_SEED,
    prod: ProductivityAssignment | None = None,
    cycles: Sequence[FourCycle] | None = None,
) -> BetaEstimate:
    """Estimate the interaction parameter from edge-disjoint four-cycles.

    beta_hat = -(mean d1)/(mean d2) over the deterministic cycle selection,
    with the residual-based spread estimate, a two-sided normal confidence
    interval at level ``gamma``, and the t-statistic of the
    no-complementarities test.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must be in (0, 1)")
    if cycles is None:
        cycles = enumerate_disjoint_four_cycles(net)
    if not cycles:
        raise NoCyclesError("the network has no four-cycles; the interaction parameter is not identified")
    if isinstance(labeling, Labeling):
        lab = labeling
        if len(lab.signs) != len(cycles):
            raise ValueError("labeling signs do not match the number of cycles")
    else:
        lab = assign_labels(cycles, labeling, instruments=instruments, net=net, prod=prod, seed=seed)

    stats = [cycle_stats(net, cyc, s) for cyc, s in zip(cycles, lab.signs)]
    d1 = np.array([s.delta1 for s in stats])
    d2 = np.array([s.delta2 for s in stats])
    L = len(stats)
    m1, m2 = float(d1.mean()), float(d2.mean())
    if _mean_d2_is_degenerate(d2):
        raise UninformativeCyclesError(
            "mean cycle cross-product statistic is indistinguishable from zero; "
            "cycles carry no information about the interaction parameter"
        )
    beta = -m1 / m2
    u = d1 + beta * d2
    sigma_u = float(np.sqrt((u * u).mean()))
    scale = sigma_u / (math.sqrt(L) * abs(m2))
    z = float(norm.ppf(1.0 - gamma / 2.0))
    ci = (beta - z * scale, beta + z * scale)
    ssq = float(u @ u)
    num = float(d1.sum())
    if ssq > 0.0:
        t = num / math.sqrt(ssq)
        p = float(2.0 * norm.sf(abs(t)))
    elif num != 0.0:
        t = math.inf if num > 0 else -math.inf
        p = 0.0
    else:
        t = math.nan
        p = math.nan
    return BetaEstimate(
        beta_hat=beta,
        mean_delta1=m1,
        mean_delta2=m2,
        sigma_u_hat=sigma_u,
        scale=scale,
        ci=ci,
        t_stat=t,
        p_value=p,
        n_cycles=L,
        gamma=gamma,
        labeling_rule=lab.rule,
        seed=lab.seed,
    )


@dataclass(frozen=True)
class ModularityTest:
    reject: bool
    t_stat: float
    p_value: float
    gamma: float


def modularity_test(est: BetaEstimate, gamma: float | None = None) -> ModularityTest:
    """Two-sided test of a zero interaction parameter at level ``gamma``.

    Rejects when |T| >= z_{1-gamma/2} with T = sum d1 / sqrt(sum u^2); the
    critical value comes from the standard normal.
    """
    if gamma is None:
        gamma = est.gamma
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must be in (0, 1)")
    if math.isnan(est.t_stat):
        raise DegenerateStatisticError(
            "all residuals and the statistic's numerator are zero; the test statistic is 0/0"
        )
    z = float(norm.ppf(1.0 - gamma / 2.0))
    return ModularityTest(
        reject=abs(est.t_stat) >= z,
        t_stat=est.t_stat,
        p_value=est.p_value,
        gamma=gamma,
    )


def closed_form_beta(theta_11: float, theta_12: float, theta_21: float, theta_22: float) -> float:
    """Interaction parameter from one noiseless four-cycle.

    Arguments follow (worker, firm) index order: theta_11 pairs the first
    worker with the first firm, theta_12 the first worker with the second
    firm, and so on.  Evaluation order matches :func:`cycle_stats`, so a
    one-cycle estimate agrees with this closed form bit-for-bit.
    """
    num = theta_11 - theta_21 - theta_12 + theta_22
    den = theta_11 * theta_22 - theta_21 * theta_12
    if den == 0.0:
        raise UninformativeCyclesError(
            "cycle cross-product is zero: workers or firms are not heterogeneous"
        )
    return -num / den


def _elementary_symmetric_sums(values: Sequence[float]) -> list[float]:
    """e_0..e_K of the values via the standard one-pass recurrence."""
    K = len(values)
    e = [0.0] * (K + 1)
    e[0] = 1.0
    for x in values:
        for r in range(K, 0, -1):
            e[r] += x * e[r - 1]
    return e


@dataclass(frozen=True)
class IdentificationSet:
    """Real roots of the cycle polynomial: candidate interaction parameters."""

    cycle_length: int
    coefficients: tuple[float, ...]
    roots: tuple[float, ...]


ROOT_IMAG_RTOL = 1e-8
ROOT_MERGE_TOL = 1e-8


def identification_set(theta_cycle: Sequence[float]) -> IdentificationSet:
    """Candidate interaction parameters from one noiseless cycle of length 2K.

    Outcomes must be listed in traversal order.  The odd- and even-position
    elementary symmetric sums give coefficients D_r = S_r_odd - S_r_even,
    and the candidates are the real roots of sum_r D_r beta^(r-1), found via
    companion-matrix eigenvalues.  A 4-cycle (K=2) pins the parameter down
    exactly; a 2K-cycle leaves at most K-1 candidates.
    """
    thetas = [float(t) for t in theta_cycle]
    n = len(thetas)
    if n < 4 or n % 2 != 0:
        raise ValueError("a cycle must supply an even number (>= 4) of outcomes")
    K = n // 2
    e_odd = _elementary_symmetric_sums(thetas[0::2])
    e_even = _elementary_symmetric_sums(thetas[1::2])
    coeffs = tuple(e_odd[r] - e_even[r] for r in range(1, K + 1))
    if all(c == 0.0 for c in coeffs):
        raise UninformativeCyclesError("every cycle coefficient is zero; the cycle is fully uninformative")
    # numpy wants the highest-degree coefficient first
    poly = np.array(coeffs[::-1], dtype=float)
    poly = np.trim_zeros(poly, "f")
    if poly.size <= 1:
        roots: tuple[float, ...] = ()
    else:
        raw = np.roots(poly)
        real = [
            float(r.real)
            for r in raw
            if abs(r.imag) <= ROOT_IMAG_RTOL * (1.0 + abs(r))
        ]
        merged: list[float] = []
        for r in sorted(real):
            if not merged or abs(r - merged[-1]) > ROOT_MERGE_TOL:
                merged.append(r)
        roots = tuple(merged)
    return IdentificationSet(cycle_length=n, coefficients=coeffs, roots=roots)


def read_instrument_file(path, delimiter: str = ",") -> dict[str, float]:
    """Load an instrument file with header ``id,value`` into a dict."""
    out: dict[str, float] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise EdgeListParseError("instrument file is empty", row=0)
        if tuple(h.strip().lower() for h in header) != ("id", "value"):
            raise EdgeListParseError(
                f"expected header 'id,value', got {','.join(header)!r}", row=0
            )
        for i, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise EdgeListParseError(f"expected 2 fields, got {len(row)}", row=i)
            key = row[0].strip()
            try:
                value = float(row[1])
            except ValueError:
                raise EdgeListParseError(f"value {row[1]!r} is not numeric", row=i)
            if not math.isfinite(value):
                raise EdgeListParseError(f"value {row[1]!r} is not finite", row=i)
            out[key] = value
    return out
