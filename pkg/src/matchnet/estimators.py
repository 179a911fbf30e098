"""Scikit-learn style estimator classes.

Thin stateful wrappers over the functional core so the algorithms compose
with the wider ecosystem (``get_params``/``set_params``, ``clone``,
pipelines that pass edge arrays around).  Fitted attributes carry trailing
underscores, and ``fit`` accepts either a ``MatchingNetwork`` or raw
(worker, firm, outcome) rows.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .estimation import (
    DEFAULT_SEED,
    InstrumentSet,
    estimate_beta,
    modularity_test,
)
from .network import ProductivityAssignment
from .productivity import als_fit, twfe_project
from .validation import as_network, as_pairs


def _check_fitted(est, attr: str) -> None:
    if not hasattr(est, attr):
        raise NotFittedError(
            f"this {type(est).__name__} instance is not fitted yet; call fit first"
        )


class InteractionEstimator(BaseEstimator):
    """Cycle-based estimator of the interaction parameter with inference.

    Parameters
    ----------
    labeling : one of "rank", "random", "outcome", "oracle"
        Rule assigning the within-cycle labels.  "rank" needs the two
        instrument mappings; "oracle" needs true productivities.
    gamma : float
        Two-sided confidence/test level (0.10 gives a 90% interval).
    seed : int
        Seed for random labels and tie-breaks.
    worker_instruments, firm_instruments : dict or None
        Node key -> instrument value, used by "rank".
    productivities : ProductivityAssignment or None
        Used by "oracle".
    """

    def __init__(
        self,
        labeling: str = "rank",
        gamma: float = 0.10,
        seed: int = DEFAULT_SEED,
        worker_instruments: dict | None = None,
        firm_instruments: dict | None = None,
        productivities: ProductivityAssignment | None = None,
    ):
        self.labeling = labeling
        self.gamma = gamma
        self.seed = seed
        self.worker_instruments = worker_instruments
        self.firm_instruments = firm_instruments
        self.productivities = productivities

    def fit(self, X, y=None):
        net = as_network(X)
        instruments = None
        if self.worker_instruments is not None or self.firm_instruments is not None:
            instruments = InstrumentSet(
                z_alpha=self.worker_instruments or {},
                z_psi=self.firm_instruments or {},
            )
        result = estimate_beta(
            net,
            labeling=self.labeling,
            instruments=instruments,
            gamma=self.gamma,
            seed=self.seed,
            prod=self.productivities,
        )
        self.result_ = result
        self.beta_ = result.beta_hat
        self.se_ = result.scale
        self.ci_ = result.ci
        self.t_stat_ = result.t_stat
        self.p_value_ = result.p_value
        self.n_cycles_ = result.n_cycles
        return self

    def reject_modularity(self, gamma: float | None = None) -> bool:
        """Whether the no-complementarities null is rejected at ``gamma``."""
        _check_fitted(self, "result_")
        return modularity_test(self.result_, gamma).reject


class TwfeEstimator(BaseEstimator):
    """Additive two-way projection: outcome ~ worker effect + firm effect.

    The reference worker's effect is pinned to zero.  ``predict`` returns
    the fitted additive outcome for (worker, firm) pairs.
    """

    def __init__(self, reference_worker: str | None = None):
        self.reference_worker = reference_worker

    def fit(self, X, y=None):
        net = as_network(X)
        proj = twfe_project(net, reference_worker=self.reference_worker)
        self.projection_ = proj
        self.alpha_ = dict(proj.alpha)
        self.psi_ = dict(proj.psi)
        self.reference_worker_ = proj.normalized_worker
        self.residual_norm_ = proj.residual_norm
        return self

    def predict(self, X) -> np.ndarray:
        _check_fitted(self, "alpha_")
        pairs = as_pairs(X)
        return np.array([self.alpha_[w] + self.psi_[f] for w, f in pairs])


class AlsEstimator(BaseEstimator):
    """Multiplicative-model productivity recovery for a nonzero interaction.

    Fits the transformed model (1 + beta*y) ~ a' * p' by alternating least
    squares; ``predict`` reconstructs the interacting outcome
    a + p + beta*a*p, which is invariant to the leftover scale freedom.
    """

    def __init__(
        self,
        beta: float = 0.0,
        tol: float = 1e-10,
        max_iter: int = 500,
        reference_worker: str | None = None,
        reference_value: float = 0.0,
    ):
        self.beta = beta
        self.tol = tol
        self.max_iter = max_iter
        self.reference_worker = reference_worker
        self.reference_value = reference_value

    def fit(self, X, y=None):
        net = as_network(X)
        fit = als_fit(
            net,
            beta_hat=self.beta,
            tol=self.tol,
            max_iter=self.max_iter,
            reference_worker=self.reference_worker,
            reference_value=self.reference_value,
        )
        self.fit_ = fit
        self.alpha_ = dict(fit.alpha)
        self.psi_ = dict(fit.psi)
        self.objective_trace_ = fit.objective_trace
        self.n_iter_ = fit.iterations
        self.converged_ = fit.converged
        return self

    def predict(self, X) -> np.ndarray:
        _check_fitted(self, "alpha_")
        pairs = as_pairs(X)
        out = []
        for w, f in pairs:
            a, p = self.alpha_[w], self.psi_[f]
            out.append(a + p + self.beta * a * p)
        return np.array(out)
