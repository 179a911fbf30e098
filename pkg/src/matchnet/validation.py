"""Input validation helpers shared by the estimator classes and the CLI."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .network import MatchingNetwork, load_network


def as_network(X) -> MatchingNetwork:
    """Coerce fit input into a MatchingNetwork.

    Accepts a MatchingNetwork, a sequence of (worker, firm, outcome) rows,
    or a 2-d array-like with three columns.
    """
    if isinstance(X, MatchingNetwork):
        return X
    if isinstance(X, np.ndarray):
        if X.ndim != 2 or X.shape[1] != 3:
            raise ValueError("array input must have shape (n_matches, 3)")
        return load_network([tuple(row) for row in X])
    if isinstance(X, Sequence) or hasattr(X, "__iter__"):
        return load_network(X)
    raise TypeError(
        f"cannot interpret {type(X).__name__} as a matching network; "
        "pass a MatchingNetwork or (worker, firm, outcome) rows"
    )


def as_pairs(X) -> list[tuple[str, str]]:
    """Coerce predict input into (worker, firm) key pairs."""
    if isinstance(X, MatchingNetwork):
        return [(m.worker, m.firm) for m in X.matches()]
    pairs = []
    for row in X:
        seq = list(row)
        if len(seq) < 2:
            raise ValueError("each row must provide (worker, firm)")
        pairs.append((str(seq[0]), str(seq[1])))
    return pairs


def check_mapping_covers(mapping: Mapping[str, float], keys, what: str) -> None:
    missing = [k for k in keys if k not in mapping]
    if missing:
        raise KeyError(f"{what} is missing entries for: {', '.join(sorted(missing))}")
