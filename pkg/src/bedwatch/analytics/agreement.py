"""Chance-corrected inter-rater agreement across many raters.

kappa = (Pbar - Pe) / (1 - Pe), where Pi = (sum_j n_ij^2 - n) / (n (n-1))
is the per-item pairwise agreement and p_j = sum_i n_ij / (N n) are the
category proportions. Items must carry exactly n ratings; a helper builds
the count matrix and reports the exclusions.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from ..core.types import BedwatchError


class AgreementError(BedwatchError):
    pass


def fleiss_kappa(counts: np.ndarray | Sequence[Sequence[int]], n_raters: int) -> float:
    """counts: N items x K categories, each row summing to n_raters.

    Returns NaN for the degenerate case Pe == 1 (all mass in one category),
    where chance correction is undefined.
    """
    if n_raters < 2:
        raise AgreementError("fleiss_kappa needs at least 2 raters per item")
    m = np.asarray(counts, dtype=np.int64)
    if m.ndim != 2 or m.size == 0:
        raise AgreementError("counts must be a non-empty N x K matrix")
    if (m < 0).any():
        raise AgreementError("counts must be non-negative")
    row_sums = m.sum(axis=1)
    if not (row_sums == n_raters).all():
        bad = int((row_sums != n_raters).sum())
        raise AgreementError(f"{bad} items do not have exactly {n_raters} ratings")
    n = float(n_raters)
    big_n = m.shape[0]
    p_i = (np.square(m).sum(axis=1) - n) / (n * (n - 1.0))
    p_bar = float(p_i.mean())
    p_j = m.sum(axis=0) / (big_n * n)
    p_e = float(np.square(p_j).sum())
    if p_e >= 1.0:
        return math.nan
    return (p_bar - p_e) / (1.0 - p_e)


@dataclass
class KappaResult:
    kappa: float  # NaN when degenerate or no eligible items
    n_items: int
    n_raters: int
    excluded_items: list


def build_counts(
    ratings: Mapping[Hashable, Sequence[Hashable]],
    categories: Sequence[Hashable],
    n_raters: int | None = None,
) -> tuple[np.ndarray, list, int]:
    """Turn {item: [category per rater]} into a counts matrix.

    When n_raters is None it is chosen as the most common rating count
    among items with >= 2 ratings (ties break toward more raters). Items
    with a different count are excluded and returned.
    """
    eligible = {k: v for k, v in ratings.items() if len(v) >= 2}
    if not eligible:
        return np.zeros((0, len(categories)), dtype=np.int64), list(ratings), 2
    if n_raters is None:
        freq = Counter(len(v) for v in eligible.values())
        n_raters = max(freq, key=lambda c: (freq[c], c))
    index = {c: i for i, c in enumerate(categories)}
    rows = []
    excluded = [k for k, v in ratings.items() if len(v) != n_raters]
    for item in sorted(ratings, key=repr):
        votes = ratings[item]
        if len(votes) != n_raters:
            continue
        row = [0] * len(categories)
        for v in votes:
            if v not in index:
                raise AgreementError(f"rating {v!r} outside the category set")
            row[index[v]] += 1
        rows.append(row)
    return np.asarray(rows, dtype=np.int64), excluded, n_raters


def kappa_for_ratings(
    ratings: Mapping[Hashable, Sequence[Hashable]],
    categories: Sequence[Hashable],
    n_raters: int | None = None,
) -> KappaResult:
    counts, excluded, n = build_counts(ratings, categories, n_raters)
    if counts.shape[0] == 0:
        return KappaResult(math.nan, 0, n, excluded)
    return KappaResult(fleiss_kappa(counts, n), counts.shape[0], n, excluded)
