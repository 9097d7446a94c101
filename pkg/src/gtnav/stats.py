"""Rank-based tests, Brown-Forsythe/Levene, Bonferroni post-hoc and seeded bootstrap.

p-values use the usual large-sample approximations (chi-square, F, normal).
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import chi2, f as f_dist, norm

from .errors import DegenerateDataError, InputDomainError


class Method(enum.Enum):
    KRUSKAL_WALLIS = "KruskalWallis"
    LEVENE = "Levene"
    MANN_WHITNEY = "MannWhitney"
    BONFERRONI_POSTHOC = "BonferroniPosthoc"


@dataclass(frozen=True)
class StatResult:
    statistic: float
    p_value: float
    groups: tuple[str, ...]
    method: Method
    detail: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")


def _labels(labels, n):
    if labels is None:
        return tuple(f"g{i}" for i in range(n))
    labels = tuple(str(x) for x in labels)
    if len(labels) != n:
        raise InputDomainError("one label per group is required")
    return labels


def rank_average(values) -> tuple[np.ndarray, np.ndarray]:
    """1-based ranks with ties averaged, plus the sizes of every tie block."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    ties = []
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        ties.append(j - i + 1)
        i = j + 1
    return ranks, np.array(ties, dtype=float)


def kruskal_wallis(groups: Sequence[Sequence[float]], labels=None) -> StatResult:
    """H statistic with tie correction, chi-square with k-1 degrees of freedom."""
    if len(groups) < 2:
        raise InputDomainError("need at least two groups")
    arrays = [np.asarray(g, dtype=float) for g in groups]
    if any(len(a) == 0 for a in arrays):
        raise InputDomainError("every group must be non-empty")
    n = np.array([len(a) for a in arrays])
    N = int(n.sum())
    ranks, ties = rank_average(np.concatenate(arrays))
    correction = 1.0 - float((ties ** 3 - ties).sum()) / (N ** 3 - N) if N > 1 else 0.0
    if correction == 0:
        raise DegenerateDataError("all observations are identical")
    bounds = np.cumsum(n)[:-1]
    rank_sums = np.array([r.sum() for r in np.split(ranks, bounds)])
    h = 12.0 / (N * (N + 1)) * float((rank_sums ** 2 / n).sum()) - 3.0 * (N + 1)
    h /= correction
    k = len(arrays)
    p = float(chi2.sf(h, k - 1))
    mean_ranks = {lab: float(rs / m) for lab, rs, m in zip(_labels(labels, k), rank_sums, n)}
    return StatResult(h, min(1.0, max(0.0, p)), _labels(labels, k), Method.KRUSKAL_WALLIS,
                      {"df": k - 1, "mean_ranks": mean_ranks})


def levene(groups: Sequence[Sequence[float]], labels=None) -> StatResult:
    """Brown-Forsythe variant: absolute deviations from the group medians.

    ``detail["spread"]`` holds each group's mean absolute deviation from its
    median, the quantity the test compares.
    """
    if len(groups) < 2:
        raise InputDomainError("need at least two groups")
    arrays = [np.asarray(g, dtype=float) for g in groups]
    if any(len(a) < 2 for a in arrays):
        raise InputDomainError("every group needs at least two observations")
    k = len(arrays)
    N = sum(len(a) for a in arrays)
    z = [np.abs(a - np.median(a)) for a in arrays]
    zbar_i = np.array([zi.mean() for zi in z])
    zbar = float(np.concatenate(z).mean())
    num = (N - k) * float(sum(len(zi) * (m - zbar) ** 2 for zi, m in zip(z, zbar_i)))
    den = (k - 1) * float(sum(((zi - m) ** 2).sum() for zi, m in zip(z, zbar_i)))
    labs = _labels(labels, k)
    spread = {lab: float(m) for lab, m in zip(labs, zbar_i)}
    if den == 0:
        raise DegenerateDataError("absolute deviations are constant within every group")
    stat = num / den
    p = float(f_dist.sf(stat, k - 1, N - k))
    return StatResult(stat, min(1.0, max(0.0, p)), labs, Method.LEVENE,
                      {"df": (k - 1, N - k), "spread": spread})


def mann_whitney(a: Sequence[float], b: Sequence[float], labels=("a", "b")) -> StatResult:
    """Two-sided test; the reported statistic is ``min(U_a, U_b)``.

    Normal approximation with tie correction and continuity correction.
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if len(x) == 0 or len(y) == 0:
        raise InputDomainError("both samples must be non-empty")
    n1, n2 = len(x), len(y)
    n = n1 + n2
    ranks, ties = rank_average(np.concatenate((x, y)))
    u1 = float(ranks[:n1].sum()) - n1 * (n1 + 1) / 2.0
    u2 = n1 * n2 - u1
    mu = n1 * n2 / 2.0
    tie_term = float((ties ** 3 - ties).sum()) / (n * (n - 1)) if n > 1 else 0.0
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        p = 1.0
    else:
        z = (abs(u1 - mu) - 0.5) / math.sqrt(var)
        p = min(1.0, max(0.0, 2.0 * float(norm.sf(z))))
    return StatResult(min(u1, u2), p, _labels(labels, 2), Method.MANN_WHITNEY, {"u_first": u1})


def bonferroni_posthoc(groups: Sequence[Sequence[float]], alpha: float = 0.05, labels=None) -> list[StatResult]:
    """Pairwise Mann-Whitney comparisons with Bonferroni-adjusted p-values."""
    if len(groups) < 2:
        raise InputDomainError("need at least two groups")
    labs = _labels(labels, len(groups))
    pairs = list(itertools.combinations(range(len(groups)), 2))
    m = len(pairs)
    out = []
    for i, j in pairs:
        r = mann_whitney(groups[i], groups[j], (labs[i], labs[j]))
        adj = min(1.0, r.p_value * m)
        out.append(StatResult(r.statistic, adj, (labs[i], labs[j]), Method.BONFERRONI_POSTHOC,
                              {"raw_p": r.p_value, "pairs": m, "alpha": alpha, "reject": adj < alpha}))
    return out


def bootstrap(samples: Sequence, subset_size: int, iterations: int, seed: int,
              statistic: Callable[[np.ndarray], float]) -> list:
    """Statistic of ``iterations`` subsets drawn without replacement.

    Iteration ``i`` uses a generator seeded with ``seed + i`` and keeps the
    drawn elements in their original order.
    """
    data = np.asarray(samples)
    if iterations < 1:
        raise InputDomainError("iterations must be >= 1")
    if not 0 < subset_size <= len(data):
        raise InputDomainError(f"subset size {subset_size} not in 1..{len(data)}")
    out = []
    for i in range(iterations):
        rng = np.random.default_rng(seed + i)
        idx = np.sort(rng.choice(len(data), size=subset_size, replace=False))
        out.append(statistic(data[idx]))
    return out


def comparison_interval(values: Sequence[float], z: float = 1.96) -> tuple[float, float]:
    """Mean and half-width ``z * se / sqrt(2)``; non-overlapping intervals
    roughly indicate a difference at the matching level."""
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return math.nan, math.nan
    if len(v) == 1:
        return float(v[0]), 0.0
    se = float(v.std(ddof=1)) / math.sqrt(len(v))
    return float(v.mean()), z * se / math.sqrt(2)
