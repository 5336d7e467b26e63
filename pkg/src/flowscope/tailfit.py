"""Continuous power-law tail fit (MLE exponent, KS-minimising x_min) and
top-k concentration of per-flow bribes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientTail

MIN_TAIL = 10


@dataclass(frozen=True)
class TailFit:
    alpha: float
    x_min: float
    ks_statistic: float
    n_tail: int


def power_law_cdf(x, alpha: float, x_min: float):
    return 1.0 - np.power(np.asarray(x, dtype=float) / x_min, 1.0 - alpha)


def ks_distance(tail: np.ndarray, alpha: float, x_min: float) -> float:
    """Supremum gap between the tail's empirical CDF and the fitted CDF.

    ``tail`` must be sorted ascending. Both one-sided limits of the
    empirical step function are checked at every distinct value, so ties
    are handled exactly.
    """
    n = len(tail)
    vals, first = np.unique(tail, return_index=True)
    below = first / n  # ECDF just left of each value
    at = np.append(first[1:], n) / n  # ECDF at each value
    model = power_law_cdf(vals, alpha, x_min)
    return float(max(np.max(np.abs(at - model)), np.max(np.abs(model - below))))


def mle_alpha(tail: np.ndarray, x_min: float) -> float:
    s = float(np.sum(np.log(tail / x_min)))
    if s <= 0:
        raise InsufficientTail("all tail samples equal x_min; the exponent is undefined")
    return 1.0 + len(tail) / s


def fit_power_law(values: Iterable[float], x_min: float | None = None, min_tail: int = MIN_TAIL) -> TailFit:
    """Fit a continuous power law to positive samples.

    With ``x_min=None`` every distinct sample value leaving at least
    ``min_tail`` samples at or above it is tried, and the candidate with the
    smallest KS distance wins (smaller x_min on ties).
    """
    x = np.sort(np.asarray(list(values), dtype=float))
    if len(x) and (x[0] <= 0 or not np.all(np.isfinite(x))):
        raise ValueError("samples must be positive and finite")
    if x_min is not None:
        tail = x[x >= x_min]
        if len(tail) < min_tail:
            raise InsufficientTail(f"{len(tail)} samples at or above x_min={x_min}; need {min_tail}")
        a = mle_alpha(tail, x_min)
        return TailFit(a, float(x_min), ks_distance(tail, a, x_min), len(tail))

    n = len(x)
    if n < min_tail:
        raise InsufficientTail(f"{n} samples; need at least {min_tail}")
    # logs are taken relative to the smallest sample so that rescaling the data leaves them
    # unchanged; suffix sums then give sum(log(x_i / x_min)) for every candidate in O(1)
    logs = np.log(x / x[0])
    suffix = np.concatenate([np.cumsum(logs[::-1])[::-1], [0.0]])
    vals, firsts = np.unique(x, return_index=True)
    ends = np.append(firsts[1:], n)
    best = None
    for j, i in enumerate(firsts):
        m = n - i
        if m < min_tail:
            break
        s = suffix[i] - m * logs[i]
        if s <= 0:
            continue
        a = 1.0 + m / s
        # same computation as ks_distance, reusing the global tie structure
        model = 1.0 - np.power(vals[j:] / vals[j], 1.0 - a)
        d = float(max(np.max(np.abs((ends[j:] - i) / m - model)),
                      np.max(np.abs(model - (firsts[j:] - i) / m))))
        if best is None or d < best.ks_statistic:
            best = TailFit(float(a), float(vals[j]), d, int(m))
    if best is None:
        raise InsufficientTail("no candidate x_min leaves a non-degenerate tail")
    return best


def sample_power_law(n: int, alpha: float, x_min: float, rng: np.random.Generator) -> np.ndarray:
    """Inverse-transform draws from a continuous power law."""
    u = rng.random(n)
    return x_min * np.power(1.0 - u, -1.0 / (alpha - 1.0))


def concentration_summary(values: Sequence[float], k: int) -> float:
    """Share of the total held by the ``k`` largest values."""
    vals = sorted((float(v) for v in values), reverse=True)
    if not vals:
        raise ValueError("concentration_summary needs at least one value")
    total = math.fsum(vals)
    if total == 0:
        raise ValueError("values sum to zero")
    return math.fsum(vals[:k]) / total
