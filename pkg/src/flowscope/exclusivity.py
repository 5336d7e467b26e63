"""Order-flow exclusivity: KL divergence of a flow's per-epoch bribe split
from the builder market-share distribution, weighted by the square root of
the epoch's bribe volume in ETH and summed over active epochs.

Also provides the F1-maximising threshold sweep used to turn scores into
an EOF set.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from types import MappingProxyType
from typing import Mapping, Sequence, Union

from .errors import DegenerateGroundTruth, EmptyEpoch, SupportViolation
from .flows import Epoch, EpochScheme, FlowTable, OrderFlow
from .ingest import WEI_PER_ETH, Dataset, LabelSet


@dataclass(frozen=True)
class MarketDistribution:
    epoch: int
    counts: Mapping[str, int]
    total: int

    @property
    def shares(self) -> dict[str, float]:
        return {b: q / self.total for b, q in self.counts.items()}

    def share(self, builder: str) -> float:
        return self.counts.get(builder, 0) / self.total


def market_distribution(dataset: Dataset, epoch: Epoch) -> MarketDistribution:
    counts: dict[str, int] = {}
    for b in dataset.blocks:
        if epoch.contains(b.timestamp):
            counts[b.builder] = counts.get(b.builder, 0) + 1
    if not counts:
        raise EmptyEpoch(f"epoch {epoch.index} [{epoch.start}, {epoch.end}) has no blocks")
    return MarketDistribution(epoch.index, MappingProxyType(dict(sorted(counts.items()))), sum(counts.values()))


def market_distributions(dataset: Dataset, scheme: EpochScheme) -> dict[int, MarketDistribution]:
    """Distributions for every epoch that contains at least one block."""
    counts: dict[int, dict[str, int]] = {}
    for b in dataset.blocks:
        row = counts.setdefault(scheme.index_of(b.timestamp), {})
        row[b.builder] = row.get(b.builder, 0) + 1
    return {
        t: MarketDistribution(t, MappingProxyType(dict(sorted(row.items()))), sum(row.values()))
        for t, row in sorted(counts.items())
    }


Distribution = Union[Mapping[str, float], Sequence[float]]


def _align(p: Distribution, s: Distribution) -> tuple[list, list]:
    if isinstance(p, Mapping) or isinstance(s, Mapping):
        if not (isinstance(p, Mapping) and isinstance(s, Mapping)):
            raise TypeError("p and s must both be mappings or both be sequences")
        keys = sorted(set(p) | set(s))
        return [p.get(k, 0.0) for k in keys], [s.get(k, 0.0) for k in keys]
    p, s = list(p), list(s)
    if len(p) != len(s):
        raise ValueError("p and s must have the same length")
    return p, s


def kl_divergence(p: Distribution, s: Distribution) -> float:
    """D_KL(p || s) in nats, with 0 * ln(0 / s) = 0."""
    pv, sv = _align(p, s)
    terms = []
    for pi, si in zip(pv, sv):
        if pi <= 0:
            continue
        if si <= 0:
            raise SupportViolation(f"p_i={pi} has no market support (s_i={si})")
        terms.append(pi * math.log(pi / si))
    return max(0.0, math.fsum(terms))


def epoch_kl(row: Mapping[str, int], market: MarketDistribution) -> float:
    """KL term for one epoch from integer bribe cells and block counts.

    The ratio p_i / s_i is formed as one exact integer quotient, so a split
    proportional to block counts yields exactly zero.
    """
    r_total = sum(row.values())
    terms = []
    for builder, r in row.items():
        if r <= 0:
            continue
        q = market.counts.get(builder, 0)
        if q == 0:
            raise SupportViolation(
                f"flow pays builder {builder!r} which built no block in epoch {market.epoch}")
        terms.append((r / r_total) * math.log((r * market.total) / (r_total * q)))
    return max(0.0, math.fsum(terms))


@dataclass(frozen=True)
class ExclusivityScore:
    contract: str
    kl_terms: Mapping[int, float]
    weights: Mapping[int, float]  # sqrt(R_t) with R_t in ETH
    total: float
    total_bribe: int

    @property
    def active_epochs(self) -> int:
        return len(self.kl_terms)

    @property
    def avg_kl(self) -> float:
        if not self.kl_terms:
            return 0.0
        return math.fsum(self.kl_terms.values()) / len(self.kl_terms)


def exclusivity_score(flow: OrderFlow, markets: Mapping[int, MarketDistribution]) -> ExclusivityScore:
    kls: dict[int, float] = {}
    weights: dict[int, float] = {}
    for t in flow.active_epochs:
        if t not in markets:
            raise SupportViolation(f"flow {flow.contract} is active in epoch {t} which has no blocks")
        row = flow.matrix[t]
        kls[t] = epoch_kl(row, markets[t])
        weights[t] = math.sqrt(sum(row.values()) / WEI_PER_ETH)
    total = math.fsum(kls[t] * weights[t] for t in kls)
    return ExclusivityScore(flow.contract, MappingProxyType(kls), MappingProxyType(weights), total, flow.total_bribe)


def score_flows(table: FlowTable, markets: Mapping[int, MarketDistribution],
                threads: int = 1) -> dict[str, ExclusivityScore]:
    contracts = sorted(table.flows)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scored = list(pool.map(lambda c: exclusivity_score(table.flows[c], markets), contracts))
    else:
        scored = [exclusivity_score(table.flows[c], markets) for c in contracts]
    return dict(zip(contracts, scored))


# --- threshold selection ---------------------------------------------------


@dataclass(frozen=True)
class ThresholdResult:
    threshold: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    curve: tuple[tuple[float, float, float, float], ...]  # (tau, precision, recall, f1)


def _value(x) -> float:
    return x.total if isinstance(x, ExclusivityScore) else float(x)


def _prf(tp: int, fp: int, fn: int) -> tuple[Fraction, Fraction, Fraction]:
    precision = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
    recall = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
    f1 = Fraction(2 * tp, 2 * tp + fp + fn) if tp else Fraction(0)
    return precision, recall, f1


def threshold_candidates(values: Sequence[float]) -> list[float]:
    """One threshold per distinct partition under the strict ``score > tau`` rule:
    just below the minimum, the midpoints between consecutive distinct
    scores, and the maximum."""
    distinct = sorted(set(values))
    if not distinct:
        return []
    cands = [math.nextafter(distinct[0], -math.inf)]
    for lo, hi in zip(distinct, distinct[1:]):
        mid = lo + (hi - lo) / 2
        cands.append(mid if lo <= mid < hi else lo)
    cands.append(distinct[-1])
    return cands


def optimize_threshold(scores: Mapping[str, object], ground_truth: Mapping[str, bool] | LabelSet) -> ThresholdResult:
    """Sweep every candidate cut and keep the one maximising F1 (smallest on ties).

    Ground-truth contracts without a score are treated as scoring 0.
    """
    truth = ground_truth.ground_truth() if isinstance(ground_truth, LabelSet) else dict(ground_truth)
    n_pos = sum(1 for v in truth.values() if v)
    if n_pos == 0 or n_pos == len(truth):
        raise DegenerateGroundTruth(
            f"ground truth needs both classes (positives={n_pos}, negatives={len(truth) - n_pos})")
    items = sorted((_value(scores[c]) if c in scores else 0.0, bool(y)) for c, y in truth.items())

    distinct = sorted({v for v, _ in items})
    pos_at = {v: 0 for v in distinct}
    neg_at = {v: 0 for v in distinct}
    for v, y in items:
        if y:
            pos_at[v] += 1
        else:
            neg_at[v] += 1

    cands = threshold_candidates([v for v, _ in items])
    curve = []
    best = None
    # predicted positive = strictly above tau; walk tau upward
    tp, fp = n_pos, len(items) - n_pos
    k = 0
    for tau in cands:
        while k < len(distinct) and distinct[k] <= tau:
            tp -= pos_at[distinct[k]]
            fp -= neg_at[distinct[k]]
            k += 1
        fn = n_pos - tp
        p, r, f1 = _prf(tp, fp, fn)
        curve.append((tau, float(p), float(r), float(f1)))
        if best is None or f1 > best[0]:
            best = (f1, tau, p, r, tp, fp, fn)
    f1, tau, p, r, tp, fp, fn = best
    return ThresholdResult(tau, float(p), float(r), float(f1), tp, fp, fn, tuple(curve))


def classify_eof(scores: Mapping[str, object], tau: float) -> frozenset[str]:
    if not math.isfinite(tau):
        raise ValueError("threshold must be finite")
    return frozenset(c for c, s in scores.items() if _value(s) > tau)
