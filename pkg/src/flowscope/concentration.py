"""Longitudinal market structure: weekly HHI, builder categories, per-phase
mechanism composition and the daily share-vs-EOF Pearson correlation."""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Collection, Iterable, Mapping, Sequence

from .errors import ConstantSeries, EmptyPhase, InsufficientDays
from .flows import EpochScheme
from .ingest import PROPOSER, Dataset

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

DOMINANT, INFLUENTIAL, NICHE = "dominant", "influential", "niche"
MECHANISM_CATEGORIES = ("protocol", "atomic", "non_atomic", "miscellaneous")
DEFAULT_PHASE_BOUNDARIES = ("2022-09-01", "2023-01-01", "2023-10-01", "2024-10-01", "2025-08-31")
DEFAULT_PHASE_NAMES = ("genesis", "algorithm_wars", "eof_moats", "oligopoly")


def hhi(shares: Iterable[float]) -> float:
    return math.fsum(s * s for s in shares)


def hhi_from_counts(counts: Iterable[int]) -> float:
    """Sum of squared shares computed as one exact integer quotient."""
    counts = list(counts)
    total = sum(counts)
    return sum(q * q for q in counts) / (total * total)


def epoch_counts(dataset: Dataset, scheme: EpochScheme) -> dict[int, dict[str, int]]:
    out: dict[int, dict[str, int]] = {}
    for b in dataset.blocks:
        row = out.setdefault(scheme.index_of(b.timestamp), {})
        row[b.builder] = row.get(b.builder, 0) + 1
    return {t: dict(sorted(row.items())) for t, row in sorted(out.items())}


@dataclass(frozen=True)
class HhiPoint:
    epoch: int
    start: int
    hhi: float
    builders: int
    blocks: int


def hhi_series(dataset: Dataset, scheme: EpochScheme | None = None) -> list[HhiPoint]:
    if scheme is None:
        scheme = EpochScheme.for_dataset(dataset, "weekly")
    return [HhiPoint(t, scheme.epoch(t).start, hhi_from_counts(row.values()), len(row), sum(row.values()))
            for t, row in epoch_counts(dataset, scheme).items()]


def weekly_shares(dataset: Dataset, scheme: EpochScheme | None = None) -> dict[int, dict[str, float]]:
    if scheme is None:
        scheme = EpochScheme.for_dataset(dataset, "weekly")
    out = {}
    for t, row in epoch_counts(dataset, scheme).items():
        total = sum(row.values())
        out[t] = {b: q / total for b, q in row.items()}
    return out


def categorize(peak_share: float) -> str:
    if peak_share > 0.5:
        return DOMINANT
    if peak_share > 0.1:
        return INFLUENTIAL
    return NICHE


def categorize_builders(dataset: Dataset, scheme: EpochScheme | None = None,
                        include_proposer: bool = False) -> dict[str, str]:
    """Category from each builder's peak weekly share (strict > 0.5 / > 0.1)."""
    if scheme is None:
        scheme = EpochScheme.for_dataset(dataset, "weekly")
    peak: dict[str, tuple[int, int]] = {}
    for row in epoch_counts(dataset, scheme).values():
        total = sum(row.values())
        for b, q in row.items():
            if b not in peak or q * peak[b][1] > peak[b][0] * total:
                peak[b] = (q, total)
    out = {}
    for b, (q, total) in sorted(peak.items()):
        if b == PROPOSER and not include_proposer:
            continue
        # integer comparisons avoid float rounding at the 0.5 / 0.1 boundaries
        out[b] = DOMINANT if 2 * q > total else INFLUENTIAL if 10 * q > total else NICHE
    return out


# --- phases ------------------------------------------------------------------


@dataclass(frozen=True)
class Phase:
    name: str
    start: int  # UTC seconds, inclusive
    end: int  # exclusive

    def contains(self, ts: int) -> bool:
        return self.start <= ts < self.end


def _to_ts(value) -> int:
    if isinstance(value, datetime):
        dt = value if value.tzinfo else value.replace(tzinfo=timezone.utc)
        return int(dt.timestamp())
    if isinstance(value, date):
        return int(datetime(value.year, value.month, value.day, tzinfo=timezone.utc).timestamp())
    if isinstance(value, int):
        return value
    return _to_ts(date.fromisoformat(str(value)))


def phases_from_boundaries(boundaries: Sequence, names: Sequence[str] | None = None) -> list[Phase]:
    ts = [_to_ts(b) for b in boundaries]
    if any(a >= b for a, b in zip(ts, ts[1:])):
        raise ValueError("phase boundaries must be strictly increasing")
    if names is None:
        names = [f"phase{i + 1}" for i in range(len(ts) - 1)]
    if len(names) != len(ts) - 1:
        raise ValueError("need exactly one name per phase")
    return [Phase(n, a, b) for n, a, b in zip(names, ts, ts[1:])]


def default_phases() -> list[Phase]:
    return phases_from_boundaries(DEFAULT_PHASE_BOUNDARIES, DEFAULT_PHASE_NAMES)


def load_phases(path: str | Path) -> list[Phase]:
    """Read phases from TOML: either ``boundaries = [...]`` (+ optional
    ``names``) or a ``[[phase]]`` array with name/start/end."""
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    if "phase" in cfg:
        return [Phase(str(p["name"]), _to_ts(p["start"]), _to_ts(p["end"])) for p in cfg["phase"]]
    return phases_from_boundaries(cfg["boundaries"], cfg.get("names"))


@dataclass(frozen=True)
class PhaseComposition:
    phase: str
    totals: Mapping[str, int]  # wei per mechanism
    fractions: Mapping[str, float] | None  # None when the phase holds no flow bribes


def phase_composition(dataset: Dataset, mechanisms: Mapping[str, str], phases: Sequence[Phase],
                      skip_empty: bool = False) -> list[PhaseComposition]:
    """Share of flow bribes per mechanism within each phase.

    Only swap transactions to contracts present in ``mechanisms`` count.
    An empty phase raises :class:`EmptyPhase` unless ``skip_empty`` is set,
    in which case its fractions are ``None``.
    """
    totals = [dict.fromkeys(MECHANISM_CATEGORIES, 0) for _ in phases]
    for tx in dataset.txs:
        if not tx.is_swap or tx.to not in mechanisms:
            continue
        r = tx.revenue
        if r == 0:
            continue
        ts = dataset.tx_timestamp(tx)
        for i, ph in enumerate(phases):
            if ph.contains(ts):
                mech = mechanisms[tx.to]
                totals[i][mech] = totals[i].get(mech, 0) + r
                break
    out = []
    for ph, tot in zip(phases, totals):
        s = sum(tot.values())
        if s == 0:
            if not skip_empty:
                raise EmptyPhase(f"phase {ph.name!r} carries no flow bribes")
            out.append(PhaseComposition(ph.name, tot, None))
            continue
        out.append(PhaseComposition(ph.name, tot, {m: v / s for m, v in tot.items()}))
    return out


# --- correlation --------------------------------------------------------------


def _sqrt_ratio(num: int, den: int) -> float:
    """sqrt(num / den) for non-negative integers, to within rounding of the last bit."""
    # scale so the integer root carries about 80 significant bits
    bits = 80 + max(0, den.bit_length() - num.bit_length())
    root = math.isqrt((num << (2 * bits)) // den)
    return math.ldexp(float(root), -bits)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Two-pass Pearson correlation carried out in exact rational arithmetic.

    Means, deviations and the three sums are exact; only the final square
    root is rounded. Exactly collinear inputs therefore give exactly +-1.
    """
    n = len(x)
    if n != len(y):
        raise ValueError("series differ in length")
    if n < 2:
        raise ConstantSeries("need at least two observations")
    fx = [Fraction(v) for v in x]
    fy = [Fraction(v) for v in y]
    mx = sum(fx) / n
    my = sum(fy) / n
    dx = [v - mx for v in fx]
    dy = [v - my for v in fy]
    sxx = sum(d * d for d in dx)
    syy = sum(d * d for d in dy)
    if sxx == 0 or syy == 0:
        raise ConstantSeries("a series is constant; r is undefined")
    sxy = sum(a * b for a, b in zip(dx, dy))
    r2 = sxy * sxy / (sxx * syy)
    r = _sqrt_ratio(r2.numerator, r2.denominator)
    return math.copysign(min(r, 1.0), sxy)


@dataclass(frozen=True)
class CorrelationResult:
    builder: str
    r: float | None
    days: tuple[int, ...]  # day index of each kept observation
    shares: tuple[float, ...]
    eof_ratios: tuple[float, ...]
    dropped_days: int


def daily_share_eof_series(dataset: Dataset, eof_set: Collection[str], builder: str):
    scheme = EpochScheme.for_dataset(dataset, "daily")
    blocks: dict[int, int] = {}
    own: dict[int, int] = {}
    trading: dict[int, int] = {}
    eof: dict[int, int] = {}
    day_of_block = {}
    for b in dataset.blocks:
        d = scheme.index_of(b.timestamp)
        day_of_block[b.number] = d
        blocks[d] = blocks.get(d, 0) + 1
        if b.builder == builder:
            own[d] = own.get(d, 0) + 1
    for tx in dataset.txs:
        if not tx.is_swap:
            continue
        d = day_of_block[tx.block_number]
        trading[d] = trading.get(d, 0) + tx.revenue
        if tx.to in eof_set and dataset.tx_builder(tx) == builder:
            eof[d] = eof.get(d, 0) + tx.revenue
    days, shares, ratios = [], [], []
    dropped = 0
    for d in sorted(blocks):
        if trading.get(d, 0) == 0:
            dropped += 1
            continue
        days.append(d)
        shares.append(own.get(d, 0) / blocks[d])
        ratios.append(eof.get(d, 0) / trading[d])
    return days, shares, ratios, dropped, sum(1 for d in own if own[d] > 0)


def eof_share_correlation(dataset: Dataset, eof_set: Collection[str], builder: str,
                          min_active_days: int = 3) -> CorrelationResult:
    """Pearson r between the builder's daily block share and its daily EOF
    bribes over total trading revenue that day. Days with zero trading
    revenue are dropped and counted."""
    days, shares, ratios, dropped, active = daily_share_eof_series(dataset, frozenset(eof_set), builder)
    if active < min_active_days:
        raise InsufficientDays(f"builder {builder!r} is active on {active} day(s); need {min_active_days}")
    try:
        r = pearson(shares, ratios)
    except ConstantSeries:
        r = None
    return CorrelationResult(builder, r, tuple(days), tuple(shares), tuple(ratios), dropped)
