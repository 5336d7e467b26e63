"""Order flows: swap transactions grouped by destination contract, with the
per-epoch, per-builder bribe matrix that the exclusivity and market metrics
consume."""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

from .ingest import Dataset

DAY = 86_400
WEEK = 7 * DAY
GRANULARITIES = {"weekly": WEEK, "daily": DAY}


@dataclass(frozen=True, slots=True)
class Epoch:
    index: int
    start: int
    end: int  # exclusive
    granularity: str

    def contains(self, ts: int) -> bool:
        return self.start <= ts < self.end


@dataclass(frozen=True)
class EpochScheme:
    """Fixed-length UTC windows anchored at ``anchor`` (a midnight timestamp)."""

    granularity: str = "weekly"
    anchor: int = 0

    def __post_init__(self):
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {self.granularity!r}")

    @classmethod
    def for_dataset(cls, dataset: Dataset, granularity: str = "weekly", anchor: int | None = None) -> "EpochScheme":
        if anchor is None:
            first = dataset.blocks[0].timestamp if dataset.blocks else 0
            anchor = first - first % DAY
        return cls(granularity, anchor)

    @property
    def length(self) -> int:
        return GRANULARITIES[self.granularity]

    def index_of(self, ts: int) -> int:
        return (ts - self.anchor) // self.length

    def epoch(self, index: int) -> Epoch:
        start = self.anchor + index * self.length
        return Epoch(index, start, start + self.length, self.granularity)

    def epochs(self, dataset: Dataset) -> list[Epoch]:
        """Contiguous epochs covering the dataset's time range."""
        if not dataset.blocks:
            return []
        lo = self.index_of(dataset.blocks[0].timestamp)
        hi = self.index_of(dataset.blocks[-1].timestamp)
        return [self.epoch(i) for i in range(lo, hi + 1)]


@dataclass(frozen=True)
class OrderFlow:
    contract: str
    total_bribe: int
    tx_count: int
    matrix: Mapping[int, Mapping[str, int]]  # epoch -> builder -> wei (positive cells only)
    pool_volumes: Mapping[str, float]

    def epoch_total(self, epoch: int) -> int:
        return sum(self.matrix.get(epoch, {}).values())

    @property
    def active_epochs(self) -> list[int]:
        return sorted(t for t, row in self.matrix.items() if sum(row.values()) > 0)

    def builder_totals(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for row in self.matrix.values():
            for b, v in row.items():
                out[b] = out.get(b, 0) + v
        return out


@dataclass(frozen=True)
class FlowTable:
    flows: Mapping[str, OrderFlow]
    scheme: EpochScheme

    def __len__(self) -> int:
        return len(self.flows)

    def __getitem__(self, contract: str) -> OrderFlow:
        return self.flows[contract]

    def __iter__(self):
        return iter(sorted(self.flows))

    def ranked(self) -> list[OrderFlow]:
        """Flows by total bribe descending, ties by contract ascending."""
        return sorted(self.flows.values(), key=lambda f: (-f.total_bribe, f.contract))

    def total_bribe(self) -> int:
        return sum(f.total_bribe for f in self.flows.values())


def build_flows(dataset: Dataset, granularity: str = "weekly", anchor: int | None = None,
                scheme: EpochScheme | None = None) -> FlowTable:
    if scheme is None:
        scheme = EpochScheme.for_dataset(dataset, granularity, anchor)
    epoch_of_block = {b.number: scheme.index_of(b.timestamp) for b in dataset.blocks}
    builder_of_block = {b.number: b.builder for b in dataset.blocks}

    acc: dict[str, dict] = {}
    for tx in dataset.txs:
        if not tx.is_swap:
            continue
        entry = acc.get(tx.to)
        if entry is None:
            entry = acc[tx.to] = {"total": 0, "count": 0, "matrix": {}, "pools": {}}
        entry["count"] += 1
        r = tx.revenue
        if r > 0:
            entry["total"] += r
            row = entry["matrix"].setdefault(epoch_of_block[tx.block_number], {})
            b = builder_of_block[tx.block_number]
            row[b] = row.get(b, 0) + r
        for s in dataset.swaps_by_tx.get(tx.hash, ()):
            entry["pools"][s.pool] = entry["pools"].get(s.pool, 0.0) + s.amount_usd

    flows = {}
    for contract in sorted(acc):
        e = acc[contract]
        matrix = MappingProxyType({t: MappingProxyType(dict(sorted(row.items())))
                                   for t, row in sorted(e["matrix"].items())})
        flows[contract] = OrderFlow(contract, e["total"], e["count"], matrix,
                                    MappingProxyType(dict(sorted(e["pools"].items()))))
    return FlowTable(MappingProxyType(flows), scheme)


def dataset_pool_volumes(dataset: Dataset) -> dict[str, float]:
    """Accumulated USD volume of every pool over all swaps in the dataset."""
    out: dict[str, float] = {}
    for s in dataset.swaps:
        out[s.pool] = out.get(s.pool, 0.0) + s.amount_usd
    return dict(sorted(out.items()))


@dataclass(frozen=True)
class PoolProfile:
    count: int
    mean_usd: float | None
    median_usd: float | None


def flow_pool_profile(flow: OrderFlow, pool_volumes: Mapping[str, float] | None = None) -> PoolProfile:
    """Summarise the pools a flow touched.

    By default a pool's size is the flow's own accumulated volume in it.
    Pass ``pool_volumes`` (e.g. from :func:`dataset_pool_volumes`) to size
    each touched pool by its market-wide volume instead.
    """
    pools = sorted(flow.pool_volumes)
    if not pools:
        return PoolProfile(0, None, None)
    sizes = [pool_volumes[p] if pool_volumes is not None else flow.pool_volumes[p] for p in pools]
    return PoolProfile(len(sizes), statistics.fmean(sizes), statistics.median(sizes))
