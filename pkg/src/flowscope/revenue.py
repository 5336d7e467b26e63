"""Per-block builder revenue and profit."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import UnknownBlock
from .ingest import Dataset


@dataclass(frozen=True, slots=True)
class BlockEconomics:
    block_number: int
    builder: str
    revenue: int
    bid: int

    @property
    def profit(self) -> int:
        return self.revenue - self.bid


def block_economics(dataset: Dataset, block_number: int) -> BlockEconomics:
    # Negative balance changes are builder outflows: they add nothing to
    # revenue but stay on the tx record.
    try:
        block = dataset.block(block_number)
    except KeyError:
        raise UnknownBlock(block_number) from None
    revenue = sum(tx.revenue for tx in dataset.txs_by_block[block_number])
    return BlockEconomics(block.number, block.builder, revenue, block.bid)


def all_block_economics(dataset: Dataset) -> list[BlockEconomics]:
    return [block_economics(dataset, b.number) for b in dataset.blocks]


def trading_revenue_total(dataset: Dataset) -> int:
    """Sum of max(d_t, 0) over swap transactions, in wei."""
    return sum(tx.revenue for tx in dataset.txs if tx.is_swap)


def total_revenue(dataset: Dataset) -> int:
    return sum(tx.revenue for tx in dataset.txs)
