"""EOF Dependency Ratio (EDR): per block, EOF-derived bribes divided by the
builder's net profit, bucketed into fixed ordinal bins."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Collection, Iterable

from .errors import NoBlocks
from .ingest import Dataset
from .revenue import BlockEconomics, block_economics

BINS = ("(-inf,0)", "[0,0.5)", "[0.5,1)", "[1,10)", "[10,100)", "[100,inf)")
BREAKPOINTS = (Fraction(0), Fraction(1, 2), Fraction(1), Fraction(10), Fraction(100))
GLOBAL = "global"


@dataclass(frozen=True, slots=True)
class EdrRecord:
    block_number: int
    builder: str
    eof_bribe: int
    profit: int
    edr: float
    bin: str


def edr_bin(eof_bribe: int, profit: int) -> str:
    """Bin for an (eof_bribe, profit) pair, compared in exact arithmetic."""
    if profit < 0:
        return BINS[0]
    if profit == 0:
        return BINS[-1] if eof_bribe > 0 else BINS[1]
    ratio = Fraction(eof_bribe, profit)
    if ratio < 0:
        return BINS[0]
    idx = 0
    for i, b in enumerate(BREAKPOINTS):
        if ratio >= b:
            idx = i
    return BINS[idx + 1]


def edr_value(eof_bribe: int, profit: int) -> float:
    if profit == 0:
        return math.inf if eof_bribe > 0 else 0.0
    return eof_bribe / profit


def edr_for_block(economics: BlockEconomics, eof_set: Collection[str], dataset: Dataset) -> EdrRecord:
    eof_bribe = sum(tx.revenue for tx in dataset.txs_by_block[economics.block_number] if tx.to in eof_set)
    profit = economics.profit
    return EdrRecord(economics.block_number, economics.builder, eof_bribe, profit,
                     edr_value(eof_bribe, profit), edr_bin(eof_bribe, profit))


def edr_records(dataset: Dataset, eof_set: Collection[str]) -> list[EdrRecord]:
    eofs = frozenset(eof_set)
    return [edr_for_block(block_economics(dataset, b.number), eofs, dataset) for b in dataset.blocks]


def edr_histogram(records: Iterable[EdrRecord], builder: str) -> dict[str, float]:
    """Fraction of the builder's blocks in each bin. ``builder="global"`` pools every block."""
    counts = dict.fromkeys(BINS, 0)
    n = 0
    for r in records:
        if builder == GLOBAL or r.builder == builder:
            counts[r.bin] += 1
            n += 1
    if n == 0:
        raise NoBlocks(f"builder {builder!r} has no blocks")
    return {b: c / n for b, c in counts.items()}
