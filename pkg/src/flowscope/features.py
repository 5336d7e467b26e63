"""Nine-dimensional per-contract behaviour vectors."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from .errors import UnknownContract
from .ingest import WEI_PER_ETH, Dataset

FEATURE_NAMES = (
    "avg_swap_events_per_tx",
    "avg_gas_used",
    "avg_priority_tip_eth",
    "avg_index_in_block",
    "mev_label_frequency",
    "private_label_frequency",
    "unique_sender_count",
    "avg_txs_per_sender",
    "total_tx_count",
)

DEFAULT_MIN_TXS = 10


@dataclass(frozen=True, slots=True)
class FeatureVector:
    avg_swap_events_per_tx: float
    avg_gas_used: float
    avg_priority_tip_eth: float
    avg_index_in_block: float
    mev_label_frequency: float
    private_label_frequency: float
    unique_sender_count: int
    avg_txs_per_sender: float
    total_tx_count: int

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True, slots=True)
class ContractFeatures:
    contract: str
    vector: FeatureVector
    low_confidence: bool


def extract_features(dataset: Dataset, contract: str, min_txs: int = DEFAULT_MIN_TXS) -> ContractFeatures:
    txs = dataset.txs_by_contract.get(contract.lower())
    if not txs:
        raise UnknownContract(f"no transactions to {contract}")
    n = len(txs)
    # Integer sums with a single final division: independent of tx order.
    senders = {t.sender for t in txs}
    vec = FeatureVector(
        avg_swap_events_per_tx=sum(t.swap_count for t in txs) / n,
        avg_gas_used=sum(t.gas_used for t in txs) / n,
        avg_priority_tip_eth=sum(t.priority_tip for t in txs) / (n * WEI_PER_ETH),
        avg_index_in_block=sum(t.index for t in txs) / n,
        mev_label_frequency=sum(1 for t in txs if t.mev_label != "none") / n,
        private_label_frequency=sum(1 for t in txs if t.is_private) / n,
        unique_sender_count=len(senders),
        avg_txs_per_sender=n / len(senders),
        total_tx_count=n,
    )
    assert all(math.isfinite(v) for v in astuple(vec))
    return ContractFeatures(contract.lower(), vec, n < min_txs)


def extract_all(dataset: Dataset, contracts=None, min_txs: int = DEFAULT_MIN_TXS) -> dict[str, ContractFeatures]:
    if contracts is None:
        contracts = dataset.contracts
    return {c: extract_features(dataset, c, min_txs) for c in sorted(contracts)}
