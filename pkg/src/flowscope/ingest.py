"""Loading, validation and indexing of the file-based input datasets.

A dataset directory holds::

    blocks.jsonl   {number, timestamp, fee_recipient, bid}
    txs.jsonl      {hash, block, index, from, to, gas_used, priority_tip,
                    direct_bribe, swap_count[, mev_label]}
    swaps.jsonl    {tx, pool, token_in, token_out, amount_usd}
    mempool.txt    one lowercase hex tx hash per line (optional)
    builders.csv   address,builder_id,name
    labels.csv     contract,mechanism,known_eof (optional)

All monetary values are integer wei. JSON integers and decimal strings are
both accepted so that values beyond 2**53 survive non-Python producers.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping

from .errors import DanglingReference, MissingFile, SchemaViolation

PROPOSER = "proposer"

MEV_LABELS = ("none", "sandwich", "atomic_arb", "liquidation", "frontrun", "backrun")
MECHANISMS = ("protocol", "atomic", "non_atomic", "other", "unlabeled")

WEI_PER_ETH = 10**18

_ADDRESS_RE = re.compile(r"^0x[0-9a-f]{40}$")
_HASH_RE = re.compile(r"^0x[0-9a-f]{64}$")
_INT_RE = re.compile(r"^-?[0-9]+$")


@dataclass(frozen=True, slots=True)
class BlockRecord:
    number: int
    timestamp: int
    fee_recipient: str
    bid: int
    builder: str = PROPOSER


@dataclass(frozen=True, slots=True)
class TxRecord:
    hash: str
    block_number: int
    index: int
    sender: str
    to: str
    gas_used: int
    priority_tip: int
    direct_bribe: int
    swap_count: int
    is_private: bool = False
    mev_label: str = "none"

    @property
    def bribe(self) -> int:
        """Builder balance change d_t (may be negative)."""
        return self.priority_tip + self.direct_bribe

    @property
    def revenue(self) -> int:
        return self.bribe if self.bribe > 0 else 0

    @property
    def is_swap(self) -> bool:
        return self.swap_count > 0


@dataclass(frozen=True, slots=True)
class SwapRecord:
    tx_hash: str
    pool: str
    token_in: str
    token_out: str
    amount_usd: float


@dataclass(frozen=True)
class BuilderRegistry:
    addresses: Mapping[str, str]
    names: Mapping[str, str]

    def resolve(self, address: str) -> str:
        return self.addresses.get(address.lower(), PROPOSER)

    @property
    def builder_ids(self) -> list[str]:
        return sorted(set(self.addresses.values()))

    def name_of(self, builder_id: str) -> str:
        return self.names.get(builder_id, builder_id)


@dataclass(frozen=True)
class LabelSet:
    mechanisms: Mapping[str, str] = field(default_factory=dict)
    known_eof: Mapping[str, bool] = field(default_factory=dict)

    def mechanism(self, contract: str) -> str:
        return self.mechanisms.get(contract, "unlabeled")

    def is_labeled(self, contract: str) -> bool:
        return self.mechanism(contract) != "unlabeled"

    def ground_truth(self) -> dict[str, bool]:
        """Contracts listed in the label file mapped to their known-EOF flag."""
        return dict(self.known_eof)

    def __len__(self) -> int:
        return len(self.mechanisms)


@dataclass(frozen=True)
class DatasetPaths:
    blocks: Path
    txs: Path
    swaps: Path
    builders: Path
    mempool: Path | None = None
    labels: Path | None = None

    @classmethod
    def from_dir(cls, directory: str | Path) -> "DatasetPaths":
        d = Path(directory)
        mempool = d / "mempool.txt"
        labels = d / "labels.csv"
        return cls(
            blocks=d / "blocks.jsonl",
            txs=d / "txs.jsonl",
            swaps=d / "swaps.jsonl",
            builders=d / "builders.csv",
            mempool=mempool if mempool.exists() else None,
            labels=labels if labels.exists() else None,
        )


@dataclass(frozen=True)
class Dataset:
    """Immutable, indexed view over one loaded dataset."""

    blocks: tuple[BlockRecord, ...]
    txs: tuple[TxRecord, ...]
    swaps: tuple[SwapRecord, ...]
    registry: BuilderRegistry
    labels: LabelSet = field(default_factory=LabelSet)
    block_index: Mapping[int, BlockRecord] = field(init=False, repr=False, compare=False)
    txs_by_block: Mapping[int, tuple[TxRecord, ...]] = field(init=False, repr=False, compare=False)
    txs_by_contract: Mapping[str, tuple[TxRecord, ...]] = field(init=False, repr=False, compare=False)
    swaps_by_tx: Mapping[str, tuple[SwapRecord, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_block: dict[int, list[TxRecord]] = {b.number: [] for b in self.blocks}
        by_contract: dict[str, list[TxRecord]] = {}
        for tx in self.txs:
            by_block[tx.block_number].append(tx)
            by_contract.setdefault(tx.to, []).append(tx)
        by_tx: dict[str, list[SwapRecord]] = {}
        for s in self.swaps:
            by_tx.setdefault(s.tx_hash, []).append(s)
        object.__setattr__(self, "block_index", MappingProxyType({b.number: b for b in self.blocks}))
        object.__setattr__(self, "txs_by_block", MappingProxyType({k: tuple(v) for k, v in by_block.items()}))
        object.__setattr__(self, "txs_by_contract", MappingProxyType({k: tuple(v) for k, v in by_contract.items()}))
        object.__setattr__(self, "swaps_by_tx", MappingProxyType({k: tuple(v) for k, v in by_tx.items()}))

    def block(self, number: int) -> BlockRecord:
        return self.block_index[number]

    def tx_timestamp(self, tx: TxRecord) -> int:
        return self.block_index[tx.block_number].timestamp

    def tx_builder(self, tx: TxRecord) -> str:
        return self.block_index[tx.block_number].builder

    @property
    def contracts(self) -> list[str]:
        return sorted(self.txs_by_contract)

    @property
    def swap_contracts(self) -> list[str]:
        return sorted(c for c, txs in self.txs_by_contract.items() if any(t.is_swap for t in txs))

    def digest(self) -> str:
        """SHA-256 over a canonical serialisation of every record."""
        h = hashlib.sha256()
        for b in self.blocks:
            h.update(repr((b.number, b.timestamp, b.fee_recipient, b.bid, b.builder)).encode())
        for t in self.txs:
            h.update(repr((t.hash, t.block_number, t.index, t.sender, t.to, t.gas_used, t.priority_tip,
                           t.direct_bribe, t.swap_count, t.is_private, t.mev_label)).encode())
        for s in self.swaps:
            h.update(repr((s.tx_hash, s.pool, s.token_in, s.token_out, s.amount_usd)).encode())
        for a in sorted(self.registry.addresses):
            h.update(repr((a, self.registry.addresses[a])).encode())
        for c in sorted(self.labels.mechanisms):
            h.update(repr((c, self.labels.mechanisms[c], self.labels.known_eof.get(c, False))).encode())
        return h.hexdigest()


# --- field coercion -------------------------------------------------------


def _req(obj: dict, key: str, source: str, line: int):
    if key not in obj:
        raise SchemaViolation(source, line, key, "missing")
    return obj[key]


def _as_int(value, source: str, line: int, name: str, minimum: int | None = None) -> int:
    if isinstance(value, bool):
        raise SchemaViolation(source, line, name, "boolean is not an integer")
    if isinstance(value, int):
        out = value
    elif isinstance(value, str) and _INT_RE.match(value.strip()):
        out = int(value.strip())
    else:
        raise SchemaViolation(source, line, name, f"expected integer, got {value!r}")
    if minimum is not None and out < minimum:
        raise SchemaViolation(source, line, name, f"must be >= {minimum}")
    return out


def _as_address(value, source: str, line: int, name: str) -> str:
    if not isinstance(value, str) or not _ADDRESS_RE.match(value.lower()):
        raise SchemaViolation(source, line, name, f"expected 20-byte hex address, got {value!r}")
    return value.lower()


def _as_hash(value, source: str, line: int, name: str) -> str:
    if not isinstance(value, str) or not _HASH_RE.match(value.lower()):
        raise SchemaViolation(source, line, name, f"expected 32-byte hex hash, got {value!r}")
    return value.lower()


def _as_usd(value, source: str, line: int, name: str) -> float:
    if isinstance(value, bool):
        raise SchemaViolation(source, line, name, "boolean is not a number")
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise SchemaViolation(source, line, name, f"expected decimal, got {value!r}") from None
    if not (out >= 0.0) or out == float("inf"):
        raise SchemaViolation(source, line, name, "must be a finite non-negative decimal")
    return out


def _as_bool(value: str, source: str, line: int, name: str) -> bool:
    v = value.strip().lower()
    if v in ("true", "1", "yes"):
        return True
    if v in ("false", "0", "no", ""):
        return False
    raise SchemaViolation(source, line, name, f"expected boolean, got {value!r}")


def _jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    source = path.name
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(source, lineno, "<line>", f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise SchemaViolation(source, lineno, "<line>", "expected a JSON object")
            yield lineno, obj


def _require_file(path: Path | None) -> Path:
    if path is None or not Path(path).is_file():
        raise MissingFile(path)
    return Path(path)


# --- individual readers ----------------------------------------------------


def read_registry(path: str | Path) -> BuilderRegistry:
    path = _require_file(Path(path))
    addresses: dict[str, str] = {}
    names: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in ("address", "builder_id"):
            if reader.fieldnames is None or col not in reader.fieldnames:
                raise SchemaViolation(path.name, 1, col, "missing column")
        for lineno, row in enumerate(reader, start=2):
            addr = _as_address(row["address"], path.name, lineno, "address")
            builder = (row.get("builder_id") or "").strip()
            if not builder or builder == PROPOSER:
                raise SchemaViolation(path.name, lineno, "builder_id", "empty or reserved id")
            if addr in addresses:
                raise SchemaViolation(path.name, lineno, "address", "address mapped to more than one builder")
            addresses[addr] = builder
            name = (row.get("name") or "").strip()
            if name:
                names.setdefault(builder, name)
    return BuilderRegistry(MappingProxyType(addresses), MappingProxyType(names))


def read_labels(path: str | Path) -> LabelSet:
    path = _require_file(Path(path))
    mechanisms: dict[str, str] = {}
    known: dict[str, bool] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in ("contract", "mechanism"):
            if reader.fieldnames is None or col not in reader.fieldnames:
                raise SchemaViolation(path.name, 1, col, "missing column")
        for lineno, row in enumerate(reader, start=2):
            contract = _as_address(row["contract"], path.name, lineno, "contract")
            mech = (row["mechanism"] or "").strip().lower().replace("-", "_")
            if mech not in MECHANISMS:
                raise SchemaViolation(path.name, lineno, "mechanism", f"unknown mechanism {row['mechanism']!r}")
            if contract in mechanisms:
                raise SchemaViolation(path.name, lineno, "contract", "duplicate contract label")
            mechanisms[contract] = mech
            known[contract] = _as_bool(row.get("known_eof") or "", path.name, lineno, "known_eof")
    return LabelSet(MappingProxyType(mechanisms), MappingProxyType(known))


def read_mempool(path: str | Path) -> frozenset[str]:
    path = _require_file(Path(path))
    hashes = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if raw.strip():
                hashes.add(_as_hash(raw.strip(), path.name, lineno, "hash"))
    return frozenset(hashes)


def _read_blocks(path: Path, registry: BuilderRegistry) -> list[BlockRecord]:
    src = path.name
    blocks: list[BlockRecord] = []
    prev_number = prev_ts = None
    for ln, obj in _jsonl(path):
        number = _as_int(_req(obj, "number", src, ln), src, ln, "number", minimum=0)
        ts = _as_int(_req(obj, "timestamp", src, ln), src, ln, "timestamp", minimum=0)
        recipient = _as_address(_req(obj, "fee_recipient", src, ln), src, ln, "fee_recipient")
        bid = _as_int(_req(obj, "bid", src, ln), src, ln, "bid", minimum=0)
        if prev_number is not None and number <= prev_number:
            raise SchemaViolation(src, ln, "number", "block numbers must be strictly increasing")
        if prev_ts is not None and ts < prev_ts:
            raise SchemaViolation(src, ln, "timestamp", "timestamps must be non-decreasing")
        prev_number, prev_ts = number, ts
        blocks.append(BlockRecord(number, ts, recipient, bid, registry.resolve(recipient)))
    return blocks


def _read_txs(path: Path, block_numbers: set[int]) -> list[TxRecord]:
    src = path.name
    txs: list[TxRecord] = []
    seen_hash: set[str] = set()
    seen_pos: set[tuple[int, int]] = set()
    for ln, obj in _jsonl(path):
        h = _as_hash(_req(obj, "hash", src, ln), src, ln, "hash")
        if h in seen_hash:
            raise SchemaViolation(src, ln, "hash", "duplicate transaction hash")
        block = _as_int(_req(obj, "block", src, ln), src, ln, "block", minimum=0)
        if block not in block_numbers:
            raise DanglingReference(h, f"block {block} not in blocks file")
        index = _as_int(_req(obj, "index", src, ln), src, ln, "index", minimum=0)
        if (block, index) in seen_pos:
            raise SchemaViolation(src, ln, "index", f"duplicate index_in_block {index} in block {block}")
        label = obj.get("mev_label", "none")
        if label not in MEV_LABELS:
            raise SchemaViolation(src, ln, "mev_label", f"unknown label {label!r}")
        tx = TxRecord(
            hash=h,
            block_number=block,
            index=index,
            sender=_as_address(_req(obj, "from", src, ln), src, ln, "from"),
            to=_as_address(_req(obj, "to", src, ln), src, ln, "to"),
            gas_used=_as_int(_req(obj, "gas_used", src, ln), src, ln, "gas_used", minimum=1),
            priority_tip=_as_int(_req(obj, "priority_tip", src, ln), src, ln, "priority_tip", minimum=0),
            direct_bribe=_as_int(_req(obj, "direct_bribe", src, ln), src, ln, "direct_bribe"),
            swap_count=_as_int(_req(obj, "swap_count", src, ln), src, ln, "swap_count", minimum=0),
            mev_label=label,
        )
        seen_hash.add(h)
        seen_pos.add((block, index))
        txs.append(tx)
    txs.sort(key=lambda t: (t.block_number, t.index))
    return txs


def _read_swaps(path: Path, tx_hashes: set[str]) -> list[SwapRecord]:
    src = path.name
    swaps: list[SwapRecord] = []
    for ln, obj in _jsonl(path):
        tx = _as_hash(_req(obj, "tx", src, ln), src, ln, "tx")
        if tx not in tx_hashes:
            raise DanglingReference(tx, "swap references unknown transaction")
        tin = _as_address(_req(obj, "token_in", src, ln), src, ln, "token_in")
        tout = _as_address(_req(obj, "token_out", src, ln), src, ln, "token_out")
        if tin == tout:
            raise SchemaViolation(src, ln, "token_out", "token_in equals token_out")
        swaps.append(SwapRecord(
            tx_hash=tx,
            pool=_as_address(_req(obj, "pool", src, ln), src, ln, "pool"),
            token_in=tin,
            token_out=tout,
            amount_usd=_as_usd(_req(obj, "amount_usd", src, ln), src, ln, "amount_usd"),
        ))
    return swaps


def load_dataset(paths: DatasetPaths | str | Path, builder_registry: str | Path | None = None) -> Dataset:
    """Load and validate a dataset.

    ``paths`` is either a :class:`DatasetPaths` or a dataset directory. The
    load is all-or-nothing: the first violation raises and nothing is
    returned. When a mempool file is present the visibility flags are
    applied before returning.
    """
    if not isinstance(paths, DatasetPaths):
        paths = DatasetPaths.from_dir(paths)
    if builder_registry is not None:
        paths = replace(paths, builders=Path(builder_registry))
    for p in (paths.blocks, paths.txs, paths.swaps, paths.builders):
        _require_file(p)

    registry = read_registry(paths.builders)
    labels = read_labels(paths.labels) if paths.labels is not None else LabelSet()
    blocks = _read_blocks(Path(paths.blocks), registry)
    txs = _read_txs(Path(paths.txs), {b.number for b in blocks})
    swaps = _read_swaps(Path(paths.swaps), {t.hash for t in txs})
    if paths.mempool is not None:
        public = read_mempool(paths.mempool)
        txs = [replace(t, is_private=t.hash not in public) for t in txs]
    return Dataset(tuple(blocks), tuple(txs), tuple(swaps), registry, labels)


def apply_visibility(dataset: Dataset, public_hashes: Iterable[str]) -> Dataset:
    public = {h.lower() for h in public_hashes}
    txs = tuple(replace(t, is_private=t.hash not in public) for t in dataset.txs)
    return Dataset(dataset.blocks, txs, dataset.swaps, dataset.registry, dataset.labels)


def mark_visibility(dataset: Dataset, mempool_hashes: str | Path) -> Dataset:
    """Return a copy where ``is_private`` holds exactly for txs absent from the mempool file."""
    return apply_visibility(dataset, read_mempool(mempool_hashes))
