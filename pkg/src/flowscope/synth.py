"""Seeded synthetic datasets with a manifest of the planted ground truth.

Randomness comes from numpy's PCG64. Every stream is derived from the
scenario seed plus a string key (``"flow:<name>"``, ``"blocks:<week>"``,
``"filler:<block>"``...) through ``SeedSequence`` spawn keys, so a flow's
transactions do not depend on how many other flows precede it.

Manifest schema (``manifest.json``)::

    schema              "flowscope-manifest/1"
    seed, anchor, weeks
    counts              blocks, txs, swap_txs, swaps, flows, public_txs
    weekly_blocks       week -> builder -> block count
    weekly_shares       week -> builder -> share
    revenue             total_wei, trading_wei
    block_revenue       block number -> R_B (wei)
    flows               contract -> name, mechanism, planted_eof, target_builder,
                        exclusivity, labeled, known_eof, tx_count, total_bribe_wei,
                        mev_frequency, private_frequency, expected_category
    bribe_matrix        contract -> week -> builder -> wei
    phases              [{name, start_week, end_week, start, end, totals, fractions}]
    expected_categories category -> count over all flows
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from decimal import Decimal
from pathlib import Path
from typing import Any

import numpy as np

from .errors import InvalidConfig
from .ingest import PROPOSER, WEI_PER_ETH

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

DAY = 86_400
WEEK = 7 * DAY
FLOW_MECHANISMS = ("protocol", "atomic", "non_atomic", "other")
CATEGORY_OF = {"protocol": "protocol", "atomic": "atomic", "non_atomic": "non_atomic", "other": "miscellaneous"}
ATOMIC_MEV_LABELS = ("atomic_arb", "sandwich", "backrun", "liquidation", "frontrun")
SCENARIO_DIR = Path(__file__).parent / "scenarios"
N_VALIDATORS = 64
N_TOKENS = 40
# Label-noise rate at which the forest lands in the low-to-mid 0.9s on 210 examples.
OVERLAP_CALIBRATED = 0.03


def _hex(*parts: Any, nbytes: int) -> str:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).hexdigest()
    return "0x" + digest[: 2 * nbytes]


def stream(seed: int, key: str) -> np.random.Generator:
    """Independent PCG64 stream for ``key`` under ``seed``."""
    k = int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(k,))))


def _wei(eth) -> int:
    return int(Decimal(str(eth)) * WEI_PER_ETH)


# --- configuration -----------------------------------------------------------


@dataclass
class BuilderSpec:
    id: str
    name: str = ""
    addresses: int = 1
    shares: list[float] = field(default_factory=list)

    def share(self, week: int) -> float:
        return self.shares[week] if len(self.shares) > 1 else self.shares[0]


@dataclass
class FlowSpec:
    name: str
    mechanism: str
    count: int = 1
    bribe_eth_per_week: float = 1.0
    bribe_decay: float = 0.0
    txs_per_week: float = 10.0
    active_weeks: tuple[int, int] | None = None
    exclusive_to: str | None = None
    exclusivity: float = 0.0
    senders: int = 1
    swap_count: tuple[int, int] = (1, 1)
    privacy: float = 0.0
    mev_rate: float = 0.0
    gas: tuple[int, int] = (100_000, 200_000)
    tip_fraction: tuple[float, float] = (0.2, 0.6)
    pools: int = 5
    label: bool | int = False
    known_eof: bool | None = None


@dataclass
class PhaseMix:
    boundaries: list[int]
    weekly_budget_eth: float
    targets: dict[str, list[float]]
    names: list[str] | None = None


@dataclass
class ScenarioConfig:
    seed: int = 0
    start: str = "2024-09-02"
    weeks: int = 1
    blocks_per_week: int = 10
    start_block: int = 18_000_000
    filler_txs_per_block: int = 0
    payout_rate: float = 0.0
    subsidy_rate: float = 0.0
    pool_universe: int = 100
    builders: list[BuilderSpec] = field(default_factory=list)
    flows: list[FlowSpec] = field(default_factory=list)
    phase_mix: PhaseMix | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        try:
            builders = [BuilderSpec(**b) for b in d.pop("builders", [])]
            flows = []
            for f in d.pop("flows", []):
                f = dict(f)
                for key in ("active_weeks", "swap_count", "gas", "tip_fraction"):
                    if key in f and f[key] is not None:
                        f[key] = tuple(f[key])
                flows.append(FlowSpec(**f))
            pm = d.pop("phase_mix", None)
            phase_mix = PhaseMix(**pm) if pm else None
            if isinstance(d.get("start"), (date, datetime)):
                d["start"] = d["start"].isoformat()[:10]
            cfg = cls(builders=builders, flows=flows, phase_mix=phase_mix, **d)
        except TypeError as exc:
            raise InvalidConfig(f"bad scenario field: {exc}") from None
        cfg.validate()
        return cfg

    @classmethod
    def from_toml(cls, path: str | Path) -> "ScenarioConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    @property
    def anchor(self) -> int:
        d = date.fromisoformat(self.start)
        return int(datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp())

    def validate(self) -> None:
        def bad(msg):
            raise InvalidConfig(msg)

        try:
            date.fromisoformat(self.start)
        except ValueError:
            bad(f"start {self.start!r} is not an ISO date")
        if self.weeks < 1 or self.blocks_per_week < 1:
            bad("weeks and blocks_per_week must be positive")
        for name in ("payout_rate", "subsidy_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                bad(f"{name} must lie in [0, 1]")
        if not self.builders:
            bad("at least one builder is required")
        ids = [b.id for b in self.builders]
        if len(set(ids)) != len(ids):
            bad("duplicate builder id")
        for b in self.builders:
            if len(b.shares) not in (1, self.weeks):
                bad(f"builder {b.id}: give one share or one per week")
            if any(s < 0 for s in b.shares):
                bad(f"builder {b.id}: negative share")
        for w in range(self.weeks):
            total = sum(b.share(w) for b in self.builders)
            if abs(total - 1.0) > 1e-9:
                bad(f"week {w}: shares sum to {total}, not 1")
        names = set()
        for f in self.flows:
            if f.name in names:
                bad(f"duplicate flow name {f.name!r}")
            names.add(f.name)
            if f.mechanism not in FLOW_MECHANISMS:
                bad(f"flow {f.name}: unknown mechanism {f.mechanism!r}")
            if f.count < 1 or f.senders < 1 or f.pools < 1 or f.txs_per_week <= 0:
                bad(f"flow {f.name}: count, senders, pools and txs_per_week must be positive")
            for rate in ("exclusivity", "privacy", "mev_rate"):
                if not 0.0 <= getattr(f, rate) <= 1.0:
                    bad(f"flow {f.name}: {rate} must lie in [0, 1]")
            if not 1 <= f.swap_count[0] <= f.swap_count[1]:
                bad(f"flow {f.name}: swap_count range must start at >= 1")
            if not 21_000 <= f.gas[0] <= f.gas[1]:
                bad(f"flow {f.name}: bad gas range")
            if not 0.0 <= f.tip_fraction[0] <= f.tip_fraction[1] <= 1.0:
                bad(f"flow {f.name}: bad tip_fraction range")
            lo, hi = f.active_weeks or (0, self.weeks)
            if not 0 <= lo < hi <= self.weeks:
                bad(f"flow {f.name}: active_weeks outside [0, {self.weeks}]")
            if f.exclusive_to is not None:
                if f.exclusive_to not in ids:
                    bad(f"flow {f.name}: unknown builder {f.exclusive_to!r}")
                spec = self.builders[ids.index(f.exclusive_to)]
                if any(spec.share(w) <= 0 for w in range(lo, hi)):
                    bad(f"flow {f.name}: {f.exclusive_to} has zero share in an active week")
        pm = self.phase_mix
        if pm is not None:
            if pm.boundaries[0] != 0 or pm.boundaries[-1] != self.weeks or sorted(set(pm.boundaries)) != pm.boundaries:
                bad("phase_mix boundaries must increase from 0 to weeks")
            n_phases = len(pm.boundaries) - 1
            for mech, fr in pm.targets.items():
                if mech not in FLOW_MECHANISMS:
                    bad(f"phase_mix: unknown mechanism {mech!r}")
                if len(fr) != n_phases or any(not 0 <= v <= 1 for v in fr):
                    bad(f"phase_mix: {mech} needs {n_phases} rates in [0, 1]")
            for p in range(n_phases):
                if sum(Decimal(str(fr[p])) for fr in pm.targets.values()) != 1:
                    bad(f"phase_mix: targets of phase {p} do not sum to 1")
            if pm.names is not None and len(pm.names) != n_phases:
                bad("phase_mix: one name per phase")


def load_scenario(name_or_path: str | Path) -> ScenarioConfig:
    """Load a TOML scenario by path, or by name from the bundled scenarios."""
    p = Path(name_or_path)
    if not p.exists():
        p = SCENARIO_DIR / f"{name_or_path}.toml"
    if not p.exists():
        raise InvalidConfig(f"no scenario {name_or_path!r}")
    return ScenarioConfig.from_toml(p)


# --- generation ----------------------------------------------------------------


@dataclass
class _Tx:
    hash: str
    block: int
    sender: str
    to: str
    gas_used: int
    priority_tip: int
    direct_bribe: int
    swap_count: int
    private: bool
    mev_label: str
    order: tuple
    swaps: list[dict]
    flow: str | None = None
    index: int = 0

    @property
    def revenue(self) -> int:
        return max(self.priority_tip + self.direct_bribe, 0)


@dataclass
class _FlowInstance:
    name: str
    spec: FlowSpec
    replica: int
    labeled: bool
    contract: str


def _largest_remainder(shares: list[float], total: int) -> list[int]:
    raw = [s * total for s in shares]
    base = [int(r) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[: total - sum(base)]:
        base[i] += 1
    return base


def _instances(cfg: ScenarioConfig) -> list[_FlowInstance]:
    out = []
    for spec in cfg.flows:
        for r in range(spec.count):
            name = spec.name if spec.count == 1 else f"{spec.name}-{r:02d}"
            labeled = spec.label if isinstance(spec.label, bool) else r < int(spec.label)
            out.append(_FlowInstance(name, spec, r, labeled, _hex("contract", cfg.seed, name, nbytes=20)))
    return out


def _phase_budgets(cfg: ScenarioConfig, instances: list[_FlowInstance]) -> dict[tuple[str, int], int]:
    """Per (flow, week) bribe budget in wei under a phase mix."""
    pm = cfg.phase_mix
    budgets = {}
    for p, (lo, hi) in enumerate(zip(pm.boundaries, pm.boundaries[1:])):
        for w in range(lo, hi):
            for mech, fr in pm.targets.items():
                amount = int(Decimal(str(pm.weekly_budget_eth)) * Decimal(str(fr[p])) * WEI_PER_ETH)
                active = sorted(i.name for i in instances if i.spec.mechanism == mech
                                and (i.spec.active_weeks or (0, cfg.weeks))[0] <= w
                                < (i.spec.active_weeks or (0, cfg.weeks))[1])
                if amount and not active:
                    raise InvalidConfig(f"phase_mix: no active {mech} flow in week {w}")
                for k, name in enumerate(active):
                    share = amount // len(active) + (amount % len(active) if k == 0 else 0)
                    budgets[(name, w)] = share
    return budgets


def _allocate(total: int, weights: np.ndarray) -> list[int]:
    """Split an integer total proportionally to weights, exactly."""
    wsum = float(weights.sum())
    parts = [int(total * (float(w) / wsum)) for w in weights]
    parts[0] += total - sum(parts)
    return parts


def generate(config: ScenarioConfig, out_dir: str | Path) -> dict:
    """Write the dataset files for ``config`` into ``out_dir`` and return the manifest."""
    cfg = config
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seed
    anchor = cfg.anchor
    spacing = WEEK // cfg.blocks_per_week

    # builders and addresses
    builder_addrs: dict[str, list[str]] = {}
    for b in cfg.builders:
        if b.id != PROPOSER:
            builder_addrs[b.id] = [_hex("builder", b.id, k, nbytes=20) for k in range(b.addresses)]
    validators = [_hex("validator", seed, k, nbytes=20) for k in range(N_VALIDATORS)]

    # blocks
    blocks: list[dict] = []
    week_blocks: list[list[int]] = []
    builder_blocks: list[dict[str, list[int]]] = []
    builder_of: dict[int, str] = {}
    number = cfg.start_block
    for w in range(cfg.weeks):
        rng = stream(seed, f"blocks:{w}")
        counts = _largest_remainder([b.share(w) for b in cfg.builders], cfg.blocks_per_week)
        slots = [b.id for b, c in zip(cfg.builders, counts) for _ in range(c)]
        slots = [slots[i] for i in rng.permutation(len(slots))]
        wb, bb = [], {}
        for k, bid in enumerate(slots):
            if bid == PROPOSER:
                recipient = validators[int(rng.integers(N_VALIDATORS))]
            else:
                addrs = builder_addrs[bid]
                recipient = addrs[int(rng.integers(len(addrs)))]
            blocks.append({"number": number, "timestamp": anchor + w * WEEK + k * spacing + 11,
                           "fee_recipient": recipient, "bid": 0})
            builder_of[number] = bid
            wb.append(number)
            bb.setdefault(bid, []).append(number)
            number += 1
        week_blocks.append(wb)
        builder_blocks.append(bb)

    # pools and tokens
    tokens = [_hex("token", seed, k, nbytes=20) for k in range(N_TOKENS)]
    pool_rng = stream(seed, "pools")
    pools = []
    for k in range(cfg.pool_universe):
        a, b = pool_rng.choice(N_TOKENS, size=2, replace=False)
        pools.append((_hex("pool", seed, k, nbytes=20), tokens[int(a)], tokens[int(b)]))

    instances = _instances(cfg)
    budgets = _phase_budgets(cfg, instances) if cfg.phase_mix else None
    txs: list[_Tx] = []

    for inst in instances:
        spec = inst.spec
        rng = stream(seed, f"flow:{inst.name}")
        senders = [_hex("sender", seed, inst.name, k, nbytes=20) for k in range(spec.senders)]
        flow_pools = [pools[int(i)] for i in rng.choice(cfg.pool_universe, size=min(spec.pools, cfg.pool_universe),
                                                          replace=False)]
        lo, hi = spec.active_weeks or (0, cfg.weeks)
        base = _wei(spec.bribe_eth_per_week)
        if spec.bribe_decay:
            base = int(base * (inst.replica + 1) ** (-spec.bribe_decay))
        top = 0 if spec.mechanism in ("atomic", "non_atomic") else 1
        for w in range(lo, hi):
            n = max(1, int(rng.poisson(spec.txs_per_week)))
            budget = budgets.get((inst.name, w), 0) if budgets is not None else base
            parts = _allocate(budget, rng.lognormal(0.0, 0.6, size=n))
            for k in range(n):
                if spec.exclusive_to is not None and rng.random() < spec.exclusivity:
                    cands = builder_blocks[w][spec.exclusive_to]
                else:
                    cands = week_blocks[w]
                blk = cands[int(rng.integers(len(cands)))]
                bribe = parts[k]
                tip = int(bribe * rng.uniform(*spec.tip_fraction))
                n_swaps = int(rng.integers(spec.swap_count[0], spec.swap_count[1] + 1))
                swaps = []
                for _ in range(n_swaps):
                    p_addr, t0, t1 = flow_pools[int(rng.integers(len(flow_pools)))]
                    if rng.random() < 0.5:
                        t0, t1 = t1, t0
                    swaps.append({"pool": p_addr, "token_in": t0, "token_out": t1,
                                  "amount_usd": round(float(rng.lognormal(8.0, 1.5)), 2)})
                label = "none"
                if rng.random() < spec.mev_rate:
                    label = ATOMIC_MEV_LABELS[int(rng.integers(len(ATOMIC_MEV_LABELS)))]
                h = _hex("tx", seed, inst.name, w, k, nbytes=32)
                txs.append(_Tx(
                    hash=h, block=blk,
                    sender=senders[int(rng.integers(len(senders)))],
                    to=inst.contract,
                    gas_used=int(rng.integers(spec.gas[0], spec.gas[1] + 1)),
                    priority_tip=tip, direct_bribe=bribe - tip,
                    swap_count=n_swaps,
                    private=bool(rng.random() < spec.privacy),
                    mev_label=label,
                    order=(top, float(rng.random()), h),
                    swaps=swaps, flow=inst.name,
                ))

    # non-swap filler and builder payouts
    for blk in (b["number"] for b in blocks):
        rng = stream(seed, f"filler:{blk}")
        for k in range(cfg.filler_txs_per_block):
            h = _hex("filler", seed, blk, k, nbytes=32)
            txs.append(_Tx(h, blk, _hex("eoa", seed, int(rng.integers(500)), nbytes=20),
                           _hex("eoa", seed, 1000 + int(rng.integers(500)), nbytes=20), 21_000,
                           int(float(rng.lognormal(np.log(2e15), 0.8))), 0, 0, False, "none",
                           (1, float(rng.random()), h), []))
        if rng.random() < cfg.payout_rate and builder_of[blk] != PROPOSER:
            h = _hex("payout", seed, blk, nbytes=32)
            txs.append(_Tx(h, blk, builder_addrs[builder_of[blk]][0], _hex("eoa", seed, 2000, nbytes=20),
                           21_000, 0, -int(float(rng.lognormal(np.log(5e15), 0.5))), 0, True, "none",
                           (2, 0.0, h), []))

    # in-block ordering
    by_block: dict[int, list[_Tx]] = {}
    for t in txs:
        by_block.setdefault(t.block, []).append(t)
    ordered: list[_Tx] = []
    for blk in (b["number"] for b in blocks):
        row = sorted(by_block.get(blk, []), key=lambda t: t.order)
        for i, t in enumerate(row):
            t.index = i
        ordered.extend(row)

    # bids from realised revenue
    block_revenue = {blk: sum(t.revenue for t in by_block.get(blk, [])) for blk in builder_of}
    for b in blocks:
        rng = stream(seed, f"bid:{b['number']}")
        r = block_revenue[b["number"]]
        if rng.random() < cfg.subsidy_rate:
            b["bid"] = int(r * rng.uniform(1.02, 1.3)) + _wei("0.001")
        else:
            b["bid"] = int(r * rng.uniform(0.5, 0.98))

    _write_files(out, cfg, blocks, ordered, builder_addrs, instances)
    manifest = _manifest(cfg, blocks, ordered, builder_of, instances, week_blocks, block_revenue)
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return manifest


def _write_files(out: Path, cfg: ScenarioConfig, blocks, txs: list[_Tx], builder_addrs, instances) -> None:
    with open(out / "blocks.jsonl", "w", encoding="utf-8") as fh:
        for b in blocks:
            fh.write(json.dumps(b, sort_keys=True) + "\n")
    with open(out / "txs.jsonl", "w", encoding="utf-8") as fh:
        for t in txs:
            rec = {"hash": t.hash, "block": t.block, "index": t.index, "from": t.sender, "to": t.to,
                   "gas_used": t.gas_used, "priority_tip": t.priority_tip, "direct_bribe": t.direct_bribe,
                   "swap_count": t.swap_count, "mev_label": t.mev_label}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(out / "swaps.jsonl", "w", encoding="utf-8") as fh:
        for t in txs:
            for s in t.swaps:
                fh.write(json.dumps({"tx": t.hash, **s}, sort_keys=True) + "\n")
    with open(out / "mempool.txt", "w", encoding="utf-8") as fh:
        for h in sorted(t.hash for t in txs if not t.private):
            fh.write(h + "\n")
    names = {b.id: b.name or b.id for b in cfg.builders}
    rows = sorted((a, bid, names[bid]) for bid, addrs in builder_addrs.items() for a in addrs)
    with open(out / "builders.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("address,builder_id,name\n")
        for a, bid, name in rows:
            fh.write(f"{a},{bid},{name}\n")
    with open(out / "labels.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("contract,mechanism,known_eof\n")
        for inst in sorted(instances, key=lambda i: i.contract):
            if inst.labeled:
                fh.write(f"{inst.contract},{inst.spec.mechanism},{str(_known_eof(inst)).lower()}\n")


def _known_eof(inst: _FlowInstance) -> bool:
    if inst.spec.known_eof is not None:
        return inst.spec.known_eof
    return inst.spec.exclusive_to is not None


def _manifest(cfg, blocks, txs: list[_Tx], builder_of, instances, week_blocks, block_revenue) -> dict:
    week_of_block = {}
    for w, wb in enumerate(week_blocks):
        for blk in wb:
            week_of_block[blk] = w
    weekly_blocks = {}
    for w, wb in enumerate(week_blocks):
        row = {}
        for blk in wb:
            row[builder_of[blk]] = row.get(builder_of[blk], 0) + 1
        weekly_blocks[str(w)] = dict(sorted(row.items()))
    weekly_shares = {w: {b: q / cfg.blocks_per_week for b, q in row.items()} for w, row in weekly_blocks.items()}

    by_flow: dict[str, list[_Tx]] = {}
    for t in txs:
        if t.flow is not None:
            by_flow.setdefault(t.flow, []).append(t)
    flows = {}
    matrix = {}
    categories = {"protocol": 0, "atomic": 0, "non_atomic": 0, "miscellaneous": 0}
    for inst in instances:
        ftx = by_flow.get(inst.name, [])
        if not ftx:
            continue
        cells: dict[str, dict[str, int]] = {}
        for t in ftx:
            if t.revenue > 0:
                row = cells.setdefault(str(week_of_block[t.block]), {})
                b = builder_of[t.block]
                row[b] = row.get(b, 0) + t.revenue
        matrix[inst.contract] = {w: dict(sorted(r.items())) for w, r in sorted(cells.items(), key=lambda kv: int(kv[0]))}
        mev_freq = sum(1 for t in ftx if t.mev_label != "none") / len(ftx)
        if inst.labeled:
            expected = CATEGORY_OF[inst.spec.mechanism]
        elif inst.spec.mechanism == "non_atomic":
            expected = "non_atomic"
        else:
            expected = "atomic" if mev_freq > 0.5 else "miscellaneous"
        categories[expected] += 1
        flows[inst.contract] = {
            "name": inst.name,
            "mechanism": inst.spec.mechanism,
            "planted_eof": inst.spec.exclusive_to is not None,
            "target_builder": inst.spec.exclusive_to,
            "exclusivity": inst.spec.exclusivity if inst.spec.exclusive_to else 0.0,
            "labeled": inst.labeled,
            "known_eof": _known_eof(inst),
            "tx_count": len(ftx),
            "total_bribe_wei": sum(t.revenue for t in ftx),
            "mev_frequency": mev_freq,
            "private_frequency": sum(1 for t in ftx if t.private) / len(ftx),
            "unique_senders": len({t.sender for t in ftx}),
            "expected_category": expected,
        }

    phases = []
    if cfg.phase_mix is not None:
        pm = cfg.phase_mix
        category_of_contract = {i.contract: CATEGORY_OF[i.spec.mechanism] for i in instances}
        for p, (lo, hi) in enumerate(zip(pm.boundaries, pm.boundaries[1:])):
            totals = {"protocol": 0, "atomic": 0, "non_atomic": 0, "miscellaneous": 0}
            for t in txs:
                if t.flow is not None and lo <= week_of_block[t.block] < hi:
                    totals[category_of_contract[t.to]] += t.revenue
            s = sum(totals.values())
            phases.append({
                "name": pm.names[p] if pm.names else f"phase{p + 1}",
                "start_week": lo, "end_week": hi,
                "start": cfg.anchor + lo * WEEK, "end": cfg.anchor + hi * WEEK,
                "totals": totals,
                "fractions": {m: v / s for m, v in totals.items()} if s else None,
            })

    swap_txs = [t for t in txs if t.swap_count > 0]
    return {
        "schema": "flowscope-manifest/1",
        "seed": cfg.seed,
        "anchor": cfg.anchor,
        "weeks": cfg.weeks,
        "counts": {
            "blocks": len(blocks),
            "txs": len(txs),
            "swap_txs": len(swap_txs),
            "swaps": sum(len(t.swaps) for t in txs),
            "flows": len(flows),
            "public_txs": sum(1 for t in txs if not t.private),
        },
        "weekly_blocks": weekly_blocks,
        "weekly_shares": weekly_shares,
        "revenue": {"total_wei": sum(t.revenue for t in txs), "trading_wei": sum(t.revenue for t in swap_txs)},
        "block_revenue": {str(k): v for k, v in sorted(block_revenue.items())},
        "flows": dict(sorted(flows.items())),
        "bribe_matrix": dict(sorted(matrix.items())),
        "phases": phases,
        "expected_categories": categories,
    }


# --- classifier fixtures ---------------------------------------------------------


def classifier_fixture(seed: int, n_non_atomic: int = 64, n_other: int = 136, overlap: float = 0.0,
                       separable: bool = False):
    """Labelled nine-feature vectors shaped like the per-class clusters seen in
    labelled mainnet contracts.

    Non-atomic bots: about one swap per tx, private, few senders, low gas.
    Other: atomic bots (multi-swap, MEV-labelled) and protocols (public,
    many senders). With ``separable`` the swap feature alone splits the
    classes (non-atomic <= 1.06, other >= 2). ``overlap`` is the fraction
    of each class drawn from the opposite class's profile.
    """
    from .features import FeatureVector

    rng = stream(seed, f"classifier:{n_non_atomic}:{n_other}:{overlap}:{separable}")

    def bot(r) -> FeatureVector:
        n = int(r.lognormal(7.5, 1.2)) + 10
        senders = int(r.integers(1, 6))
        return FeatureVector(float(r.uniform(1.0, 1.06)), float(r.normal(170_000, 50_000)),
                             float(r.lognormal(np.log(0.01), 0.8)), float(r.uniform(0, 8)),
                             float(r.uniform(0, 0.35)), float(r.uniform(0.6, 1.0)), senders, n / senders, n)

    def atomic(r) -> FeatureVector:
        n = int(r.lognormal(7.5, 1.2)) + 10
        senders = int(r.integers(1, 12))
        swaps = float(r.uniform(2.0, 5.0))
        return FeatureVector(swaps, float(r.normal(210_000, 60_000)), float(r.lognormal(np.log(0.02), 1.0)),
                             float(r.uniform(0, 8)), float(r.uniform(0.25, 1.0)), float(r.uniform(0.6, 1.0)),
                             senders, n / senders, n)

    def protocol(r) -> FeatureVector:
        n = int(r.lognormal(8.5, 1.2)) + 10
        senders = max(1, int(n / r.uniform(1.5, 6.0)))
        swaps = float(r.uniform(2.0, 3.0)) if separable else float(r.uniform(1.0, 2.5))
        return FeatureVector(swaps, float(r.normal(180_000, 40_000)), float(r.lognormal(np.log(0.002), 1.0)),
                             float(r.uniform(20, 150)), float(r.uniform(0, 0.2)), float(r.uniform(0.0, 0.4)),
                             senders, n / senders, n)

    vectors, labels = [], []
    for _ in range(n_non_atomic):
        if not separable and rng.random() < overlap:
            vectors.append(atomic(rng) if rng.random() < 0.5 else protocol(rng))
        else:
            vectors.append(bot(rng))
        labels.append("non_atomic")
    for _ in range(n_other):
        if not separable and rng.random() < overlap:
            vectors.append(bot(rng))
        else:
            vectors.append(atomic(rng) if rng.random() < 0.6 else protocol(rng))
        labels.append("other")
    perm = rng.permutation(len(labels))
    return [vectors[i] for i in perm], [labels[i] for i in perm]


def file_digests(directory: str | Path) -> dict[str, str]:
    """SHA-256 of every regular file in ``directory``, by file name."""
    d = Path(directory)
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(d.iterdir()) if p.is_file()}
