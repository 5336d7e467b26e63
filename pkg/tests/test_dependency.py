from __future__ import annotations

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from factory import Builder, addr
from flowscope.dependency import BINS, GLOBAL, edr_bin, edr_for_block, edr_histogram, edr_records, edr_value
from flowscope.errors import NoBlocks
from flowscope.exclusivity import classify_eof, market_distributions, optimize_threshold, score_flows
from flowscope.flows import build_flows
from flowscope.revenue import block_economics


def test_examples():
    assert edr_bin(0, 5) == "[0,0.5)" and edr_value(0, 5) == 0.0
    assert edr_bin(6, 4) == "[1,10)" and edr_value(6, 4) == 1.5
    assert edr_bin(0, -2) == "(-inf,0)"
    assert edr_bin(10**30, -1) == "(-inf,0)"


def test_zero_profit_limits():
    assert edr_bin(1, 0) == "[100,inf)" and edr_value(1, 0) == math.inf
    assert edr_bin(0, 0) == "[0,0.5)" and edr_value(0, 0) == 0.0


def test_block_record():
    b = Builder()
    eof, other = addr("eof"), addr("other")
    n = b.block("titan", bid=2)
    b.tx(n, eof, tip=6)
    b.tx(n, other, tip=0, direct=-3)
    ds = b.build()
    rec = edr_for_block(block_economics(ds, n), {eof}, ds)
    assert (rec.eof_bribe, rec.profit, rec.edr, rec.bin) == (6, 4, 1.5, "[1,10)")


def test_histogram_examples():
    b = Builder()
    eof = addr("eof")
    n1 = b.block("titan", bid=0)
    b.tx(n1, addr("x"), tip=10)
    n2 = b.block("titan", bid=0)
    b.tx(n2, eof, tip=10)
    n3 = b.block("beaver", bid=0)
    b.tx(n3, addr("x"), tip=10)
    recs = edr_records(b.build(), {eof})
    assert edr_histogram(recs, "beaver")["[0,0.5)"] == 1.0
    titan = edr_histogram(recs, "titan")
    assert titan["[0,0.5)"] == 0.5 and titan["[1,10)"] == 0.5
    assert edr_histogram(recs, GLOBAL)["[0,0.5)"] == pytest.approx(2 / 3)
    with pytest.raises(NoBlocks):
        edr_histogram(recs, "rsync")


def test_fixture_histograms_match_counting_oracle(standard):
    d, manifest, ds = standard
    table = build_flows(ds)
    scores = score_flows(table, market_distributions(ds, table.scheme))
    eofs = classify_eof(scores, optimize_threshold(scores, ds.labels).threshold)
    raw = oracles.RawData(d)
    eof_by_block = {b["number"]: 0 for b in raw.blocks}
    revenue = oracles.block_revenue(raw)
    for tx in raw.txs:
        if tx["to"] in eofs:
            eof_by_block[tx["block"]] += max(oracles.d_t(tx), 0)
    bins_of = {}
    for blk in raw.blocks:
        bins_of[blk["number"]] = (raw.builder[blk["number"]],
                                  oracles.edr_bin(eof_by_block[blk["number"]], revenue[blk["number"]] - blk["bid"]))
    recs = edr_records(ds, eofs)
    for builder in sorted({v[0] for v in bins_of.values()}) + [GLOBAL]:
        mine = [v[1] for v in bins_of.values() if builder == GLOBAL or v[0] == builder]
        want = {k: mine.count(k) / len(mine) for k in BINS}
        got = edr_histogram(recs, builder)
        assert got == want
        assert math.fsum(got.values()) == pytest.approx(1.0, abs=1e-12)


@given(st.integers(0, 10**24), st.integers(1, 10**24), st.integers(0, 10**24))
def test_monotone_in_eof_bribe(eof, profit, extra):
    assert BINS.index(edr_bin(eof + extra, profit)) >= BINS.index(edr_bin(eof, profit))


@given(st.integers(0, 10**24), st.integers(-10**24, 10**24))
def test_matches_oracle_everywhere(eof, profit):
    assert edr_bin(eof, profit) == oracles.edr_bin(eof, profit)
