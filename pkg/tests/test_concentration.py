from __future__ import annotations


import mpmath
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

import oracles
from factory import DAY, T0, Builder, addr
from flowscope.concentration import (DOMINANT, INFLUENTIAL, NICHE, categorize, categorize_builders,
                                     default_phases, eof_share_correlation, hhi, hhi_from_counts, hhi_series,
                                     load_phases, pearson, phase_composition, phases_from_boundaries)
from flowscope.errors import ConstantSeries, EmptyPhase, InsufficientDays
from flowscope.flows import EpochScheme


def test_hhi_examples():
    assert hhi([1.0]) == 1.0
    assert hhi([0.5, 0.5]) == 0.5
    assert hhi_from_counts([1] * 10) == pytest.approx(0.1, abs=1e-15)
    assert hhi_from_counts([3, 1]) == 10 / 16


counts = st.lists(st.integers(1, 1000), min_size=1, max_size=12)


@given(counts, st.randoms())
def test_hhi_relabel_invariant_and_bounded(qs, rnd):
    shuffled = list(qs)
    rnd.shuffle(shuffled)
    assert hhi_from_counts(shuffled) == hhi_from_counts(qs)
    assert 1 / len(qs) - 1e-15 <= hhi_from_counts(qs) <= 1.0


@given(counts)
def test_merging_two_builders_raises_hhi(qs):
    assume(len(qs) >= 2)
    merged = [qs[0] + qs[1]] + qs[2:]
    assert hhi_from_counts(merged) > hhi_from_counts(qs)


def test_weekly_series_matches_counts(standard):
    d, manifest, ds = standard
    want = oracles.weekly_block_counts(oracles.RawData(d))
    for point in hhi_series(ds):
        row = list(want[point.epoch].values())
        total = sum(row)
        assert point.hhi == pytest.approx(float(mpmath.fsum(mpmath.mpf(q) ** 2 for q in row) / total ** 2),
                                          abs=1e-15)


def test_category_boundaries():
    assert categorize(0.6) == DOMINANT
    assert categorize(0.5) == INFLUENTIAL
    assert categorize(0.1) == NICHE
    assert categorize(0.05) == NICHE


@given(st.floats(0, 1), st.floats(0, 1))
def test_category_monotone(a, b):
    order = [NICHE, INFLUENTIAL, DOMINANT]
    lo, hi = sorted((a, b))
    assert order.index(categorize(lo)) <= order.index(categorize(hi))


def test_categorize_builders_exact_half():
    b = Builder()
    for name in ["titan"] * 5 + ["beaver"] * 4 + ["rsync"] + ["proposer"] * 0:
        b.block(name)
    cats = categorize_builders(b.build())
    assert cats == {"titan": INFLUENTIAL, "beaver": INFLUENTIAL, "rsync": NICHE}


def test_categorize_uses_peak_week():
    b = Builder()
    for i in range(4):
        b.block("titan", ts=T0 + i)
    b.block("beaver", ts=T0 + 10)
    for i in range(4):
        b.block("beaver", ts=T0 + 7 * DAY + i)
    assert categorize_builders(b.build()) == {"beaver": DOMINANT, "titan": DOMINANT}


def _two_phase_data():
    b = Builder()
    p, a = addr("proto"), addr("arb")
    n1 = b.block("titan", ts=T0 + 10)
    b.tx(n1, p, tip=7)
    b.tx(n1, a, tip=3)
    n2 = b.block("titan", ts=T0 + 2 * DAY)
    b.tx(n2, p, tip=1)
    b.tx(n2, addr("unmapped"), tip=100)
    return b.build(), {p: "protocol", a: "atomic"}


def test_phase_composition_example():
    ds, mechs = _two_phase_data()
    phases = phases_from_boundaries([T0, T0 + DAY, T0 + 3 * DAY])
    first, second = phase_composition(ds, mechs, phases)
    assert first.totals["protocol"] == 7 and first.fractions["protocol"] == 0.7
    assert first.fractions["atomic"] == pytest.approx(0.3)
    assert second.fractions == {"protocol": 1.0, "atomic": 0.0, "non_atomic": 0.0, "miscellaneous": 0.0}


def test_empty_phase():
    ds, mechs = _two_phase_data()
    phases = phases_from_boundaries([T0 + 5 * DAY, T0 + 6 * DAY])
    with pytest.raises(EmptyPhase):
        phase_composition(ds, mechs, phases)
    (only,) = phase_composition(ds, mechs, phases, skip_empty=True)
    assert only.fractions is None


def test_phase_boundaries_validated():
    with pytest.raises(ValueError):
        phases_from_boundaries(["2024-01-02", "2024-01-01"])
    with pytest.raises(ValueError):
        phases_from_boundaries(["2024-01-01", "2024-01-02"], ["a", "b"])
    assert [p.name for p in default_phases()] == ["genesis", "algorithm_wars", "eof_moats", "oligopoly"]


def test_load_phases_both_layouts(tmp_path):
    a = tmp_path / "a.toml"
    a.write_text('boundaries = ["2024-01-01", "2024-02-01", "2024-03-01"]\nnames = ["x", "y"]\n')
    b = tmp_path / "b.toml"
    b.write_text('[[phase]]\nname = "x"\nstart = 2024-01-01\nend = 2024-02-01\n'
                 '[[phase]]\nname = "y"\nstart = "2024-02-01"\nend = "2024-03-01"\n')
    assert load_phases(a) == load_phases(b)
    assert load_phases(a)[0].end == load_phases(a)[1].start


def test_pearson_examples():
    x = [1.0, 2.0, 3.0, 4.0, 5.0]
    assert pearson(x, [2 * v + 1 for v in x]) == 1.0
    assert pearson(x, [-v for v in x]) == -1.0
    with pytest.raises(ConstantSeries):
        pearson(x, [3.0] * 5)
    with pytest.raises(ConstantSeries):
        pearson([1.0], [2.0])
    with pytest.raises(ValueError):
        pearson([1.0, 2.0], [1.0])


@given(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=30), st.data())
def test_pearson_affine_invariance_and_oracle(x, data):
    y = data.draw(st.lists(st.floats(-1e6, 1e6), min_size=len(x), max_size=len(x)))
    assume(len(set(x)) > 1 and len(set(y)) > 1)
    r = pearson(x, y)
    assert -1.0 <= r <= 1.0
    assert abs(mpmath.mpf(r) - oracles.pearson(x, y)) <= 1e-12
    a = data.draw(st.sampled_from([0.5, 2.0, 4.0, 0.25]))
    assert pearson([a * v for v in x], y) == pytest.approx(r, abs=1e-12)
    assert pearson([-v for v in x], y) == -r


def _daily(eof_pattern):
    b = Builder()
    eof, pub = addr("eof"), addr("pub")
    for day, (mine, eof_tip) in enumerate(eof_pattern):
        for k in range(4):
            builder = "titan" if k < mine else "beaver"
            n = b.block(builder, ts=T0 + day * DAY + 12 * k)
            b.tx(n, pub, tip=10)
            if builder == "titan" and eof_tip:
                b.tx(n, eof, tip=eof_tip)
    return b.build(), {eof}


def test_correlation_positive_when_eof_follows_share():
    ds, eofs = _daily([(1, 5), (2, 10), (3, 20), (4, 40)])
    res = eof_share_correlation(ds, eofs, "titan")
    assert res.r > 0.9 and res.dropped_days == 0 and res.days == (0, 1, 2, 3)


def test_correlation_drops_days_without_trading():
    b = Builder()
    for day in range(5):
        n = b.block("titan" if day % 2 else "beaver", ts=T0 + day * DAY)
        if day != 2:
            b.tx(n, addr("pub"), tip=1 + day)
        b.block("titan", ts=T0 + day * DAY + 100)
    res = eof_share_correlation(b.build(), set(), "titan")
    assert res.dropped_days == 1 and 2 not in res.days
    assert res.r is None  # ratio series is identically zero


def test_correlation_needs_active_days():
    ds, eofs = _daily([(1, 5), (0, 0), (0, 0)])
    with pytest.raises(InsufficientDays):
        eof_share_correlation(ds, eofs, "titan")


def test_correlation_on_fixture_matches_oracle(eof_scenario):
    from flowscope.ingest import load_dataset
    d, manifest = eof_scenario
    ds = load_dataset(d)
    eofs = {c for c, f in manifest["flows"].items() if f["planted_eof"]}
    res = eof_share_correlation(ds, eofs, "bravo")
    assert abs(mpmath.mpf(res.r) - oracles.pearson(res.shares, res.eof_ratios)) <= 1e-12
    scheme = EpochScheme.for_dataset(ds, "daily")
    assert len(res.days) + res.dropped_days == len({scheme.index_of(b.timestamp) for b in ds.blocks})


def test_daily_days_are_epoch_indices(standard):
    _, _, ds = standard
    scheme = EpochScheme.for_dataset(ds, "daily")
    res = eof_share_correlation(ds, set(), "titan")
    assert set(res.days) <= {scheme.index_of(b.timestamp) for b in ds.blocks}
