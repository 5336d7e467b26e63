"""Acceptance checks, one group per criterion. The terminal summary prints a
PASS/FAIL line per criterion (see conftest.py)."""

from __future__ import annotations

import math
import random
import subprocess
import sys
import time
from fractions import Fraction

import mpmath
import numpy as np
import pytest

import oracles
from flowscope import cli
from flowscope.concentration import Phase, hhi_from_counts, pearson, phase_composition
from flowscope.dependency import edr_bin
from flowscope.exclusivity import (classify_eof, exclusivity_score, kl_divergence, market_distributions,
                                   optimize_threshold, score_flows)
from flowscope.flows import build_flows
from flowscope.forest import feature_importance, train_forest
from flowscope.ingest import load_dataset
from flowscope.revenue import all_block_economics, trading_revenue_total
from flowscope.synth import OVERLAP_CALIBRATED, classifier_fixture, file_digests
from flowscope.tailfit import fit_power_law, sample_power_law

acceptance = pytest.mark.acceptance


# 1 ---------------------------------------------------------------------------------

def _random_pairs(n, seed):
    rng = random.Random(seed)
    pairs = []
    for _ in range(n):
        k = rng.randint(2, 20)
        s = [rng.random() + 1e-3 for _ in range(k)]
        p = [rng.random() if rng.random() > 0.3 else 0.0 for _ in range(k)]
        if sum(p) == 0:
            p[0] = 1.0
        ps, ss = sum(p), sum(s)
        pairs.append(([v / ps for v in p], [v / ss for v in s]))
    return pairs


@acceptance(1, "KL/exclusivity correctness")
def test_kl_matches_high_precision_oracle_on_1000_pairs():
    pairs = _random_pairs(1000, seed=1)
    start = time.perf_counter()
    got = [kl_divergence(p, s) for p, s in pairs]
    elapsed = time.perf_counter() - start
    worst = max(abs(mpmath.mpf(g) - oracles.kl(p, s)) for g, (p, s) in zip(got, pairs))
    assert worst <= 1e-12, worst
    assert elapsed < 1.0, elapsed


@acceptance(1, "KL/exclusivity correctness")
def test_proportional_routing_scores_exactly_zero(standard):
    _, _, ds = standard
    table = build_flows(ds)
    markets = market_distributions(ds, table.scheme)
    from flowscope.flows import OrderFlow

    for scale in (1, 7, 10**15, 3 * 10**18):
        matrix = {t: {b: q * scale for b, q in m.counts.items()} for t, m in markets.items()}
        total = sum(sum(r.values()) for r in matrix.values())
        flow = OrderFlow("0x" + "ab" * 20, total, 1, matrix, {})
        assert exclusivity_score(flow, markets).total == 0.0


@acceptance(1, "KL/exclusivity correctness")
def test_fixture_scores_match_brute_force_oracle(standard):
    d, _, ds = standard
    raw = oracles.RawData(d)
    counts = oracles.weekly_block_counts(raw)
    table = build_flows(ds)
    scores = score_flows(table, market_distributions(ds, table.scheme))
    for c, rows in oracles.bribe_matrix(raw).items():
        want = oracles.exclusivity(rows, counts)
        assert abs(mpmath.mpf(scores[c].total) - want) <= 1e-12 * max(1, abs(want))


# 2 ---------------------------------------------------------------------------------

@acceptance(2, "Planted-EOF recovery")
def test_planted_eofs_recovered_exactly(eof_scenario):
    d, manifest = eof_scenario
    planted = {c for c, f in manifest["flows"].items() if f["planted_eof"]}
    public = {c for c, f in manifest["flows"].items() if not f["planted_eof"]}
    assert len(planted) == 10 and len(public) == 50
    assert manifest["counts"]["txs"] >= 50_000

    start = time.perf_counter()
    ds = load_dataset(d)
    table = build_flows(ds)
    scores = score_flows(table, market_distributions(ds, table.scheme))
    result = optimize_threshold(scores, ds.labels)
    eofs = classify_eof(scores, result.threshold)
    elapsed = time.perf_counter() - start

    assert result.f1 == 1.0
    assert eofs == planted
    assert elapsed < 10.0, elapsed


@acceptance(2, "Planted-EOF recovery")
def test_planted_eof_scenario_meets_its_preconditions(eof_scenario):
    _, manifest = eof_scenario
    shares = manifest["weekly_shares"]
    for f in manifest["flows"].values():
        if not f["planted_eof"]:
            continue
        assert f["exclusivity"] >= 0.9
        target = f["target_builder"]
        assert all(row.get(target, 0) <= 0.25 for row in shares.values())
    for c, cells in manifest["bribe_matrix"].items():
        if manifest["flows"][c]["planted_eof"]:
            assert len(cells) >= 8


# 3 ---------------------------------------------------------------------------------

@pytest.mark.parametrize("fixture", ["standard", "eof_scenario", "phase_mix", "monopoly"])
@acceptance(3, "Revenue conservation")
def test_flow_bribes_sum_to_trading_revenue(fixture, request):
    d = request.getfixturevalue(fixture)[0]
    ds = load_dataset(d)
    raw = oracles.RawData(d)
    total = trading_revenue_total(ds)
    assert isinstance(total, int)
    assert build_flows(ds).total_bribe() == total == oracles.trading_total(raw)


@pytest.mark.parametrize("fixture", ["standard", "eof_scenario", "phase_mix", "monopoly"])
@acceptance(3, "Revenue conservation")
def test_block_revenue_matches_naive_oracle_on_every_block(fixture, request):
    d = request.getfixturevalue(fixture)[0]
    ds = load_dataset(d)
    want = oracles.block_revenue(oracles.RawData(d))
    got = {e.block_number: e.revenue for e in all_block_economics(ds)}
    assert got == want


# 4 ---------------------------------------------------------------------------------

def _edr_grid():
    profits = [-7, -1, 0, 1, 2, 3, 10, 100, 10**18]
    ratios = [Fraction(0), Fraction(1, 4), Fraction(1, 2), Fraction(1), Fraction(10), Fraction(100),
              Fraction(1000)]
    for profit in profits:
        eofs = {0, 1, 2, 5, 10**20}
        for r in ratios:
            base = r * abs(profit) if profit else r
            for delta in (-1, 0, 1):
                v = int(base) + delta
                if v >= 0:
                    eofs.add(v)
        for eof in sorted(eofs):
            yield eof, profit


@acceptance(4, "EDR binning")
def test_edr_grid_matches_table_oracle():
    grid = list(_edr_grid())
    assert any(p < 0 for _, p in grid) and any(p == 0 for _, p in grid)
    mismatches = [(e, p) for e, p in grid if edr_bin(e, p) != oracles.edr_bin(e, p)]
    assert not mismatches
    # every bin is exercised
    assert len({oracles.edr_bin(e, p) for e, p in grid}) == 6


@acceptance(4, "EDR binning")
def test_edr_exact_breakpoints_are_left_closed():
    for num, den, name in [(1, 2, "[0.5,1)"), (1, 1, "[1,10)"), (10, 1, "[10,100)"), (100, 1, "[100,inf)")]:
        for scale in (1, 3, 10**18):
            assert edr_bin(num * scale, den * scale) == name


# 5 ---------------------------------------------------------------------------------

@acceptance(5, "Forest protocol")
def test_separable_fixture_accuracy_and_validation_report():
    X, y = classifier_fixture(42, 64, 136, separable=True)
    forest = train_forest(X, y, seed=42)
    assert forest.test_accuracy >= 0.95
    assert len(forest.validation_accuracy) == 7
    assert math.isfinite(forest.validation_std)
    print(f"validation accuracy per tree {forest.validation_accuracy} std {forest.validation_std:.4f}")


@acceptance(5, "Forest protocol")
def test_retraining_reproduces_the_forest_hash():
    X, y = classifier_fixture(42, 64, 136, separable=True)
    a = train_forest(X, y, seed=42)
    b = train_forest(X, y, seed=42, threads=4)
    assert a.digest() == b.digest()
    assert a.to_json() == b.to_json()


@acceptance(5, "Forest protocol")
def test_overlap_fixture_accuracy():
    X, y = classifier_fixture(42, 64, 146, overlap=OVERLAP_CALIBRATED)
    forest = train_forest(X, y, seed=42)
    assert len(forest.test_vote_counts) == 63
    assert forest.test_accuracy >= 0.90, forest.test_accuracy


@acceptance(5, "Forest protocol")
def test_swap_events_rank_first():
    for sep, n_other, overlap in ((True, 136, 0.0), (False, 146, OVERLAP_CALIBRATED)):
        X, y = classifier_fixture(42, 64, n_other, overlap=overlap, separable=sep)
        ranking = feature_importance(train_forest(X, y, seed=42))
        assert next(iter(ranking)) == "avg_swap_events_per_tx"


# 6 ---------------------------------------------------------------------------------

@acceptance(6, "Power-law recovery")
def test_power_law_alpha_and_ks_recovered():
    x = sample_power_law(10_000, 1.47, 1.0, np.random.default_rng(147))
    start = time.perf_counter()
    fit = fit_power_law(x)
    elapsed = time.perf_counter() - start
    assert 1.42 <= fit.alpha <= 1.52, fit.alpha
    assert fit.ks_statistic < 0.02, fit.ks_statistic
    assert elapsed < 5.0, elapsed


@acceptance(6, "Power-law recovery")
def test_power_law_scale_invariance():
    x = sample_power_law(10_000, 1.47, 1.0, np.random.default_rng(147))
    a = fit_power_law(x)
    b = fit_power_law(x * 1000.0)
    assert b.n_tail == a.n_tail
    assert b.x_min == pytest.approx(a.x_min * 1000.0, rel=1e-15)
    assert (b.alpha, b.ks_statistic) == (a.alpha, a.ks_statistic)
    # a power-of-two factor rescales every sample exactly, so any seed must match bit for bit
    for seed in range(5):
        y = sample_power_law(2_000, 1.47, 1.0, np.random.default_rng(seed))
        p, q = fit_power_law(y), fit_power_law(y * 1024.0)
        assert (q.alpha, q.ks_statistic, q.n_tail, q.x_min) == (p.alpha, p.ks_statistic, p.n_tail, p.x_min * 1024.0)


# 7 ---------------------------------------------------------------------------------

@acceptance(7, "HHI and Pearson")
def test_hhi_analytic_cases_exact():
    assert hhi_from_counts([17]) == 1.0
    for k in range(1, 60):
        for q in (1, 3, 125):
            assert hhi_from_counts([q] * k) == 1 / k


@acceptance(7, "HHI and Pearson")
def test_pearson_linear_series_exact():
    for n in (3, 10, 57, 365):
        x = [float(i) for i in range(n)]
        assert pearson(x, [2 * v + 1 for v in x]) == 1.0
        assert pearson(x, [-v for v in x]) == -1.0
        rng = random.Random(n)
        xr = [rng.uniform(-5, 5) for _ in range(n)]
        assert pearson(xr, [3.5 * v - 2.0 for v in xr]) == 1.0
        assert pearson(xr, [-0.25 * v + 9.0 for v in xr]) == -1.0


@acceptance(7, "HHI and Pearson")
def test_pearson_random_series_match_oracle():
    rng = random.Random(7)
    for _ in range(200):
        n = rng.randint(3, 400)
        x = [rng.gauss(0, 1) for _ in range(n)]
        y = [0.3 * a + rng.gauss(0, 1) for a in x]
        assert abs(mpmath.mpf(pearson(x, y)) - oracles.pearson(x, y)) <= 1e-12


# 8 ---------------------------------------------------------------------------------

@acceptance(8, "Phase composition recovery")
def test_planted_phase_mix_recovered_exactly(phase_mix):
    _, manifest, ds = phase_mix
    mechanisms = {c: f["mechanism"].replace("other", "miscellaneous") for c, f in manifest["flows"].items()}
    phases = [Phase(p["name"], p["start"], p["end"]) for p in manifest["phases"]]
    got = phase_composition(ds, mechanisms, phases)
    for comp, want in zip(got, manifest["phases"]):
        assert dict(comp.totals) == want["totals"]
        assert dict(comp.fractions) == want["fractions"]
    protocol = [c.fractions["protocol"] for c in got]
    assert protocol[0] == 0.42 and protocol[-1] == 0.21


# 9 ---------------------------------------------------------------------------------

def _run_all(data, out, threads):
    return cli.main(["--quiet", "--threads", str(threads), "all", "--data", str(data), "--out", str(out)])


@acceptance(9, "End-to-end determinism")
def test_end_to_end_fast_and_deterministic(standard, tmp_path):
    d, manifest, _ = standard
    assert manifest["counts"]["blocks"] == 1000
    start = time.perf_counter()
    assert _run_all(d, tmp_path / "a", 1) == 0
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, elapsed
    assert _run_all(d, tmp_path / "b", 1) == 0
    assert _run_all(d, tmp_path / "c", 4) == 0
    a, b, c = (file_digests(tmp_path / k) for k in "abc")
    assert a == b == c
    assert len(a) >= 10


@acceptance(9, "End-to-end determinism")
def test_end_to_end_in_a_fresh_process_matches(standard, tmp_path):
    d, _, _ = standard
    assert _run_all(d, tmp_path / "here", 2) == 0
    proc = subprocess.run([sys.executable, "-m", "flowscope", "--quiet", "--threads", "3", "all",
                           "--data", str(d), "--out", str(tmp_path / "there")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert file_digests(tmp_path / "here") == file_digests(tmp_path / "there")


@acceptance(9, "End-to-end determinism")
def test_end_to_end_reports_match_manifest(standard, tmp_path):
    import csv
    import json

    d, manifest, _ = standard
    assert _run_all(d, tmp_path, 1) == 0
    with open(tmp_path / "mechanisms.csv") as fh:
        rows = list(csv.DictReader(fh))
    got = {}
    for r in rows:
        got[r["mechanism"]] = got.get(r["mechanism"], 0) + 1
    assert {k: got.get(k, 0) for k in manifest["expected_categories"]} == manifest["expected_categories"]
    with open(tmp_path / "eofs.csv") as fh:
        eofs = {r["contract"] for r in csv.DictReader(fh)}
    assert eofs == {c for c, f in manifest["flows"].items() if f["planted_eof"]}
    report = json.loads((tmp_path / "report.json").read_text())
    weeks = {int(w): row for w, row in manifest["weekly_blocks"].items()}
    hhi = {p["week"]: p["hhi"] for p in report["hhi"]}
    assert hhi == {w: hhi_from_counts(row.values()) for w, row in weeks.items()}
