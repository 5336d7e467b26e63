"""``flowscope`` command-line interface.

Exit codes: 0 success, 2 validation or module error (JSON on stderr),
64 usage error. Every emitted file is a pure function of the inputs and
flags: rows are sorted, no timestamps are written, and ``--threads`` only
changes how work is scheduled.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from .concentration import (categorize_builders, default_phases, eof_share_correlation, hhi_series, load_phases,
                            phase_composition, weekly_shares)
from .dependency import BINS, GLOBAL, edr_histogram, edr_records
from .errors import FlowscopeError, InsufficientDays, MissingFile, SchemaViolation
from .exclusivity import classify_eof, market_distributions, optimize_threshold, score_flows
from .features import FEATURE_NAMES, extract_all
from .flows import build_flows, flow_pool_profile
from .forest import Forest, feature_importance, train_forest
from .ingest import PROPOSER, WEI_PER_ETH, Dataset, load_dataset, read_labels
from .pipeline import DEFAULT_K, category_counts, classify_top_flows
from .revenue import block_economics, total_revenue, trading_revenue_total
from .synth import file_digests, generate, load_scenario
from .tailfit import concentration_summary, fit_power_law

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 2, 64
_MECHANISM_CATEGORY = {"protocol": "protocol", "atomic": "atomic", "non_atomic": "non_atomic", "other": "miscellaneous"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


class _Context:
    def __init__(self, args):
        self.args = args
        self.threads = max(1, args.threads)
        self.quiet = args.quiet
        self._dataset = None

    def log(self, msg: str) -> None:
        if not self.quiet:
            print(msg, file=sys.stderr)

    @property
    def dataset(self) -> Dataset:
        if self._dataset is None:
            self._dataset = load_dataset(self.args.data)
        return self._dataset


# --- file helpers -------------------------------------------------------------


def _write_json(path: str | Path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1, allow_nan=False)
        fh.write("\n")


def _write_csv(path: str | Path, header, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_column(path: str | Path, column: str) -> list[dict]:
    p = Path(path)
    if not p.exists():
        raise MissingFile(p)
    with open(p, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if column not in (reader.fieldnames or []):
            raise SchemaViolation(p.name, 1, column, "missing column")
        return [row for row in reader]


def read_eofs(path: str | Path) -> frozenset[str]:
    return frozenset(row["contract"].strip().lower() for row in _read_column(path, "contract"))


def read_mechanisms(path: str | Path) -> dict[str, str]:
    rows = _read_column(path, "mechanism")
    return {row["contract"].strip().lower(): row["mechanism"].strip() for row in rows}


def _eth(wei: int) -> float:
    return wei / WEI_PER_ETH


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def _labels(ctx: _Context, path: str | None):
    if path:
        return read_labels(path)
    return ctx.dataset.labels


def _mechanism_map(ctx: _Context, path: str | None) -> dict[str, str]:
    """Contract -> category, from a pipeline output or else the label file."""
    if path:
        return read_mechanisms(path)
    labels = ctx.dataset.labels
    return {c: _MECHANISM_CATEGORY[m] for c, m in labels.mechanisms.items() if m in _MECHANISM_CATEGORY}


# --- subcommands ---------------------------------------------------------------


def cmd_synth(ctx: _Context) -> int:
    cfg = load_scenario(ctx.args.config)
    if ctx.args.seed is not None:
        cfg.seed = ctx.args.seed
    manifest = generate(cfg, ctx.args.out)
    ctx.log(f"wrote {manifest['counts']['blocks']} blocks, {manifest['counts']['txs']} txs, "
            f"{manifest['counts']['flows']} flows to {ctx.args.out}")
    return EXIT_OK


def cmd_revenue(ctx: _Context) -> int:
    ds = ctx.dataset
    if ctx.args.block is not None:
        e = block_economics(ds, ctx.args.block)
        out = {"block": e.block_number, "builder": e.builder, "revenue_wei": e.revenue, "bid_wei": e.bid,
               "profit_wei": e.profit}
    else:
        out = {"blocks": len(ds.blocks), "total_revenue_wei": total_revenue(ds),
               "trading_revenue_wei": trading_revenue_total(ds)}
    _emit_json(ctx, out)
    return EXIT_OK


def _emit_json(ctx: _Context, obj) -> None:
    if getattr(ctx.args, "out", None):
        _write_json(ctx.args.out, obj)
    else:
        print(json.dumps(obj, sort_keys=True, indent=1, allow_nan=False))


def cmd_flows(ctx: _Context) -> int:
    table = build_flows(ctx.dataset, ctx.args.granularity)
    flows = []
    for f in table.ranked():
        prof = flow_pool_profile(f)
        flows.append({
            "contract": f.contract,
            "total_bribe_wei": f.total_bribe,
            "tx_count": f.tx_count,
            "matrix": {str(t): dict(row) for t, row in f.matrix.items()},
            "pools": {"count": prof.count, "mean_usd": prof.mean_usd, "median_usd": prof.median_usd},
        })
    _write_json(ctx.args.out, {"granularity": table.scheme.granularity, "anchor": table.scheme.anchor,
                               "trading_revenue_wei": table.total_bribe(), "flows": flows})
    ctx.log(f"{len(flows)} flows")
    return EXIT_OK


def run_exclusivity(ctx: _Context, out: Path, ground_truth: str | None, tau: float | None,
                    eofs_path: Path, threshold_path: Path) -> frozenset[str]:
    ds = ctx.dataset
    table = build_flows(ds, "weekly")
    markets = market_distributions(ds, table.scheme)
    scores = score_flows(table, markets, threads=ctx.threads)
    labels = _labels(ctx, ground_truth)
    rows = sorted(scores.values(), key=lambda s: (-s.total, s.contract))
    _write_csv(out, ("contract", "label", "total_score", "total_bribe_eth", "avg_kl", "active_weeks"),
               [(s.contract, labels.mechanism(s.contract), _fmt(s.total), _fmt(_eth(s.total_bribe)),
                 _fmt(s.avg_kl), s.active_epochs) for s in rows])
    result = None
    if tau is None and labels.ground_truth():
        result = optimize_threshold(scores, labels)
        tau = result.threshold
    if tau is None:
        ctx.log("no ground truth and no --tau: scores only")
        return frozenset()
    eofs = classify_eof(scores, tau)
    _write_csv(eofs_path, ("contract", "total_score"), [(c, _fmt(scores[c].total)) for c in sorted(eofs)])
    summary = {"threshold": tau, "n_flows": len(scores), "n_eof": len(eofs)}
    if result is not None:
        summary.update(precision=result.precision, recall=result.recall, f1=result.f1,
                       tp=result.tp, fp=result.fp, fn=result.fn)
    _write_json(threshold_path, summary)
    ctx.log(f"tau={tau!r}: {len(eofs)} EOFs out of {len(scores)} flows")
    return eofs


def cmd_exclusivity(ctx: _Context) -> int:
    out = Path(ctx.args.out)
    eofs = Path(ctx.args.eofs) if ctx.args.eofs else out.with_name("eofs.csv")
    thr = Path(ctx.args.threshold_out) if ctx.args.threshold_out else out.with_name("threshold.json")
    run_exclusivity(ctx, out, ctx.args.ground_truth, ctx.args.tau, eofs, thr)
    return EXIT_OK


def run_edr(ctx: _Context, eofs: frozenset[str], out: Path) -> None:
    records = edr_records(ctx.dataset, eofs)
    builders = sorted({r.builder for r in records})
    rows = []
    for b in builders + [GLOBAL]:
        hist = edr_histogram(records, b)
        n = sum(1 for r in records if b == GLOBAL or r.builder == b)
        rows.append([b, n] + [_fmt(hist[k]) for k in BINS])
    _write_csv(out, ("builder", "blocks") + BINS, rows)


def cmd_edr(ctx: _Context) -> int:
    run_edr(ctx, read_eofs(ctx.args.eof), Path(ctx.args.out))
    return EXIT_OK


def run_features(ctx: _Context, out: Path, min_txs: int):
    feats = extract_all(ctx.dataset, ctx.dataset.swap_contracts, min_txs)
    _write_csv(out, ("contract",) + FEATURE_NAMES,
               [[c] + [_fmt(v) if isinstance(v, float) else v for v in f.vector.as_dict().values()]
                for c, f in feats.items()])
    low = sum(1 for f in feats.values() if f.low_confidence)
    ctx.log(f"{len(feats)} contracts, {low} below {min_txs} txs")
    return feats


def cmd_features(ctx: _Context) -> int:
    run_features(ctx, Path(ctx.args.out), ctx.args.min_txs)
    return EXIT_OK


def run_train(ctx: _Context, labels_path: str | None, seed: int, out: Path, feats=None) -> Forest:
    ds = ctx.dataset
    labels = _labels(ctx, labels_path)
    if feats is None:
        feats = extract_all(ds, [c for c in labels.mechanisms if c in ds.txs_by_contract])
    contracts = sorted(c for c in labels.mechanisms if c in feats)
    vectors = [feats[c].vector for c in contracts]
    targets = [labels.mechanism(c) == "non_atomic" for c in contracts]
    forest = train_forest(vectors, targets, seed, threads=ctx.threads)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    Path(out).write_text(forest.to_json() + "\n", encoding="utf-8")
    ctx.log(f"trained on {len(contracts)} labelled contracts; test accuracy {forest.test_accuracy}, "
            f"validation {forest.validation_accuracy}")
    return forest


def cmd_train(ctx: _Context) -> int:
    run_train(ctx, ctx.args.labels, ctx.args.seed, Path(ctx.args.out))
    return EXIT_OK


def _load_forest(path: str | Path) -> Forest:
    p = Path(path)
    if not p.exists():
        raise MissingFile(p)
    return Forest.from_json(p.read_text(encoding="utf-8"))


def cmd_classify(ctx: _Context) -> int:
    forest = _load_forest(ctx.args.forest)
    feats = extract_all(ctx.dataset, ctx.dataset.swap_contracts)
    rows = []
    for c, f in feats.items():
        p = forest.predict(f.vector)
        rows.append((c, p.label, p.votes))
    if ctx.args.out:
        _write_csv(ctx.args.out, ("contract", "prediction", "votes"), rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(("contract", "prediction", "votes"))
        w.writerows(rows)
    return EXIT_OK


def run_pipeline(ctx: _Context, forest: Forest, k: int, out: Path, feats=None) -> dict[str, str]:
    ds = ctx.dataset
    table = build_flows(ds, "weekly")
    assignments = classify_top_flows(table, forest, ds.labels, k, dataset=ds, features=feats)
    _write_csv(out, ("rank", "contract", "total_bribe_eth", "mechanism", "source", "votes"),
               [(a.rank, a.contract, _fmt(_eth(a.total_bribe)), a.mechanism, a.source,
                 "" if a.votes is None else a.votes) for a in assignments])
    counts = category_counts(assignments)
    ctx.log("categories: " + json.dumps(counts, sort_keys=True))
    return {a.contract: a.mechanism for a in assignments}


def cmd_pipeline(ctx: _Context) -> int:
    if ctx.args.forest:
        forest = _load_forest(ctx.args.forest)
    else:
        out = Path(ctx.args.out)
        forest = run_train(ctx, None, ctx.args.seed, out.with_name("forest.json"))
    run_pipeline(ctx, forest, ctx.args.k, Path(ctx.args.out))
    return EXIT_OK


def run_market_report(ctx: _Context, out: Path, phases, eofs: frozenset[str] | None,
                      mechanisms: dict[str, str] | None) -> dict:
    ds = ctx.dataset
    shares = weekly_shares(ds)
    series = hhi_series(ds)
    report = {
        "categories": categorize_builders(ds),
        "hhi": [{"week": p.epoch, "start": p.start, "hhi": p.hhi, "builders": p.builders, "blocks": p.blocks}
                for p in series],
        "phases": [{"name": p.name, "start": p.start, "end": p.end} for p in phases],
        "composition": None,
        "correlation": None,
    }
    if mechanisms:
        comp = phase_composition(ds, mechanisms, phases, skip_empty=True)
        report["composition"] = [{"phase": c.phase, "totals_wei": dict(c.totals), "fractions": c.fractions}
                                 for c in comp]
    corr_rows = []
    if eofs is not None:
        report["correlation"] = {}
        builders = sorted({b.builder for b in ds.blocks} - {PROPOSER})
        for b in builders:
            try:
                res = eof_share_correlation(ds, eofs, b)
            except InsufficientDays as exc:
                report["correlation"][b] = {"r": None, "reason": exc.code}
                continue
            report["correlation"][b] = {"r": res.r, "days": len(res.days), "dropped_days": res.dropped_days}
            corr_rows.extend((b, d, _fmt(s), _fmt(e)) for d, s, e in zip(res.days, res.shares, res.eof_ratios))
    _write_json(out, report)
    stem = out.with_suffix("")
    _write_csv(f"{stem}_shares.csv", ("week", "builder", "share"),
               [(t, b, _fmt(s)) for t, row in shares.items() for b, s in row.items()])
    _write_csv(f"{stem}_hhi.csv", ("week", "start", "hhi", "builders", "blocks"),
               [(p.epoch, p.start, _fmt(p.hhi), p.builders, p.blocks) for p in series])
    if eofs is not None:
        _write_csv(f"{stem}_correlation.csv", ("builder", "day", "share", "eof_ratio"), corr_rows)
    return report


def _phases(path: str | None):
    if path:
        if not Path(path).exists():
            raise MissingFile(path)
        return load_phases(path)
    return default_phases()


def cmd_market_report(ctx: _Context) -> int:
    eofs = read_eofs(ctx.args.eof) if ctx.args.eof else None
    mechanisms = _mechanism_map(ctx, ctx.args.mechanisms)
    run_market_report(ctx, Path(ctx.args.out), _phases(ctx.args.phases), eofs, mechanisms)
    return EXIT_OK


def run_tailfit(ctx: _Context, mechanism: str, mechanisms: dict[str, str], out: Path, top: list[int]) -> dict:
    table = build_flows(ctx.dataset, "weekly")
    values = sorted((_eth(f.total_bribe) for c, f in table.flows.items()
                     if mechanisms.get(c) == mechanism and f.total_bribe > 0), reverse=True)
    fit = fit_power_law(values)
    report = {"mechanism": mechanism, "n_flows": len(values), "alpha": fit.alpha, "x_min_eth": fit.x_min,
              "ks_statistic": fit.ks_statistic, "n_tail": fit.n_tail,
              "top_shares": {str(k): concentration_summary(values, k) for k in top}}
    _write_json(out, report)
    ctx.log(f"alpha={fit.alpha:.4f} D={fit.ks_statistic:.4f} over {fit.n_tail} of {len(values)} flows")
    return report


def cmd_tailfit(ctx: _Context) -> int:
    mechanisms = _mechanism_map(ctx, ctx.args.mechanisms)
    run_tailfit(ctx, ctx.args.mechanism, mechanisms, Path(ctx.args.out), ctx.args.top)
    return EXIT_OK


def cmd_all(ctx: _Context) -> int:
    """Every analysis stage into one output directory, plus a digest list."""
    out = Path(ctx.args.out)
    out.mkdir(parents=True, exist_ok=True)
    eofs = run_exclusivity(ctx, out / "scores.csv", None, None, out / "eofs.csv", out / "threshold.json")
    run_edr(ctx, eofs, out / "edr_hist.csv")
    feats = run_features(ctx, out / "features.csv", ctx.args.min_txs)
    forest = run_train(ctx, None, ctx.args.seed, out / "forest.json", feats)
    _write_json(out / "importance.json", feature_importance(forest))
    mechanisms = run_pipeline(ctx, forest, ctx.args.k, out / "mechanisms.csv", feats)
    run_market_report(ctx, out / "report.json", _phases(ctx.args.phases), eofs, mechanisms)
    tail = None
    try:
        tail = run_tailfit(ctx, "non_atomic", mechanisms, out / "tail.json", [2, 10])
    except FlowscopeError as exc:
        ctx.log(f"tail fit skipped: {exc.code}")
    digests = {k: v for k, v in file_digests(out).items() if k != "digests.json"}
    _write_json(out / "digests.json", digests)
    if tail is None:
        ctx.log("note: fewer non-atomic flows than the tail fit needs")
    print(hashlib.sha256(json.dumps(digests, sort_keys=True).encode()).hexdigest())
    return EXIT_OK


# --- parser ----------------------------------------------------------------------


def _top_list(text: str) -> list[int]:
    try:
        ks = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("ranks must be positive")
    return ks


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flowscope", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"flowscope {__version__}")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads (output does not depend on it)")
    parser.add_argument("--quiet", action="store_true", help="suppress progress messages")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_text, data=True):
        p = sub.add_parser(name, help=help_text, description=help_text)
        if data:
            p.add_argument("--data", default=".", help="dataset directory (default: current directory)")
        p.set_defaults(func=func)
        return p

    p = command("synth", cmd_synth, "generate a synthetic dataset with a manifest", data=False)
    p.add_argument("--config", required=True, help="scenario TOML, or the name of a bundled scenario")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="override the scenario seed")

    p = command("revenue", cmd_revenue, "block economics or dataset revenue totals")
    p.add_argument("--block", type=int)
    p.add_argument("--out")

    p = command("flows", cmd_flows, "order flows and their per-epoch bribe matrices")
    p.add_argument("--granularity", choices=("weekly", "daily"), default="weekly")
    p.add_argument("--out", required=True)

    p = command("exclusivity", cmd_exclusivity, "exclusivity scores, F1-optimal threshold and EOF set")
    p.add_argument("--ground-truth", help="label CSV with known_eof (default: <data>/labels.csv)")
    p.add_argument("--tau", type=float, help="fixed threshold instead of the F1 sweep")
    p.add_argument("--out", required=True, help="scores CSV")
    p.add_argument("--eofs", help="EOF list CSV (default: eofs.csv beside --out)")
    p.add_argument("--threshold-out", help="threshold JSON (default: threshold.json beside --out)")

    p = command("edr", cmd_edr, "per-builder EOF dependency ratio histograms")
    p.add_argument("--eof", required=True, help="CSV with a contract column")
    p.add_argument("--out", required=True)

    p = command("features", cmd_features, "nine behavioural features per swap contract")
    p.add_argument("--out", required=True)
    p.add_argument("--min-txs", type=int, default=10)

    p = command("train", cmd_train, "train the non-atomic classifier on labelled contracts")
    p.add_argument("--labels", help="label CSV (default: <data>/labels.csv)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)

    p = command("classify", cmd_classify, "predict non-atomic vs other for every swap contract")
    p.add_argument("--forest", required=True)
    p.add_argument("--out")

    p = command("pipeline", cmd_pipeline, "mechanism assignment for the top-K flows")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--forest", help="trained forest JSON (default: train one from the labels)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)

    p = command("market-report", cmd_market_report, "HHI, builder categories, phase mix and correlations")
    p.add_argument("--phases", help="phase TOML (default: built-in market phases)")
    p.add_argument("--eof", help="EOF list CSV; enables the share/EOF correlation")
    p.add_argument("--mechanisms", help="pipeline CSV (default: mechanisms from the label file)")
    p.add_argument("--out", required=True)

    p = command("tailfit", cmd_tailfit, "power-law fit of per-flow bribes for one mechanism")
    p.add_argument("--mechanism", default="non_atomic")
    p.add_argument("--mechanisms", help="pipeline CSV (default: mechanisms from the label file)")
    p.add_argument("--top", type=_top_list, default=[2, 10], help="ranks for top-k shares, e.g. 2,10")
    p.add_argument("--out", required=True)

    p = command("all", cmd_all, "run every analysis stage end to end")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--min-txs", type=int, default=10)
    p.add_argument("--phases")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"flowscope: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if args.threads < 1:
        print("flowscope: error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    ctx = _Context(args)
    try:
        return args.func(ctx)
    except FlowscopeError as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return EXIT_ERROR
    except ValueError as exc:
        print(json.dumps({"error": "cli.InvalidInput", "message": str(exc)}, sort_keys=True), file=sys.stderr)
        return EXIT_ERROR
