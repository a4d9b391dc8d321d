"""Command-line interface.

Offline commands (evaluate, trial, crawl, classify, export, import)
drive the package directly; serve boots the DNS listeners plus the
control API, and status/export/import can also talk to a running
service over HTTP.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from datetime import timedelta
from pathlib import Path

import httpx

from . import discovery, evaluation
from .blocklist import BlocklistStore
from .classifier import ClassifierConfig, classify_batch, latency_samples, stub_chat_transport
from .config import DEFAULT_TAG, load_config, split_listen
from .evaluation import (
    compute_metrics,
    hamming_matrix,
    language_breakdown,
    latency_summary,
    latency_summary_csv,
    load_dataset,
    run_blocking_trial,
)


def _read_predictions(path: Path) -> dict[str, str]:
    """Prediction CSV: header ``url,verdict``; verdict in yes/no/unknown."""
    rows: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if [h.strip().lower() for h in header] != ["url", "verdict"]:
            raise SystemExit(f"{path}: expected header url,verdict")
        for row in reader:
            if len(row) >= 2 and row[0].strip():
                rows[row[0].strip()] = row[1].strip().lower()
    return rows


def _metrics_line(name: str, metrics) -> str:
    m = metrics.matrix
    return (
        f"{name:<12} acc={metrics.accuracy:.3f} precision={metrics.precision:.3f} "
        f"recall={metrics.recall:.3f} f1={metrics.f1:.3f} mcc={metrics.mcc:.3f} "
        f"(tp={m.tp} fp={m.fp} fn={m.fn} tn={m.tn})"
    )


def cmd_evaluate(args: argparse.Namespace) -> int:
    sites = load_dataset(args.dataset)
    labels = [s.label for s in sites]
    positives = sum(1 for s in sites if s.label == "positive")
    print(f"dataset: {len(sites)} sites ({positives} positive / {len(sites) - positives} negative)")

    vectors: dict[str, list[str]] = {}
    report: dict = {"dataset": str(args.dataset), "sites": len(sites), "models": {}}
    for spec in args.predictions:
        name, _, path = spec.partition("=")
        if not path:
            raise SystemExit(f"--predictions wants NAME=PATH, got {spec!r}")
        by_url = _read_predictions(Path(path))
        missing = [s.url for s in sites if s.url not in by_url]
        if missing:
            raise SystemExit(f"{path}: no prediction for {missing[0]} (+{len(missing) - 1} more)")
        vector = [by_url[s.url] for s in sites]
        vectors[name] = vector
        metrics = compute_metrics(vector, labels)
        print(_metrics_line(name, metrics))
        report["models"][name] = {
            "accuracy": metrics.accuracy,
            "precision": metrics.precision,
            "recall": metrics.recall,
            "f1": metrics.f1,
            "mcc": metrics.mcc,
            "matrix": {"tp": metrics.matrix.tp, "fp": metrics.matrix.fp,
                       "fn": metrics.matrix.fn, "tn": metrics.matrix.tn},
        }
        if args.by_language:
            for lang, lang_metrics in language_breakdown(vector, sites).items():
                print(f"  [{lang}] " + _metrics_line(name, lang_metrics))

    if len(vectors) >= 2:
        distances = hamming_matrix(vectors)
        report["hamming"] = distances
        names = sorted(distances)
        print("hamming distances:")
        for a in names:
            cells = " ".join(f"{distances[a][b]:>4}" for b in names)
            print(f"  {a:<12} {cells}")

    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        print(f"report written to {args.json}")
    if args.csv_dir:
        out = Path(args.csv_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, data in report["models"].items():
            m = data["matrix"]
            (out / f"confusion_{name}.csv").write_text(
                "predicted\\actual,positive,negative\n"
                f"yes,{m['tp']},{m['fp']}\n"
                f"no,{m['fn']},{m['tn']}\n"
            )
        if "hamming" in report:
            names = sorted(report["hamming"])
            lines = ["model," + ",".join(names)]
            for a in names:
                lines.append(a + "," + ",".join(str(report["hamming"][a][b]) for b in names))
            (out / "hamming.csv").write_text("\n".join(lines) + "\n")
        print(f"CSV files written to {out}")
    return 0


def cmd_trial(args: argparse.Namespace) -> int:
    sites = load_dataset(args.dataset)
    positives = [_domain_of(s.url) for s in sites if s.label == "positive"]
    negatives = [_domain_of(s.url) for s in sites if s.label == "negative"]
    report = run_blocking_trial(
        positives, negatives, phase_duration=timedelta(hours=args.phase_hours), tag=args.tag
    )
    for phase in report.phases:
        print(
            f"{phase.phase:<7} {phase.positives_blocked}/{phase.positives_total} positives sinkholed, "
            f"{phase.negatives_blocked}/{phase.negatives_total} negatives blocked"
        )
    print("expectations met" if report.meets_expectations else "EXPECTATIONS NOT MET")
    if args.json:
        Path(args.json).write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
        print(f"report written to {args.json}")
    return 0 if report.meets_expectations else 1


def _domain_of(url: str) -> str:
    from .domains import canonicalize_domain

    return canonicalize_domain(url)


def cmd_crawl(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.dataset:
        urls = [s.url for s in load_dataset(args.dataset)]
    else:
        urls = discovery.load_seed_list(Path(args.urls).read_text(encoding="utf-8"))
    urls = [u if u.startswith(("http://", "https://")) else f"https://{u}" for u in urls]
    limits = discovery.FetchLimits(
        timeout=config.crawl.timeout_ms / 1000.0,
        max_bytes=config.crawl.max_bytes,
        content_cap=config.crawl.content_cap,
    )
    limiter = discovery.HostRateLimiter(min_interval=1.0 / config.crawl.rate_per_host)
    for url in urls:
        dossier = discovery.fetch_dossier(
            url, limits, user_agent=config.crawl.user_agent, rate_limiter=limiter
        )
        path = discovery.save_dossier(args.out, dossier)
        print(f"{dossier.fetch_status:<10} {url} -> {path}")
    return 0


def _stub_transport_for(dataset_path: str):
    sites = load_dataset(dataset_path)
    rules = [
        (_domain_of(s.url), "Yes" if s.label == "positive" else "No",
         "stub rule from labeled fixture")
        for s in sites
    ]
    return stub_chat_transport(rules)


def cmd_classify(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    dossiers = discovery.load_archive(args.archive)
    if not dossiers:
        raise SystemExit(f"no dossiers in {args.archive}")
    criteria = None
    if config.llm.criteria_file:
        criteria = Path(config.llm.criteria_file).read_text(encoding="utf-8").strip()
    models = args.model or [config.llm.model]
    configs = []
    for model in models:
        kwargs = dict(
            endpoint=args.endpoint or config.llm.endpoint,
            model_id=model,
            temperature=config.llm.temperature,
            max_retries=config.llm.max_retries,
            request_timeout=config.llm.timeout_ms / 1000.0,
            chat_path=config.llm.chat_path,
        )
        if criteria:
            kwargs["criteria_text"] = criteria
        configs.append(ClassifierConfig(**kwargs))
    transports = None
    if args.stub_dataset:
        transports = {c.model_id: _stub_transport_for(args.stub_dataset) for c in configs}
    results = classify_batch(dossiers, configs, transports=transports, out_path=args.out)
    for model, verdicts in results.items():
        yes = sum(1 for v in verdicts if v.verdict.value == "yes")
        unknown = sum(1 for v in verdicts if v.verdict.value == "unknown")
        print(f"{model}: {len(verdicts)} verdicts ({yes} yes, {unknown} unknown)")
    if args.out:
        print(f"verdict log appended to {args.out}")
    summary = latency_summary(latency_samples(results))
    print(latency_summary_csv(summary), end="")
    return 0


def cmd_smoke(args: argparse.Namespace) -> int:
    """Live classification sanity run: metrics reported, no pass threshold."""
    dossiers = discovery.load_archive(args.archive)
    if len(dossiers) < 10:
        raise SystemExit(f"need at least 10 archived dossiers, found {len(dossiers)}")
    sites = {s.url: s for s in load_dataset(args.dataset)} if args.dataset else {}
    config = ClassifierConfig(endpoint=args.endpoint, model_id=args.model)
    results = classify_batch(dossiers, [config])
    verdicts = results[config.model_id]
    labeled = [(v, sites[v.dossier_url]) for v in verdicts if v.dossier_url in sites]
    print(f"classified {len(verdicts)} dossiers against {args.endpoint}")
    if labeled:
        metrics = compute_metrics([v.verdict for v, _ in labeled], [s.label for _, s in labeled])
        print(_metrics_line(config.model_id, metrics))
        print("informational only; live models and live sites are nondeterministic")
    summary = latency_summary(latency_samples(results))
    print(latency_summary_csv(summary), end="")
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    if args.api:
        response = httpx.get(f"{args.api.rstrip('/')}/lists/{args.tag.lower()}.txt")
        response.raise_for_status()
        document = response.text
    else:
        store = BlocklistStore(args.store)
        document = store.export_list(args.tag)
    if args.out:
        Path(args.out).write_text(document, encoding="utf-8")
        print(f"exported to {args.out}")
    else:
        sys.stdout.write(document)
    return 0


def cmd_import(args: argparse.Namespace) -> int:
    document = Path(args.file).read_text(encoding="utf-8")
    if args.api:
        response = httpx.post(
            f"{args.api.rstrip('/')}/api/import",
            json={"tag": args.tag, "document": document},
            headers={"Authorization": f"Bearer {args.token or ''}"},
        )
        response.raise_for_status()
        body = response.json()
        print(f"added={body['added']} deactivated={body['deactivated']} active={body['active']}")
    else:
        store = BlocklistStore(args.store)
        added, deactivated = store.import_list(document, args.tag)
        active = sum(1 for e in store.entries(args.tag) if e.active)
        print(f"added={added} deactivated={deactivated} active={active}")
    return 0


def cmd_status(args: argparse.Namespace) -> int:
    response = httpx.get(f"{args.api.rstrip('/')}/api/status")
    response.raise_for_status()
    print(json.dumps(response.json(), indent=2, sort_keys=True))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .api import create_app
    from .resolver import DnsServers
    from .service import build_state

    config = load_config(args.config)
    state = build_state(config)
    dns_host, dns_port = split_listen(config.dns.listen, 5353)
    servers = DnsServers(state.resolver, dns_host, dns_port)
    servers.start()
    print(f"DNS listening on {dns_host}:{servers.port} (udp+tcp), upstream {config.dns.upstream}")

    import threading

    def flush_query_log():
        while True:
            time.sleep(args.log_flush_secs)
            try:
                state.query_log.persist(config.query_log_path)
            except OSError:
                pass

    threading.Thread(target=flush_query_log, daemon=True).start()

    app = create_app(state)
    api_host, api_port = split_listen(config.api.listen, 8053)
    try:
        uvicorn.run(app, host=api_host, port=api_port, log_level="info")
    finally:
        servers.stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llmsink")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="score prediction vectors against the labeled dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictions", action="append", default=[], metavar="NAME=PATH", required=True)
    p.add_argument("--by-language", action="store_true")
    p.add_argument("--json")
    p.add_argument("--csv-dir")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("trial", help="run the three-phase blocking trial (simulated clock)")
    p.add_argument("--dataset", required=True)
    p.add_argument("--phase-hours", type=float, default=4.0)
    p.add_argument("--tag", default=DEFAULT_TAG)
    p.add_argument("--json")
    p.set_defaults(func=cmd_trial)

    p = sub.add_parser("crawl", help="fetch dossiers into an archive directory")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--dataset")
    group.add_argument("--urls", help="seed list file, one URL per line")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_crawl)

    p = sub.add_parser("classify", help="classify an archive of dossiers")
    p.add_argument("--archive", required=True)
    p.add_argument("--model", action="append")
    p.add_argument("--endpoint")
    p.add_argument("--stub-dataset", help="use the deterministic stub seeded from this dataset")
    p.add_argument("--out", help="verdict log (JSON lines)")
    p.add_argument("--config")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("smoke", help="live classification smoke run (no pass threshold)")
    p.add_argument("--archive", required=True)
    p.add_argument("--endpoint", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", help="labels for informational metrics")
    p.set_defaults(func=cmd_smoke)

    p = sub.add_parser("export", help="write the subscription document for a tag")
    p.add_argument("--store")
    p.add_argument("--api", help="base URL of a running service")
    p.add_argument("--tag", default=DEFAULT_TAG)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("import", help="apply a subscription document to a tag")
    p.add_argument("--store")
    p.add_argument("--api")
    p.add_argument("--token")
    p.add_argument("--tag", default=DEFAULT_TAG)
    p.add_argument("--file", required=True)
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("status", help="fetch /api/status from a running service")
    p.add_argument("--api", required=True)
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("serve", help="run the DNS listeners and the control API")
    p.add_argument("--config")
    p.add_argument("--log-flush-secs", type=int, default=30)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in ("export", "import") and not args.api and not args.store:
        raise SystemExit("need --store PATH or --api URL")
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
