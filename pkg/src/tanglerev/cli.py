"""Command-line entry point: ``tanglerev <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from tanglerev import harness
from tanglerev.harness import ConfigInvalid, ScenarioConfig
from tanglerev.service import ServiceConfig, VpkiService, serve


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _float_list(text: str) -> list[float]:
    values = [float(x) for x in text.split(",") if x]
    return [int(v) if v.is_integer() else v for v in values]


def _common(suppress: bool) -> argparse.ArgumentParser:
    # flags are accepted before or after the subcommand; the subcommand copy
    # suppresses defaults so it does not clobber values given up front
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON scenario (bench-*) or service config file", **kw)
    p.add_argument("--out", help="output file (default: stdout)", **kw)
    p.add_argument("--seed", type=int, **kw)
    p.add_argument("--revoked", type=_int_list, help="comma-separated revoked counts", **kw)
    p.add_argument("--freq", type=_float_list, help="comma-separated message frequencies (Hz)", **kw)
    p.add_argument("--duration", type=float, help="seconds of traffic per cell", **kw)
    p.add_argument("--store", help="service store directory", **kw)
    p.add_argument("-v", "--verbose", action="store_true", **kw)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common(suppress=True)
    parser = argparse.ArgumentParser(prog="tanglerev", parents=[_common(suppress=False)],
                                     description="Ledger-based vehicular certificate revocation.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("bootstrap", parents=[common], help="create a store and print trust anchors")
    for name, text in [("bench-check", "revocation-check delay sweep"),
                       ("bench-crl", "linear-scan CRL baseline on the same workload")]:
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--samples", help="per-sample dump (CSV)")
        p.add_argument("--cdf", help="CDF points (CSV)")
    p = sub.add_parser("bench-window", parents=[common], help="vulnerability-window measurement")
    p.add_argument("--n", type=int, dest="n_revocations", help="number of revocations")
    p.add_argument("--samples", help="per-sample dump (CSV)")
    p.add_argument("--cdf", help="CDF points (CSV)")
    for name in ("revoke", "status", "resolve"):
        p = sub.add_parser(name, parents=[common], help=f"{name} a certificate by hex HashedId")
        p.add_argument("hash")
    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--listen", help="host:port")
    return parser


def _scenario(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.revoked:
        cfg.revoked_counts = args.revoked
    if args.freq:
        cfg.frequencies_hz = args.freq
    if args.duration is not None:
        cfg.duration_s = args.duration
    if getattr(args, "n_revocations", None) is not None:
        cfg.n_revocations = args.n_revocations
    cfg.validate()
    return cfg


def _service_config(args) -> ServiceConfig:
    cfg = ServiceConfig.load(args.config) if args.config else ServiceConfig()
    if args.store:
        cfg.store_path = args.store
    if args.seed is not None:
        cfg.seed = str(args.seed)
    if getattr(args, "listen", None):
        cfg.listen_endpoint = args.listen
    return cfg


def _emit_metrics(args, rows) -> None:
    if args.out:
        harness.write_metrics(args.out, rows)
    else:
        sys.stdout.write(harness.metrics_text(rows))


def _cmd_bench(args, crl: bool) -> int:
    cfg = _scenario(args)
    run = harness.run_crl_baseline if crl else harness.run_check_benchmark
    result = run(cfg)
    kind = "crl" if crl else "check"
    rows = result.rows(kind)
    if crl:
        rows += [["crl_miss", c, f, s.mean_ms, s.max_ms, s.p95_ms, s.n]
                 for (c, f), s in sorted(harness.miss_stats(result).items())]
    _emit_metrics(args, rows)
    if args.samples:
        harness.write_samples(args.samples, result.sample_records(kind))
    if args.cdf:
        harness.write_cdf(args.cdf, {(kind, c, f): v for (c, f), v in result.samples.items()})
    if result.false_positives or result.false_negatives or result.other_outcomes:
        print(f"decision mismatches: fp={result.false_positives} fn={result.false_negatives} "
              f"other={result.other_outcomes}", file=sys.stderr)
        return 1
    return 0


def _cmd_window(args) -> int:
    cfg = _scenario(args)
    result = harness.run_window_benchmark(cfg)
    s = result.stats
    _emit_metrics(args, [["publish", s.n, 0, s.mean_ms, s.max_ms, s.p95_ms, s.n]])
    if args.samples:
        harness.write_samples(args.samples, [harness.DelaySample("publish", v, s.n, 0)
                                             for v in result.samples])
    if args.cdf:
        harness.write_cdf(args.cdf, {("publish", s.n, 0): result.samples})
    return 0


def _cmd_service(args) -> int:
    cfg = _service_config(args)
    if args.command == "serve":
        serve(cfg)
        return 0
    svc = VpkiService(cfg)
    try:
        if args.command == "bootstrap":
            certs = {k: c.hashed_id().hex() for k, c in svc.domain.certs().items()}
            print(json.dumps({"store": cfg.store_path, **certs}, indent=2, sort_keys=True))
            return 0
        if args.command == "revoke":
            status, body = svc.handle("POST", "/misbehavior-report",
                                      json.dumps({"stc_hash": args.hash}).encode())
        elif args.command == "status":
            status, body = svc.handle("GET", f"/revocation-status/{args.hash}")
        else:
            status, body = svc.handle("POST", "/resolve", json.dumps({"stc_hash": args.hash}).encode())
        reply = json.loads(body)
        if status != 200:
            print(f"error ({status}): {reply.get('detail') or reply.get('error')}", file=sys.stderr)
            return 1
        if args.command == "status":
            print(reply["status"])
        elif args.command == "resolve":
            print(reply["canonical_id"])
        else:
            print(json.dumps(reply, sort_keys=True))
        return 0
    finally:
        svc.close()


def cli_run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "bench-check":
            return _cmd_bench(args, crl=False)
        if args.command == "bench-crl":
            return _cmd_bench(args, crl=True)
        if args.command == "bench-window":
            return _cmd_window(args)
        return _cmd_service(args)
    except (ConfigInvalid, ValueError, OSError, RuntimeError) as exc:
        print(f"tanglerev: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_run())


if __name__ == "__main__":
    main()
