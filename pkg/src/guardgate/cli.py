"""Command-line entry point.

Exit codes: 0 success, 1 replay mismatch, 2 configuration, input or
transport failure. Errors go to stderr as ``guardgate: <kind>: <reason>``.
"""

from __future__ import annotations

import argparse
import logging
import signal
import sys
import threading

from . import ood
from .config import ConfigError, load_config
from .core import OOD_METHODS
from .model import ModelFormatError, load_model

EXIT_OK, EXIT_MISMATCH, EXIT_ENV = 0, 1, 2


def _fail(kind: str, reason: str) -> int:
    print(f"guardgate: {kind}: {reason}", file=sys.stderr)
    return EXIT_ENV


def cmd_run(args) -> int:
    from .gateway import Gateway, GatewayServer

    try:
        config = load_config(args.config)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"guardgate: config-error: {err}", file=sys.stderr)
        return EXIT_ENV
    try:
        gateway = Gateway(config)
    except (ModelFormatError, OSError, ValueError) as exc:
        return _fail("model-error", str(exc))
    if args.check_only:
        print(f"config ok: mode={config.mode} hash={config.config_hash}")
        gateway.close()
        return EXIT_OK
    try:
        server = GatewayServer(gateway)
    except OSError as exc:
        gateway.close()
        return _fail("bind-error", f"{config.listen_address}: {exc.strerror or exc}")

    def _stop(signum, frame):
        threading.Thread(target=server.shutdown, daemon=True).start()

    signal.signal(signal.SIGTERM, _stop)
    signal.signal(signal.SIGINT, _stop)
    print(f"listening on http://{server.address}", flush=True)
    server.serve_forever()
    drained = server.wait_idle(args.drain_timeout)
    server.server_close()
    gateway.close()
    if not drained:
        return _fail("shutdown", "in-flight requests still running at drain timeout")
    return EXIT_OK


def _read_scores(path: str, method: str, temperature: float) -> list[float]:
    scores = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                values = [float(tok) for tok in line.split(",")]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a comma-separated list of numbers") from None
            # one value is a precomputed score, several are a logit vector
            scores.append(values[0] if len(values) == 1 else ood.guard_score(values, method, temperature))
    return scores


def cmd_calibrate(args) -> int:
    try:
        scores = _read_scores(args.scores, args.method, args.temperature)
        threshold = ood.calibrate_threshold(scores, args.target)
    except OSError as exc:
        return _fail("input-error", f"{args.scores}: {exc.strerror}")
    except ValueError as exc:
        return _fail("input-error", str(exc))
    achieved = ood.pass_rate(scores, threshold)
    print(f"threshold={threshold!r}\tpass_rate={achieved:.6f}\tn={len(scores)}\tmethod={args.method}")
    return EXIT_OK


def cmd_replay(args) -> int:
    from .replay import CorpusError, ReplayTransportError, load_corpus, replay, summary_table

    try:
        records = load_corpus(args.corpus)
    except OSError as exc:
        return _fail("input-error", f"{args.corpus}: {exc.strerror}")
    except CorpusError as exc:
        return _fail("input-error", str(exc))
    try:
        outcomes = replay(records, args.endpoint, parallel=args.parallel, timeout=args.timeout)
    except ReplayTransportError as exc:
        return _fail("transport-error", str(exc))
    print(summary_table(outcomes))
    failed = [o.name for o in outcomes if not o.ok]
    if failed:
        print(f"guardgate: mismatch: {', '.join(failed)}", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_serve_model(args) -> int:
    from .config import BUNDLED_MODEL, bundled_model_path
    from .upstream import UpstreamServer

    path = bundled_model_path() if args.model == BUNDLED_MODEL else args.model
    try:
        model = load_model(path)
    except (ModelFormatError, OSError) as exc:
        return _fail("model-error", str(exc))
    host, _, port = args.listen.rpartition(":")
    try:
        server = UpstreamServer(model, (host, int(port)), delay=args.delay)
    except (OSError, ValueError) as exc:
        return _fail("bind-error", f"{args.listen}: {exc}")
    signal.signal(signal.SIGTERM, lambda *_: threading.Thread(target=server.shutdown, daemon=True).start())
    print(f"model server on {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    server.server_close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="guardgate", description="Safeguard gateway for ML inference")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="serve the gateway")
    p.add_argument("--config", required=True)
    p.add_argument("--check-only", action="store_true", help="validate config and model, then exit")
    p.add_argument("--drain-timeout", type=float, default=30.0)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("calibrate", help="OOD threshold for a target in-distribution pass rate")
    p.add_argument("--scores", required=True, help="one score or comma-separated logit vector per line")
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--method", choices=OOD_METHODS, default="msp")
    p.add_argument("--temperature", type=float, default=1.0)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("replay", help="replay a request corpus against a gateway")
    p.add_argument("--corpus", required=True)
    p.add_argument("--endpoint", required=True, help="e.g. http://127.0.0.1:8080/v1/infer")
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--timeout", type=float, default=30.0)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve-model", help="serve a weights file over the upstream logits contract")
    p.add_argument("--model", default="demo")
    p.add_argument("--listen", default="127.0.0.1:9000")
    p.add_argument("--delay", type=float, default=0.0, help="artificial latency in seconds")
    p.set_defaults(func=cmd_serve_model)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
