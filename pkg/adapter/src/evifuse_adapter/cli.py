"""Command-line entry point.

    evifuse-adapter --model <id-or-path> [--stdio | --http PORT]
                    [--endpoint embed|score|both] [--pooling cls|mean]
                    [--batch-size N] [--max-length N] [--device cpu|cuda]
                    [--config file.json]

Flags override values from --config when both are given.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .encoder import ProviderConfig
from .server import Provider, make_http_server, serve_stdio


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evifuse-adapter",
                                     description=__doc__.strip().splitlines()[0])
    parser.add_argument("--config", help="JSON file with provider settings")
    parser.add_argument("--model", help="model identifier or local path")
    parser.add_argument("--device", default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--max-length", type=int, default=None)
    parser.add_argument("--pooling", choices=("cls", "mean"), default=None)
    parser.add_argument("--endpoint", choices=("embed", "score", "both"), default="both")
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument("--stdio", action="store_true", help="serve on stdin/stdout (default)")
    mode.add_argument("--http", type=int, metavar="PORT", help="serve HTTP on this port")
    parser.add_argument("--host", default="127.0.0.1")
    return parser


def load_config(args) -> ProviderConfig:
    values = {}
    if args.config:
        values.update(json.loads(open(args.config, encoding="utf-8").read()))
    if args.model:
        values["model"] = args.model
    if args.device:
        values["device"] = args.device
    if args.batch_size:
        values["batch_size"] = args.batch_size
    if args.max_length:
        values["max_length"] = args.max_length
    if args.pooling:
        values["pooling"] = args.pooling
    if "model" not in values:
        raise ValueError("a model must be given via --model or the config file")
    return ProviderConfig(**values)


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("EVIFUSE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        provider = Provider(config,
                            serve_embed=args.endpoint in ("embed", "both"),
                            serve_score=args.endpoint in ("score", "both"))
    except (ValueError, RuntimeError) as exc:
        sys.stderr.write(json.dumps({"kind": "startup", "error": str(exc)}) + "\n")
        return 2
    if args.http is not None:
        server = make_http_server(provider, args.host, args.http)
        sys.stderr.write(json.dumps({"serving": f"http://{args.host}:{server.server_port}"})
                         + "\n")
        sys.stderr.flush()
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        return 0
    serve_stdio(provider)
    return 0


if __name__ == "__main__":
    sys.exit(main())
