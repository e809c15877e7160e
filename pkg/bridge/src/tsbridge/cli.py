"""Command-line entry: serve a user model over stdio or TCP.

The model is named by a module path ``package.module:attribute``; the
attribute is either the model object itself or a zero-argument factory
returning it. The object needs ``predict`` and ``shape`` and may provide
``gradient`` (see tsbridge.server.ModelSpec).
"""

from __future__ import annotations

import argparse
import importlib
import logging
import sys

from .server import ModelSpec, serve_lines, serve_tcp


def load_model(spec: str) -> ModelSpec:
    module_path, _, attr = spec.partition(":")
    if not module_path or not attr:
        raise SystemExit(f"--model must look like package.module:attribute, got {spec!r}")
    module = importlib.import_module(module_path)
    target = getattr(module, attr)
    if callable(target) and not hasattr(target, "shape"):
        target = target()
    return ModelSpec.from_object(target)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tsbridge", description="Serve a forecasting model over the wire protocol")
    parser.add_argument("--transport", required=True,
                        help="stdio, or tcp:PORT (0 picks a free port)")
    parser.add_argument("--model", required=True,
                        help="module path to the model or its factory, e.g. mymod:make")
    parser.add_argument("--path", action="append", default=[],
                        help="extra sys.path entry for resolving --model")
    parser.add_argument("--max-connections", type=int, default=None,
                        help="tcp only: exit after this many connections")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="tsbridge %(levelname)s %(message)s")
    for entry in args.path:
        sys.path.insert(0, entry)
    model = load_model(args.model)

    if args.transport == "stdio":
        serve_lines(model, sys.stdin, sys.stdout)
        return 0
    if args.transport.startswith("tcp:"):
        port = int(args.transport[len("tcp:"):])
        serve_tcp(model, port, max_connections=args.max_connections)
        return 0
    raise SystemExit(f"unknown transport {args.transport!r}; use stdio or tcp:PORT")


if __name__ == "__main__":
    sys.exit(main())
