"""Command-line entry point: `model-server [--config cfg.yaml]`."""

from __future__ import annotations

import argparse

import uvicorn

from .app import create_app
from .config import load_config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="model-server",
        description="Embedding and masked-LM scoring HTTP service",
    )
    parser.add_argument("--config", default=None, help="YAML/JSON config file")
    parser.add_argument("--host", default=None, help="override listen address")
    parser.add_argument("--port", type=int, default=None, help="override listen port")
    args = parser.parse_args(argv)

    config = load_config(args.config)
    host = args.host if args.host is not None else config.host
    port = args.port if args.port is not None else config.port
    uvicorn.run(create_app(config), host=host, port=port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
