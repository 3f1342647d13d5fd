"""Launcher: ``python -m caption_server --mode mock --port 8080``."""

from __future__ import annotations

import argparse

import uvicorn

from caption_server.app import ServerConfig, create_app


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="caption-server")
    parser.add_argument("--mode", choices=("mock", "model"), default="mock")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--model", default="", help="model identifier for model mode")
    args = parser.parse_args(argv)

    config = ServerConfig(mode=args.mode, host=args.host, port=args.port, model_id=args.model)
    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
