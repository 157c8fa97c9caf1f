#!/usr/bin/env python3
"""SSE Server for MCP - Run this to start the boson sampler server in SSE mode.

Serves the same tools, resource and prompt as main.py. The bind address comes
from --host/--port, then MCP_SSE_HOST/MCP_SSE_PORT through config.Settings.
"""

import argparse
import sys
from typing import Tuple

from config import get_settings
from errors import ConfigError
from main import mcp


def _parse_host_port(argv: list[str] | None = None) -> Tuple[str, int]:
    """Resolve the bind address; command-line flags win over the settings."""
    parser = argparse.ArgumentParser(description="Run the boson sampler MCP server over SSE")
    parser.add_argument("--host", help="address to bind (default: MCP_SSE_HOST or 127.0.0.1)")
    parser.add_argument(
        "--port",
        type=int,
        help="port to bind (default: MCP_SSE_PORT or 8000)",
    )
    args = parser.parse_args(argv)
    if args.port is not None and not 1 <= args.port <= 65535:
        parser.error(f"port {args.port} is outside 1-65535")

    if args.host is not None and args.port is not None:
        return args.host, args.port
    try:
        settings = get_settings()
    except ConfigError as e:
        print(f"error[{e.code}]: {e}", file=sys.stderr)
        raise SystemExit(1) from e
    return args.host or settings.sse_host, args.port or settings.sse_port


if __name__ == "__main__":
    host, port = _parse_host_port()

    print("Starting boson sampler MCP server in SSE mode...", file=sys.stderr)
    print(f"Listening on http://{host}:{port}/sse", file=sys.stderr)

    try:
        mcp.run(transport="sse", host=host, port=port)
    except TypeError:
        # FastMCP from the mcp package takes host and port from its settings
        import uvicorn

        mcp.settings.host = host
        mcp.settings.port = port
        uvicorn.run(mcp.sse_app(), host=host, port=port)
