"""Serve any forecasting model behind the line-delimited prediction protocol."""

__version__ = "0.1.0"

from .server import BridgeServer, ModelSpec, serve_lines
