"""Line-delimited JSON prediction server.

One message per line. The client opens with a hello carrying the protocol
version and the tensor shapes it expects; the server answers with its own
shape metadata and whether it can serve gradients, or with an error when the
metadata disagrees. After the handshake, predict and gradient requests are
answered strictly in arrival order, one response per request id:

    {"id": n, "op": "hello", "protocol_version": 1, "shape": {...}}
    {"id": n, "op": "predict", "inputs": B*J*L, "known_future": B*Jk*H}
    {"id": n, "op": "gradient", ..., "output_index": [o, tau]}

Responses carry "outputs" (B*O*H), "gradients" (B*J*L) or "error". Malformed
lines get an error response when an id can be recovered, otherwise they are
logged and skipped. A shape-mismatched request produces an error response,
never a crash. End of stream shuts the connection down cleanly.
"""

from __future__ import annotations

import json
import logging
import re
import socket
from dataclasses import dataclass
from typing import Callable, IO

import numpy as np

PROTOCOL_VERSION = 1

log = logging.getLogger("tsbridge")

SHAPE_KEYS = ("lookback_features", "lookback", "horizon", "outputs", "known_features")


@dataclass(frozen=True)
class ModelSpec:
    """A user model plus the tensor shapes it serves.

    ``predict(inputs, known_future)`` receives (B, J, L) and (B, J_known, H)
    float arrays and must return (B, outputs, H). The optional
    ``gradient(inputs, known_future, o, tau)`` returns (B, J, L) derivatives
    of output (o, tau).
    """

    predict: Callable
    shape: dict
    gradient: Callable | None = None

    def __post_init__(self):
        missing = [k for k in SHAPE_KEYS if k not in self.shape]
        if missing:
            raise ValueError(f"model shape metadata missing keys: {missing}")

    @classmethod
    def from_object(cls, model) -> "ModelSpec":
        """Adapt any object with predict / shape (and optional gradient)."""
        if isinstance(model, ModelSpec):
            return model
        return cls(predict=model.predict, shape=dict(model.shape),
                   gradient=getattr(model, "gradient", None))


def _recover_id(line: str):
    match = re.search(r'"id"\s*:\s*(\d+)', line)
    return int(match.group(1)) if match else None


def _shape_of(value) -> tuple:
    return np.asarray(value, dtype=float).shape


class BridgeServer:
    """Answers protocol requests for one model, one connection at a time."""

    def __init__(self, model: ModelSpec):
        self.model = ModelSpec.from_object(model)
        self.shape = {k: int(self.model.shape[k]) for k in SHAPE_KEYS}

    # -- one request -> one response dict ---------------------------------

    def handle(self, message: dict) -> dict:
        rid = message.get("id")
        op = message.get("op")
        try:
            if op == "hello":
                return self._hello(rid, message)
            if op == "predict":
                return self._predict(rid, message)
            if op == "gradient":
                return self._gradient(rid, message)
            return {"id": rid, "error": f"unknown op {op!r}"}
        except Exception as exc:  # never crash the loop on a bad request
            log.exception("request %s failed", rid)
            return {"id": rid, "error": f"{type(exc).__name__}: {exc}"}

    def _hello(self, rid, message) -> dict:
        version = message.get("protocol_version")
        if version != PROTOCOL_VERSION:
            return {"id": rid, "error": f"unsupported protocol version {version}; "
                                        f"serving {PROTOCOL_VERSION}"}
        theirs = message.get("shape")
        if theirs != self.shape:
            return {"id": rid, "error": f"shape metadata mismatch: client {theirs}, "
                                        f"serving {self.shape}"}
        return {"id": rid, "protocol_version": PROTOCOL_VERSION, "shape": self.shape,
                "capabilities": {"gradient": self.model.gradient is not None}}

    def _check_arrays(self, message) -> tuple[np.ndarray, np.ndarray]:
        inputs = np.asarray(message["inputs"], dtype=float)
        known = np.asarray(message.get("known_future", []), dtype=float)
        J, L = self.shape["lookback_features"], self.shape["lookback"]
        H, Jk = self.shape["horizon"], self.shape["known_features"]
        if inputs.ndim != 3 or inputs.shape[1:] != (J, L):
            raise ValueError(f"inputs shape {inputs.shape} does not match "
                             f"(B, {J}, {L})")
        batch = inputs.shape[0]
        if Jk == 0:
            known = np.zeros((batch, 0, H))
        elif known.shape != (batch, Jk, H):
            raise ValueError(f"known_future shape {_shape_of(message.get('known_future'))} "
                             f"does not match ({batch}, {Jk}, {H})")
        return inputs, known

    def _predict(self, rid, message) -> dict:
        inputs, known = self._check_arrays(message)
        outputs = np.asarray(self.model.predict(inputs, known), dtype=float)
        expected = (inputs.shape[0], self.shape["outputs"], self.shape["horizon"])
        if outputs.shape != expected:
            raise ValueError(f"model returned shape {outputs.shape}, expected {expected}")
        return {"id": rid, "outputs": outputs.tolist()}

    def _gradient(self, rid, message) -> dict:
        if self.model.gradient is None:
            return {"id": rid, "error": "gradient not supported by this model"}
        inputs, known = self._check_arrays(message)
        index = message.get("output_index")
        if (not isinstance(index, (list, tuple)) or len(index) != 2
                or not all(isinstance(v, int) for v in index)):
            raise ValueError(f"output_index must be [o, tau], got {index!r}")
        o, tau = index
        if not (0 <= o < self.shape["outputs"] and 0 <= tau < self.shape["horizon"]):
            raise ValueError(f"output_index {index} out of range")
        grads = np.asarray(self.model.gradient(inputs, known, o, tau), dtype=float)
        expected = (inputs.shape[0], self.shape["lookback_features"], self.shape["lookback"])
        if grads.shape != expected:
            raise ValueError(f"model returned gradient shape {grads.shape}, "
                             f"expected {expected}")
        return {"id": rid, "gradients": grads.tolist()}


def serve_lines(model, reader: IO[str], writer: IO[str]) -> None:
    """Request/response loop over text streams; returns on end of stream."""
    server = BridgeServer(model)
    for line in reader:
        line = line.strip()
        if not line:
            continue
        try:
            message = json.loads(line)
        except json.JSONDecodeError:
            rid = _recover_id(line)
            if rid is None:
                log.warning("skipping unparseable line: %.120s", line)
                continue
            reply = {"id": rid, "error": "unparseable request line"}
        else:
            reply = server.handle(message)
        writer.write(json.dumps(reply) + "\n")
        writer.flush()


def serve_tcp(model, port: int, host: str = "127.0.0.1",
              max_connections: int | None = None) -> None:
    """Accept connections sequentially, one request loop per connection."""
    served = 0
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((host, port))
        sock.listen(1)
        log.info("listening on %s:%d", host, sock.getsockname()[1])
        while max_connections is None or served < max_connections:
            conn, peer = sock.accept()
            log.info("connection from %s", peer)
            with conn, conn.makefile("r") as reader, conn.makefile("w") as writer:
                serve_lines(model, reader, writer)
            served += 1
