"""Client side of the external-model wire protocol.

Newline-delimited JSON over subprocess stdio or TCP. Every request carries a
monotonically increasing id the response must echo. A hello handshake pins
the protocol version and the tensor shapes both sides expect, and advertises
whether the server can answer gradient requests; numbers travel as standard
JSON decimals, which round-trip doubles exactly.

Request:  {"id": n, "op": "predict", "inputs": B*J*L, "known_future": B*Jk*H}
          {"id": n, "op": "gradient", ..., "output_index": [o, tau]}
          {"id": n, "op": "hello", "protocol_version": 1, "shape": {...}}
Response: {"id": n, "outputs": B*O*H} | {"id": n, "gradients": B*J*L}
          | {"id": n, "error": "..."}
"""

from __future__ import annotations

import json
import select
import shlex
import socket
import subprocess
from dataclasses import asdict, dataclass

import numpy as np

from .oracle import ForecastOracle
from .windows import WindowedInstance

PROTOCOL_VERSION = 1


class ProtocolError(RuntimeError):
    """Raised for handshake, transport, or malformed-response failures."""


@dataclass(frozen=True)
class WireShape:
    """Tensor dimensions both endpoints must agree on."""

    lookback_features: int    # J
    lookback: int             # L
    horizon: int
    outputs: int
    known_features: int       # J_known

    def as_dict(self) -> dict:
        return asdict(self)


class _StdioTransport:
    def __init__(self, command: str):
        self.proc = subprocess.Popen(
            shlex.split(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1)

    def send(self, line: str) -> None:
        if self.proc.poll() is not None:
            raise ProtocolError(f"external model exited with code {self.proc.returncode}")
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()

    def receive(self, timeout: float) -> str:
        ready, _, _ = select.select([self.proc.stdout], [], [], timeout)
        if not ready:
            raise ProtocolError(f"external model timed out after {timeout}s")
        line = self.proc.stdout.readline()
        if not line:
            raise ProtocolError("external model closed its output stream")
        return line

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.stdin.close()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.reader = self.sock.makefile("r")

    def send(self, line: str) -> None:
        self.sock.sendall((line + "\n").encode())

    def receive(self, timeout: float) -> str:
        self.sock.settimeout(timeout)
        line = self.reader.readline()
        if not line:
            raise ProtocolError("external model closed the connection")
        return line

    def close(self) -> None:
        try:
            self.reader.close()
        finally:
            self.sock.close()


def _open_transport(endpoint: str, timeout: float):
    if endpoint.startswith("stdio:"):
        return _StdioTransport(endpoint[len("stdio:"):])
    if endpoint.startswith("tcp:"):
        rest = endpoint[len("tcp:"):]
        host, _, port = rest.rpartition(":")
        if not host:
            host, port = "127.0.0.1", rest
        return _TcpTransport(host, int(port), timeout)
    raise ProtocolError(f"unknown endpoint {endpoint!r}; use stdio:CMD or tcp:HOST:PORT")


class ExternalModelHandle(ForecastOracle):
    """Forecast oracle backed by an external process speaking the wire protocol.

    Requests on one connection are strictly serial; the handshake must
    succeed before predictions are served.
    """

    def __init__(self, endpoint: str, shape: WireShape, timeout: float = 30.0):
        self.endpoint = endpoint
        self.shape = shape
        self.timeout = timeout
        self.output_shape = (shape.outputs, shape.horizon)
        self.has_exact_gradient = False
        self._transport = None
        self._next_id = 0

    def connect(self) -> None:
        if self._transport is not None:
            return
        self._transport = _open_transport(self.endpoint, self.timeout)
        reply = self._roundtrip({"op": "hello", "protocol_version": PROTOCOL_VERSION,
                                 "shape": self.shape.as_dict()})
        version = reply.get("protocol_version")
        if version != PROTOCOL_VERSION:
            raise ProtocolError(f"protocol version mismatch: ours {PROTOCOL_VERSION}, "
                                f"server {version}")
        server_shape = reply.get("shape")
        if server_shape != self.shape.as_dict():
            raise ProtocolError(f"shape metadata mismatch: ours {self.shape.as_dict()}, "
                                f"server {server_shape}")
        self.has_exact_gradient = bool(reply.get("capabilities", {}).get("gradient", False))

    def close(self) -> None:
        if self._transport is not None:
            self._transport.close()
            self._transport = None

    def __enter__(self) -> "ExternalModelHandle":
        self.connect()
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _roundtrip(self, payload: dict) -> dict:
        request_id = self._next_id
        self._next_id += 1
        payload = {"id": request_id, **payload}
        self._transport.send(json.dumps(payload))
        line = self._transport.receive(self.timeout)
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"unparseable response line: {line[:200]!r}") from exc
        if reply.get("id") != request_id:
            raise ProtocolError(f"response id {reply.get('id')} does not match "
                                f"request id {request_id}")
        if "error" in reply:
            raise ProtocolError(f"external model error: {reply['error']}")
        return reply

    def _request_arrays(self, batch: list[WindowedInstance]) -> dict:
        return {
            "inputs": [inst.past.tolist() for inst in batch],
            "known_future": [inst.known_future.tolist() for inst in batch],
        }

    def predict(self, batch: list[WindowedInstance]) -> np.ndarray:
        self.connect()
        reply = self._roundtrip({"op": "predict", **self._request_arrays(batch)})
        if "outputs" not in reply:
            raise ProtocolError("predict response carries no outputs")
        outputs = np.asarray(reply["outputs"], dtype=float)
        expected = (len(batch), self.shape.outputs, self.shape.horizon)
        if outputs.shape != expected:
            raise ProtocolError(f"predict returned shape {outputs.shape}, expected {expected}")
        return outputs

    def gradient(self, instance: WindowedInstance, o: int, tau: int) -> np.ndarray:
        self.connect()
        if not self.has_exact_gradient:
            raise ProtocolError("server did not advertise gradient capability")
        reply = self._roundtrip({"op": "gradient", "output_index": [o, tau],
                                 **self._request_arrays([instance])})
        if "gradients" not in reply:
            raise ProtocolError("gradient response carries no gradients")
        grads = np.asarray(reply["gradients"], dtype=float)
        expected = (1, self.shape.lookback_features, self.shape.lookback)
        if grads.shape != expected:
            raise ProtocolError(f"gradient returned shape {grads.shape}, expected {expected}")
        return grads[0]
