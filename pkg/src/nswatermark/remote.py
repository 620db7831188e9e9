"""Client for a logit server speaking line-delimited JSON over TCP.

Request line:  {"prompt": [ids], "prefix": [ids]}
Response line: {"logits": [|V| floats]}  or  {"error": "msg"}
"""

from __future__ import annotations

import json
import math
import socket
from collections.abc import Sequence

import numpy as np


class RemoteLogitError(RuntimeError):
    pass


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise ValueError(f"endpoint must look like host:port, got {endpoint!r}")
    return host, int(port)


class RemoteLogitClient:
    """One persistent connection, one request in flight at a time."""

    context_size = None

    def __init__(self, endpoint: str, vocab_size: int, timeout_ms: int = 10_000):
        self.endpoint = endpoint
        self.vocab_size = vocab_size
        self.timeout_ms = timeout_ms
        self._sock: socket.socket | None = None
        self._reader = None

    def _connect(self) -> None:
        host, port = parse_endpoint(self.endpoint)
        try:
            self._sock = socket.create_connection((host, port), timeout=self.timeout_ms / 1000)
        except OSError as exc:
            raise RemoteLogitError(f"{self.endpoint}: cannot connect: {exc}") from exc
        self._reader = self._sock.makefile("r", encoding="utf-8", newline="\n")

    def close(self) -> None:
        if self._reader is not None:
            self._reader.close()
        if self._sock is not None:
            self._sock.close()
        self._sock = self._reader = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_sock"] = state["_reader"] = None
        return state

    def logits(self, prompt: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        if self._sock is None:
            self._connect()
        request = json.dumps({"prompt": [int(i) for i in prompt], "prefix": [int(i) for i in prefix]})
        try:
            self._sock.sendall(request.encode("utf-8") + b"\n")
            line = self._reader.readline()
        except OSError as exc:
            self.close()
            raise RemoteLogitError(f"{self.endpoint}: {exc}") from exc
        if not line:
            self.close()
            raise RemoteLogitError(f"{self.endpoint}: connection closed")
        return self._parse(line)

    def _parse(self, line: str) -> np.ndarray:
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RemoteLogitError(f"malformed response: {exc}") from exc
        if not isinstance(msg, dict):
            raise RemoteLogitError("malformed response: not a JSON object")
        if "error" in msg:
            raise RemoteLogitError(f"server error: {msg['error']}")
        values = msg.get("logits")
        if not isinstance(values, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in values
        ):
            raise RemoteLogitError("malformed response: 'logits' must be a list of numbers")
        if len(values) != self.vocab_size:
            raise RemoteLogitError(f"wrong logit length: got {len(values)}, expected {self.vocab_size}")
        out = np.asarray(values, dtype=np.float64)
        if not all(math.isfinite(x) or x == -math.inf for x in values):
            raise RemoteLogitError("malformed response: non-finite logit")
        return out
