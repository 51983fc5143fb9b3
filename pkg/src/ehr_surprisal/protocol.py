"""Wire protocol for external next-token probability providers.

Newline-delimited JSON over a byte stream (TCP socket, stdio pipe of a spawned
server process, or an in-process socketpair). Requests:

    {"op": "hello"}                                -> {"vocab_size": V, "repr_dim": d}
    {"op": "cond", "id": N, "context": [int, ...]} -> {"id": N, "logprobs": [float x V]}
    {"op": "repr", "id": N, "prefix": [int, ...]}  -> {"id": N, "vector": [float x d]}

Log-probabilities are natural logs and must normalize within 1e-6. Failures come
back as {"id": N, "error": "..."}.
"""

from __future__ import annotations

import json
import shlex
import socket
import subprocess
import threading
from typing import Sequence

import numpy as np

from .seqmodel import CONTEXT_WINDOW, SequenceModel

MAX_CONTEXT = 1024
NORM_TOL = 1e-6


class ProtocolError(RuntimeError):
    """protocol violation; carries the offending request id where known"""

    def __init__(self, message: str, request_id: int | None = None):
        super().__init__(f"request {request_id}: {message}" if request_id is not None else message)
        self.request_id = request_id


class RemoteModel(SequenceModel):
    """
    client for a protocol endpoint; caches conditional and representation
    responses per context within its lifetime (one scoring run)
    """

    def __init__(self, reader, writer, *, owns_process: subprocess.Popen | None = None):
        self._reader = reader
        self._writer = writer
        self._proc = owns_process
        self._lock = threading.Lock()
        self._next_id = 0
        self._cond_cache: dict[tuple[int, ...], np.ndarray] = {}
        self._repr_cache: dict[tuple[int, ...], np.ndarray] = {}
        hello = self._roundtrip({"op": "hello"}, expect_id=None)
        try:
            self.vocab_size = int(hello["vocab_size"])
            self.repr_dim = int(hello["repr_dim"])
        except (KeyError, TypeError, ValueError):
            raise ProtocolError(f"bad handshake response: {hello}") from None

    def _roundtrip(self, request: dict, expect_id: int | None) -> dict:
        with self._lock:
            line = json.dumps(request) + "\n"
            self._writer.write(line.encode() if "b" in getattr(self._writer, "mode", "b") else line)
            self._writer.flush()
            raw = self._reader.readline()
        if not raw:
            raise ProtocolError("connection closed by server", expect_id)
        try:
            response = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ProtocolError(f"unparseable response: {e}", expect_id) from None
        if "error" in response:
            raise ProtocolError(f"server error: {response['error']}", response.get("id"))
        if expect_id is not None and response.get("id") != expect_id:
            raise ProtocolError(f"response id {response.get('id')} != request id", expect_id)
        return response

    def _request(self, op: str, key: str, payload: Sequence[int]) -> dict:
        self._next_id += 1
        rid = self._next_id
        return self._roundtrip({"op": op, "id": rid, key: [int(x) for x in payload]}, rid), rid

    def log_conditional(self, context: Sequence[int]) -> np.ndarray:
        ctx = tuple(int(x) for x in context[-CONTEXT_WINDOW:])
        hit = self._cond_cache.get(ctx)
        if hit is not None:
            return hit
        response, rid = self._request("cond", "context", ctx)
        logprobs = np.asarray(response.get("logprobs", ()), dtype=float)
        if logprobs.shape != (self.vocab_size,):
            raise ProtocolError(
                f"logprobs length {logprobs.shape} != vocab_size {self.vocab_size}", rid
            )
        total = np.exp(logprobs).sum()
        if not np.isfinite(total) or abs(total - 1.0) > NORM_TOL:
            raise ProtocolError(f"probabilities sum to {total!r}, not 1 within {NORM_TOL}", rid)
        self._cond_cache[ctx] = logprobs
        return logprobs

    def representation(self, prefix: Sequence[int]) -> np.ndarray:
        key = tuple(int(x) for x in prefix[-MAX_CONTEXT:])
        hit = self._repr_cache.get(key)
        if hit is not None:
            return hit
        response, rid = self._request("repr", "prefix", key)
        vector = np.asarray(response.get("vector", ()), dtype=float)
        if vector.shape != (self.repr_dim,):
            raise ProtocolError(f"vector length {vector.shape} != repr_dim {self.repr_dim}", rid)
        self._repr_cache[key] = vector
        return vector

    def close(self) -> None:
        for stream in (self._writer, self._reader):
            try:
                stream.close()
            except Exception:
                pass
        if self._proc is not None:
            self._proc.terminate()
            self._proc.wait(timeout=10)


def external_model(endpoint) -> RemoteModel:
    """
    connect to an external provider; endpoint forms:
      - "host:port" or "tcp://host:port"  TCP
      - "stdio:<command line>"            spawn the command, speak over its stdio
      - (reader, writer)                  already-open binary file pair
    """
    if isinstance(endpoint, tuple):
        return RemoteModel(endpoint[0], endpoint[1])
    if not isinstance(endpoint, str):
        raise ValueError(f"bad endpoint descriptor: {endpoint!r}")
    if endpoint.startswith("stdio:"):
        proc = subprocess.Popen(
            shlex.split(endpoint[len("stdio:") :]),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
        )
        return RemoteModel(proc.stdout, proc.stdin, owns_process=proc)
    addr = endpoint[len("tcp://") :] if endpoint.startswith("tcp://") else endpoint
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bad endpoint descriptor: {endpoint!r}")
    sock = socket.create_connection((host, int(port)))
    return RemoteModel(sock.makefile("rb"), sock.makefile("wb"))


# ---------------------------------------------------------------------------
# serving (used by the in-process mock; external servers implement the same loop)


def handle_request(model: SequenceModel, request: dict, *, max_context: int = MAX_CONTEXT) -> dict:
    """compute the response object for one parsed request"""
    rid = request.get("id", 0)
    op = request.get("op")
    try:
        if op == "hello":
            return {"vocab_size": model.vocab_size, "repr_dim": model.repr_dim}
        if op == "cond":
            ctx = request["context"]
            if len(ctx) > max_context:
                return {"id": rid, "error": f"context length {len(ctx)} > {max_context}"}
            return {"id": rid, "logprobs": [float(x) for x in model.log_conditional(ctx)]}
        if op == "repr":
            prefix = request["prefix"]
            if len(prefix) > max_context:
                return {"id": rid, "error": f"prefix length {len(prefix)} > {max_context}"}
            return {"id": rid, "vector": [float(x) for x in model.representation(prefix)]}
        return {"id": rid, "error": f"unknown op {op!r}"}
    except Exception as e:  # noqa: BLE001 - report, do not kill the serving loop
        return {"id": rid, "error": f"{type(e).__name__}: {e}"}


def serve_model(model: SequenceModel, reader, writer) -> None:
    """answer requests line by line until EOF"""
    while True:
        raw = reader.readline()
        if not raw:
            return
        if not raw.strip():
            continue
        try:
            request = json.loads(raw)
        except json.JSONDecodeError as e:
            response = {"id": 0, "error": f"unparseable request: {e}"}
        else:
            response = handle_request(model, request)
        line = json.dumps(response) + "\n"
        writer.write(line.encode() if "b" in getattr(writer, "mode", "b") else line)
        writer.flush()


def inprocess_endpoint(model: SequenceModel) -> RemoteModel:
    """spin up a serving thread over a socketpair and return a connected client"""
    server_sock, client_sock = socket.socketpair()
    r, w = server_sock.makefile("rb"), server_sock.makefile("wb")
    thread = threading.Thread(target=serve_model, args=(model, r, w), daemon=True)
    thread.start()
    return RemoteModel(client_sock.makefile("rb"), client_sock.makefile("wb"))
