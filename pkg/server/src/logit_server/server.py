"""The wire protocol endpoint around a loaded model.

Newline-delimited JSON requests over stdio or TCP:

    {"op": "hello"}                                -> {"vocab_size": V, "repr_dim": d}
    {"op": "cond", "id": N, "context": [int, ...]} -> {"id": N, "logprobs": [...]}
    {"op": "repr", "id": N, "prefix": [int, ...]}  -> {"id": N, "vector": [...]}

Failures answer {"id": N, "error": "..."} and never kill the serving loop;
contexts beyond `max_context` tokens are rejected. One request is in flight per
connection; several connections may be served concurrently, the model is
read-only.
"""

from __future__ import annotations

import dataclasses
import json
import socket
import socketserver
import sys
import threading

import torch

from .model import TinyCausalLM

MAX_CONTEXT = 1024


@dataclasses.dataclass
class ServerConfig:
    checkpoint: str
    mode: str = "stdio"  # stdio | tcp
    host: str = "127.0.0.1"
    port: int = 0
    deterministic_eval: bool = True
    seed: int = 0
    max_context: int = MAX_CONTEXT


def handle_request(model: TinyCausalLM, request: dict, max_context: int = MAX_CONTEXT) -> dict:
    rid = request.get("id", 0)
    op = request.get("op")
    try:
        if op == "hello":
            return {"vocab_size": model.cfg.vocab_size, "repr_dim": model.cfg.d_model}
        if op == "cond":
            context = request["context"]
            if len(context) > max_context:
                return {"id": rid, "error": f"context length {len(context)} > {max_context}"}
            return {"id": rid, "logprobs": [float(x) for x in model.next_logprobs(context)]}
        if op == "repr":
            prefix = request["prefix"]
            if len(prefix) > max_context:
                return {"id": rid, "error": f"prefix length {len(prefix)} > {max_context}"}
            return {"id": rid, "vector": [float(x) for x in model.representation(prefix)]}
        return {"id": rid, "error": f"unknown op {op!r}"}
    except Exception as e:  # noqa: BLE001 - report the failure, keep serving
        return {"id": rid, "error": f"{type(e).__name__}: {e}"}


def serve_stream(model: TinyCausalLM, reader, writer, max_context: int = MAX_CONTEXT) -> None:
    lock = threading.Lock()
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
            with lock:
                response = handle_request(model, request, max_context)
        payload = json.dumps(response) + "\n"
        writer.write(payload.encode() if isinstance(raw, bytes) else payload)
        writer.flush()


def serve(config: ServerConfig) -> None:
    from .model import load_checkpoint

    model = load_checkpoint(config.checkpoint)
    if config.deterministic_eval:
        torch.manual_seed(config.seed)
        torch.use_deterministic_algorithms(True)
    if config.mode == "stdio":
        serve_stream(model, sys.stdin.buffer, sys.stdout.buffer, config.max_context)
        return
    if config.mode != "tcp":
        raise ValueError(f"unknown mode {config.mode!r}")

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            serve_stream(model, self.rfile, self.wfile, config.max_context)

    class Server(socketserver.ThreadingTCPServer):
        allow_reuse_address = True
        daemon_threads = True

    with Server((config.host, config.port), Handler) as srv:
        host, port = srv.server_address
        print(f"listening on {host}:{port}", file=sys.stderr, flush=True)
        srv.serve_forever()
