import json
import re
import socket
import subprocess
import sys

import numpy as np
import pytest
import torch

from logit_server.model import ModelConfig, TinyCausalLM
from logit_server.server import handle_request, serve_stream


@pytest.fixture(scope="module")
def model():
    torch.manual_seed(2)
    return TinyCausalLM(ModelConfig(vocab_size=12, d_model=16, n_heads=2, n_layers=1, d_ff=32, max_len=64))


def test_hello_reports_dimensions(model):
    assert handle_request(model, {"op": "hello"}) == {"vocab_size": 12, "repr_dim": 16}


def test_cond_normalized_and_id_echoed(model):
    resp = handle_request(model, {"op": "cond", "id": 7, "context": [1, 2]})
    assert resp["id"] == 7
    assert abs(np.exp(resp["logprobs"]).sum() - 1.0) < 1e-6
    assert len(resp["logprobs"]) == 12


def test_cond_empty_context_is_unconditional(model):
    resp = handle_request(model, {"op": "cond", "id": 1, "context": []})
    assert np.allclose(resp["logprobs"], model.next_logprobs([]))


def test_repr_vector(model):
    resp = handle_request(model, {"op": "repr", "id": 2, "prefix": [3]})
    assert len(resp["vector"]) == 16


def test_oversize_and_malformed(model):
    resp = handle_request(model, {"op": "cond", "id": 9, "context": [0] * 70}, max_context=64)
    assert resp["id"] == 9 and "error" in resp
    assert "error" in handle_request(model, {"op": "sample", "id": 3})
    assert "error" in handle_request(model, {"op": "cond", "id": 4})  # missing context


def test_serve_stream_roundtrip(model, tmp_path):
    import io

    requests = [
        {"op": "hello"},
        {"op": "cond", "id": 1, "context": [1, 2, 3]},
        "not json at all",
        {"op": "repr", "id": 2, "prefix": [1]},
    ]
    blob = "".join(
        (r if isinstance(r, str) else json.dumps(r)) + "\n" for r in requests
    ).encode()
    out = io.BytesIO()
    serve_stream(model, io.BytesIO(blob), out, max_context=64)
    lines = [json.loads(x) for x in out.getvalue().splitlines()]
    assert lines[0]["vocab_size"] == 12
    assert lines[1]["id"] == 1 and len(lines[1]["logprobs"]) == 12
    assert lines[2]["id"] == 0 and "unparseable" in lines[2]["error"]
    assert lines[3]["id"] == 2


def test_tcp_mode_end_to_end(trained):
    _model, _history, ckpt, _held = trained
    proc = subprocess.Popen(
        [sys.executable, "-m", "logit_server", "serve", "--checkpoint", str(ckpt),
         "--tcp", "127.0.0.1:0"],
        stderr=subprocess.PIPE,
    )
    try:
        banner = proc.stderr.readline().decode()
        match = re.search(r"listening on .*:(\d+)", banner)
        assert match, banner
        port = int(match.group(1))
        with socket.create_connection(("127.0.0.1", port), timeout=10) as sock:
            fh = sock.makefile("rwb")
            fh.write(b'{"op": "hello"}\n')
            fh.flush()
            hello = json.loads(fh.readline())
            assert hello == {"vocab_size": 208, "repr_dim": 64}
            fh.write(json.dumps({"op": "cond", "id": 5, "context": [10, 16]}).encode() + b"\n")
            fh.flush()
            resp = json.loads(fh.readline())
            assert resp["id"] == 5 and len(resp["logprobs"]) == 208
    finally:
        proc.terminate()
        proc.wait(timeout=10)
