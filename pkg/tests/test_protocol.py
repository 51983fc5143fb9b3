import numpy as np
import pytest

from ehr_surprisal.protocol import (
    ProtocolError,
    handle_request,
    inprocess_endpoint,
)
from ehr_surprisal.seqmodel import SequenceModel, TableModel, train_backoff


class CountingModel(SequenceModel):
    """wraps a model and counts calls that actually reach it"""

    def __init__(self, inner):
        self.inner = inner
        self.vocab_size = inner.vocab_size
        self.repr_dim = inner.repr_dim
        self.cond_calls = 0
        self.repr_calls = 0

    def log_conditional(self, context):
        self.cond_calls += 1
        return self.inner.log_conditional(context)

    def representation(self, prefix):
        self.repr_calls += 1
        return self.inner.representation(prefix)


class BadModel(SequenceModel):
    """violates the normalization contract"""

    vocab_size = 4
    repr_dim = 4

    def log_conditional(self, context):
        return np.log(np.full(4, 0.9 / 4))  # sums to 0.9

    def representation(self, prefix):
        return np.zeros(4)


def test_handshake_reports_dimensions():
    model = train_backoff([[0, 1, 2, 1, 0]], vocab_size=5)
    remote = inprocess_endpoint(model)
    assert remote.vocab_size == 5
    assert remote.repr_dim == 5
    remote.close()


def test_remote_scoring_equals_local():
    rng = np.random.default_rng(0)
    model = train_backoff([list(rng.integers(0, 6, size=80))], vocab_size=6)
    remote = inprocess_endpoint(model)
    for _ in range(20):
        ctx = list(rng.integers(0, 6, size=rng.integers(0, 8)))
        np.testing.assert_array_equal(remote.log_conditional(ctx), model.log_conditional(ctx))
        np.testing.assert_array_equal(remote.representation(ctx or [0]), model.representation(ctx or [0]))
    remote.close()


def test_repeated_context_hits_cache_once():
    counting = CountingModel(TableModel(4))
    remote = inprocess_endpoint(counting)
    for _ in range(5):
        remote.log_conditional([1, 2, 3])
        remote.representation([1, 2])
    assert counting.cond_calls == 1
    assert counting.repr_calls == 1
    remote.close()


def test_unnormalized_server_distribution_raises_with_request_id():
    remote = inprocess_endpoint(BadModel())
    with pytest.raises(ProtocolError, match="sum"):
        remote.log_conditional([0])
    remote.close()


def test_oversize_context_is_a_server_error():
    # the client window never produces one, but raw requests must be rejected
    response = handle_request(TableModel(4), {"op": "cond", "id": 7, "context": [0] * 2000})
    assert response["id"] == 7 and "1024" in response["error"]


def test_oversize_repr_prefix_rejected_serverside():
    response = handle_request(TableModel(4), {"op": "repr", "id": 9, "prefix": [0] * 1500})
    assert response["id"] == 9 and "error" in response


def test_unknown_op_and_malformed_request():
    assert "error" in handle_request(TableModel(4), {"op": "generate", "id": 3})
    assert "error" in handle_request(TableModel(4), {"op": "cond", "id": 4})  # no context


def test_client_truncates_context_to_window():
    counting = CountingModel(TableModel(4))
    remote = inprocess_endpoint(counting)
    out = remote.log_conditional(list(np.zeros(5000, dtype=int)))
    assert out.shape == (4,)
    remote.close()
