# Copyright 2018 The amr-nmt Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


"""
Unit tests for numerics.py
"""

import numpy as np
import pytest

from amr_nmt.nmt import numerics as nx
from amr_nmt.testing import gradcheck


def _weighted_sum(out, seed=99):
    weights = np.random.default_rng(seed).normal(size=out.shape)
    return nx.reduce_sum(out * nx.Tensor(weights))


def _params(rng, **shapes):
    return dict((name, nx.parameter(rng.normal(size=shape)))
                for name, shape in shapes.items())


OPERATIONS = {
    "add_broadcast": (dict(a=(3, 4), b=(4,)),
                      lambda p: p["a"] + p["b"]),
    "subtract": (dict(a=(2, 3), b=(2, 3)),
                 lambda p: p["a"] - p["b"]),
    "multiply_broadcast": (dict(a=(2, 3), b=(2, 1)),
                           lambda p: p["a"] * p["b"]),
    "matmul": (dict(a=(3, 4), b=(4, 2)),
               lambda p: p["a"] @ p["b"]),
    "matmul_batched": (dict(a=(2, 3, 4), b=(4, 5)),
                       lambda p: p["a"] @ p["b"]),
    "sigmoid": (dict(a=(3, 3)), lambda p: nx.sigmoid(p["a"])),
    "tanh": (dict(a=(3, 3)), lambda p: nx.tanh(p["a"])),
    "log": (dict(a=(2, 4)),
            lambda p: nx.log(nx.sigmoid(p["a"]))),
    "softmax_rows": (dict(a=(3, 4)), lambda p: nx.softmax_rows(
        p["a"], np.array([[1, 1, 0, 1], [1, 0, 0, 0], [1, 1, 1, 1]],
                         dtype=bool))),
    "concat": (dict(a=(2, 3), b=(2, 2)),
               lambda p: nx.concat([p["a"], p["b"]], axis=-1)),
    "stack": (dict(a=(2, 3), b=(2, 3)),
              lambda p: nx.stack([p["a"], p["b"]], axis=1)),
    "slice_last": (dict(a=(2, 6)), lambda p: nx.slice_last(p["a"], 2, 5)),
    "reshape": (dict(a=(2, 6)), lambda p: nx.reshape(p["a"], (3, 4))),
    "embedding_lookup": (dict(a=(5, 3)), lambda p: nx.embedding_lookup(
        p["a"], np.array([[0, 2], [2, 4]]))),
    "segment_sum": (dict(a=(4, 3)), lambda p: nx.segment_sum(
        p["a"], [2, 0, 2, 1], 4)),
}


@pytest.mark.parametrize("name", sorted(OPERATIONS))
def test_gradients_match_finite_differences(name, rng):
    shapes, build = OPERATIONS[name]
    params = _params(rng, **shapes)
    checks = gradcheck.check_gradients(
        lambda: _weighted_sum(build(params)), params, samples=50)
    error, worst = gradcheck.max_error(checks)
    assert error <= 1e-4, worst


def test_sigmoid_is_exactly_half_at_zero():
    assert nx.sigmoid(nx.zeros((2, 2))).data.tolist() == [[0.5, 0.5]] * 2


def test_sigmoid_saturates_without_overflow():
    out = nx.sigmoid(nx.Tensor([-1000.0, 1000.0])).data
    assert out.tolist() == [0.0, 1.0]


def test_matmul_rejects_mismatched_shapes():
    with pytest.raises(nx.DimensionError):
        nx.matmul(nx.zeros((2, 3)), nx.zeros((2, 3)))


def test_add_rejects_incompatible_shapes():
    with pytest.raises(nx.DimensionError):
        nx.add(nx.zeros((2, 3)), nx.zeros((4,)))


def test_concat_rejects_mismatched_shapes():
    with pytest.raises(nx.DimensionError):
        nx.concat([nx.zeros((2, 3)), nx.zeros((3, 3))], axis=1)


def test_softmax_rows_masks_exactly(rng):
    mask = np.array([[True, False, True], [False, True, False]])
    out = nx.softmax_rows(nx.Tensor(rng.normal(size=(2, 3))), mask).data
    assert out[0, 1] == 0.0
    assert out[1].tolist() == [0.0, 1.0, 0.0]
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-12)


def test_softmax_rows_rejects_fully_masked_row():
    with pytest.raises(nx.NumericsError):
        nx.softmax_rows(nx.zeros((2, 2)),
                        np.array([[True, False], [False, False]]))


def test_embedding_lookup_rejects_out_of_range_ids():
    with pytest.raises(nx.NumericsError):
        nx.embedding_lookup(nx.zeros((3, 2)), [0, 3])


def test_embedding_gradient_reaches_only_looked_up_rows(rng):
    table = nx.parameter(rng.normal(size=(4, 2)))
    with nx.recording() as record:
        loss = nx.reduce_sum(nx.embedding_lookup(table, [1, 1, 3]))
    grad = record.backward(loss, {"table": table})["table"]
    assert grad.tolist() == [[0, 0], [2, 2], [0, 0], [1, 1]]


def test_log_clamps_at_floor():
    assert nx.log(nx.Tensor([0.0])).item() == pytest.approx(np.log(1e-12))


def test_backward_requires_scalar_loss():
    a = nx.parameter(np.ones(3))
    with nx.recording() as record:
        out = a * 2.0
    with pytest.raises(nx.NumericsError):
        record.backward(out, {"a": a})


def test_unreached_parameters_get_zero_gradients():
    a = nx.parameter(np.ones(2))
    b = nx.parameter(np.ones((2, 2)))
    with nx.recording() as record:
        loss = nx.reduce_sum(a * a)
    grads = record.backward(loss, {"a": a, "b": b})
    assert grads["a"].tolist() == [2.0, 2.0]
    assert not grads["b"].any()


def test_shared_parameter_accumulates_gradients():
    a = nx.parameter(np.array([3.0]))
    with nx.recording() as record:
        loss = nx.reduce_sum(a * a + a)
    assert record.backward(loss, {"a": a})["a"].tolist() == [7.0]


def test_operations_outside_recording_are_untracked():
    a = nx.parameter(np.ones(2))
    out = a * 3.0
    assert out.node_id is None
    assert nx.active_record() is None


def test_recording_restores_previous_record():
    with nx.recording() as outer:
        with nx.recording() as inner:
            assert nx.active_record() is inner
        assert nx.active_record() is outer
    assert nx.active_record() is None


@pytest.mark.parametrize("training,rate", [
    (False, 0.5),
    (True, 0.0),
])
def test_dropout_is_identity_when_inactive(training, rate, rng):
    x = nx.Tensor(np.ones((3, 3)))
    assert nx.dropout(x, rate, rng, training) is x


def test_dropout_scales_kept_units(rng):
    out = nx.dropout(nx.Tensor(np.ones((50, 50))), 0.2, rng).data
    assert np.allclose(out[out > 0], 1.25)
    assert 0.7 < (out > 0).mean() < 0.9


def test_parameter_copies_its_input():
    values = np.zeros(2)
    nx.parameter(values).data[0] = 1.0
    assert values[0] == 0.0
