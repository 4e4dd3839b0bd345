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
Unit tests for checkpoint.py
"""

import collections
import json
import os

import numpy as np
import pytest

from amr_nmt.nmt import checkpoint as checkpoint_lib
from amr_nmt.nmt import config as config_lib
from amr_nmt.nmt import data
from amr_nmt.nmt import numerics as nx
from amr_nmt.nmt import training


def _checkpoint(**overrides):
    params = collections.OrderedDict([
        ('enc.embed', np.arange(6, dtype=np.float64).reshape(2, 3) / 7.0),
        ('dec.out.b', np.array([0.1, -0.2, 1e-17])),
    ])
    state = training.adam_init(checkpoint_lib.to_tensors(params), 0.0005)
    values = dict(
        mode=config_lib.DUAL2SEQ,
        hyperparameters=config_lib.DEFAULTS._asdict(),
        vocab_fingerprints={'src': 'abc', 'tgt': 'def', 'graph': '123'},
        params=params,
        optimizer=dict(state._replace(step=3)._asdict()),
        best_dev_loss=2.5,
        epoch=3)
    values.update(overrides)
    return checkpoint_lib.Checkpoint(**values)


def test_round_trip(tmp_path):
    path = str(tmp_path / 'ckpt.json')
    original = _checkpoint()
    checkpoint_lib.save_checkpoint(path, original)
    loaded = checkpoint_lib.load_checkpoint(path)

    assert list(loaded.params) == ['enc.embed', 'dec.out.b']
    for name, value in original.params.items():
        np.testing.assert_array_equal(loaded.params[name], value)
    assert loaded.optimizer['step'] == 3
    np.testing.assert_array_equal(loaded.optimizer['m']['enc.embed'],
                                  np.zeros((2, 3)))
    assert loaded.mode == original.mode
    assert loaded.best_dev_loss == 2.5
    assert loaded.epoch == 3
    assert loaded.schema_version == checkpoint_lib.SCHEMA_VERSION
    assert config_lib.from_dict(loaded.hyperparameters) == config_lib.DEFAULTS
    assert not os.path.exists(path + '.tmp')


def test_restored_optimizer_state_is_usable(tmp_path):
    path = str(tmp_path / 'ckpt.json')
    checkpoint_lib.save_checkpoint(path, _checkpoint())
    loaded = checkpoint_lib.load_checkpoint(path)
    state = training.AdamState(**loaded.optimizer)
    params = checkpoint_lib.to_tensors(loaded.params)
    grads = dict((name, np.ones_like(t.data)) for name, t in params.items())
    assert training.adam_step(params, grads, state).step == 4


def test_truncated_file_is_corrupt(tmp_path):
    path = tmp_path / 'ckpt.json'
    checkpoint_lib.save_checkpoint(str(path), _checkpoint())
    contents = path.read_text(encoding='utf-8')
    path.write_text(contents[:len(contents) // 2], encoding='utf-8')
    with pytest.raises(checkpoint_lib.CorruptCheckpointError):
        checkpoint_lib.load_checkpoint(str(path))


def test_tampered_file_is_corrupt(tmp_path):
    path = tmp_path / 'ckpt.json'
    checkpoint_lib.save_checkpoint(str(path), _checkpoint())
    document = json.loads(path.read_text(encoding='utf-8'))
    document['body']['epoch'] = 4
    path.write_text(json.dumps(document), encoding='utf-8')
    with pytest.raises(checkpoint_lib.CorruptCheckpointError):
        checkpoint_lib.load_checkpoint(str(path))


def test_mode_mismatch(tmp_path):
    path = str(tmp_path / 'ckpt.json')
    checkpoint_lib.save_checkpoint(path, _checkpoint())
    with pytest.raises(checkpoint_lib.ModeMismatchError):
        checkpoint_lib.load_checkpoint(path, mode=config_lib.SEQ2SEQ)


@pytest.mark.parametrize("schema,readable", [
    ("1.0", True),
    ("1.4", True),
    ("2.0", False),
    ("0.9", False),
])
def test_schema_major_version_must_match(tmp_path, schema, readable):
    path = str(tmp_path / 'ckpt.json')
    checkpoint_lib.save_checkpoint(path, _checkpoint(schema_version=schema))
    if readable:
        assert checkpoint_lib.load_checkpoint(path).schema_version == schema
    else:
        with pytest.raises(checkpoint_lib.CheckpointVersionError):
            checkpoint_lib.load_checkpoint(path)


def test_fingerprints_detect_a_different_vocabulary():
    vocabs = data.Vocabularies(data.build_vocab('a b'.split(), 10),
                               data.build_vocab('c'.split(), 10), None)
    saved = _checkpoint(vocab_fingerprints=checkpoint_lib.fingerprints(vocabs))
    checkpoint_lib.check_fingerprints(saved, vocabs)

    changed = vocabs._replace(tgt=data.build_vocab('c d'.split(), 10))
    with pytest.raises(checkpoint_lib.CheckpointError):
        checkpoint_lib.check_fingerprints(saved, changed)


def test_to_tensors_makes_trainable_parameters():
    tensors = checkpoint_lib.to_tensors(_checkpoint().params)
    assert list(tensors) == ['enc.embed', 'dec.out.b']
    assert all(isinstance(t, nx.Tensor) and t.requires_grad
               for t in tensors.values())
