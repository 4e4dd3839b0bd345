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


"""Checkpoint files: self-describing JSON with a checksum.

A checkpoint file holds ``{"body": ..., "sha256": ...}`` where the checksum
covers the body serialized with sorted keys. Arrays are stored as
``{"name", "shape", "data"}`` records with row-major data at full float
precision, so a save/load round trip is bitwise exact.
"""

import collections
import hashlib
import io
import json
import logging
import os

import numpy as np
from packaging import version

from amr_nmt.nmt import numerics as nx
from amr_nmt.nmt.exceptions import NmtError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = '1.0'

_CORRUPT_MSG = 'Checkpoint {} is corrupt: {}'
_VERSION_MSG = ('Checkpoint {} has schema version {}, which this version '
                '(schema {}) cannot read.')
_MODE_MSG = 'Checkpoint was trained in mode {} but mode {} was requested.'
_FINGERPRINT_MSG = ('The {} vocabulary differs from the one the checkpoint '
                    'was trained with.')


class CheckpointError(NmtError):
    """Base class for checkpoint problems."""


class CheckpointVersionError(CheckpointError):
    """Raised for an incompatible schema version."""


class CorruptCheckpointError(CheckpointError):
    """Raised for unreadable, truncated or tampered files."""


class ModeMismatchError(CheckpointError):
    """Raised when a checkpoint is used with a different mode."""


Checkpoint = collections.namedtuple('Checkpoint', [
    'mode', 'hyperparameters', 'vocab_fingerprints', 'params', 'optimizer',
    'best_dev_loss', 'epoch', 'schema_version',
])
Checkpoint.__new__.__defaults__ = (SCHEMA_VERSION,)
Checkpoint.__doc__ = """Everything needed to resume training or to decode.

``params`` maps names to numpy arrays. ``optimizer`` is a dict with the
scalar Adam settings and step count plus ``m`` and ``v`` array maps.
``epoch`` counts completed epochs.
"""


def _encode_arrays(arrays):
    return [{'name': name, 'shape': list(np.shape(value)),
             'data': np.asarray(value, dtype=np.float64).ravel().tolist()}
            for name, value in arrays.items()]


def _decode_arrays(records):
    arrays = collections.OrderedDict()
    for record in records:
        arrays[record['name']] = np.array(
            record['data'], dtype=np.float64).reshape(record['shape'])
    return arrays


def _digest(body):
    text = json.dumps(body, sort_keys=True)
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def save_checkpoint(path, checkpoint):
    """Writes ``checkpoint`` atomically (temporary file, then rename)."""
    body = checkpoint._asdict()
    body['params'] = _encode_arrays(checkpoint.params)
    if checkpoint.optimizer is not None:
        optimizer = dict(checkpoint.optimizer)
        optimizer['m'] = _encode_arrays(optimizer['m'])
        optimizer['v'] = _encode_arrays(optimizer['v'])
        body['optimizer'] = optimizer
    contents = json.dumps({'body': body, 'sha256': _digest(body)},
                          sort_keys=True)

    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        os.makedirs(directory)
    temporary = path + '.tmp'
    with io.open(temporary, 'w', encoding='utf-8') as fh:
        fh.write(contents)
    os.replace(temporary, path)
    logger.debug('Saved checkpoint %s (epoch %d).', path, checkpoint.epoch)


def load_checkpoint(path, mode=None):
    """Reads and verifies a checkpoint.

    Args:
        path (str): The checkpoint file.
        mode (Optional[str]): When given, the mode the caller expects.

    Returns:
        Checkpoint: With numpy arrays for parameters and moments.

    Raises:
        CorruptCheckpointError: For invalid JSON or a checksum mismatch.
        CheckpointVersionError: For an unreadable schema major version.
        ModeMismatchError: If ``mode`` differs from the checkpoint's.
    """
    with io.open(path, 'r', encoding='utf-8') as fh:
        contents = fh.read()
    try:
        document = json.loads(contents)
        body = document['body']
        expected = document['sha256']
    except (ValueError, KeyError, TypeError) as e:
        raise CorruptCheckpointError(_CORRUPT_MSG.format(path, e))
    if _digest(body) != expected:
        raise CorruptCheckpointError(
            _CORRUPT_MSG.format(path, 'checksum mismatch'))

    try:
        found = version.parse(body['schema_version'])
    except (KeyError, version.InvalidVersion) as e:
        raise CorruptCheckpointError(_CORRUPT_MSG.format(path, e))
    if found.major != version.parse(SCHEMA_VERSION).major:
        raise CheckpointVersionError(_VERSION_MSG.format(
            path, body['schema_version'], SCHEMA_VERSION))

    try:
        optimizer = body['optimizer']
        if optimizer is not None:
            optimizer = dict(optimizer)
            optimizer['m'] = _decode_arrays(optimizer['m'])
            optimizer['v'] = _decode_arrays(optimizer['v'])
        checkpoint = Checkpoint(
            mode=body['mode'],
            hyperparameters=body['hyperparameters'],
            vocab_fingerprints=body['vocab_fingerprints'],
            params=_decode_arrays(body['params']),
            optimizer=optimizer,
            best_dev_loss=body['best_dev_loss'],
            epoch=body['epoch'],
            schema_version=body['schema_version'])
    except (KeyError, TypeError, ValueError) as e:
        raise CorruptCheckpointError(_CORRUPT_MSG.format(path, e))
    if mode is not None:
        check_mode(checkpoint, mode)
    return checkpoint


def check_mode(checkpoint, mode):
    if checkpoint.mode != mode:
        raise ModeMismatchError(_MODE_MSG.format(checkpoint.mode, mode))


def fingerprints(vocabs):
    return dict((name, vocab.fingerprint)
                for name, vocab in vocabs._asdict().items()
                if vocab is not None)


def check_fingerprints(checkpoint, vocabs):
    """Verifies that ``vocabs`` are the ones the checkpoint was trained on.

    Raises:
        CheckpointError: Naming the first vocabulary that differs.
    """
    current = fingerprints(vocabs)
    for name, digest in sorted(checkpoint.vocab_fingerprints.items()):
        if current.get(name) != digest:
            raise CheckpointError(_FINGERPRINT_MSG.format(name))


def to_tensors(arrays):
    """Wraps loaded arrays as trainable tensors, keeping the name order."""
    return collections.OrderedDict(
        (name, nx.parameter(value)) for name, value in arrays.items())
