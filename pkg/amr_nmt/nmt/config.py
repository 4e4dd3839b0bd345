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


"""Run configuration: defaults, JSON config files and flag overrides.

The final configuration is determined by layering, from lowest to highest
priority: :data:`DEFAULTS`, the JSON file given with ``--config``, the
``AMRNMT_SEED`` environment variable (seed only, when nothing else set it),
and flags given explicitly on the command line.
"""

import collections
import io
import json
import os

from amr_nmt.nmt.exceptions import NmtError

SEQ2SEQ = 'seq2seq'
DUAL2SEQ = 'dual2seq'
DUAL2SEQ_LINAMR = 'dual2seq-linamr'
DUAL2SEQ_SELF = 'dual2seq-self'
MODES = (SEQ2SEQ, DUAL2SEQ, DUAL2SEQ_LINAMR, DUAL2SEQ_SELF)
AMR_MODES = (DUAL2SEQ, DUAL2SEQ_LINAMR)
GRAPH_MODES = (DUAL2SEQ, DUAL2SEQ_SELF)
CANDIDATES = ('sigmoid', 'tanh')
SEED_ENVIRONMENT_VARIABLE = 'AMRNMT_SEED'

_UNKNOWN_KEY_MSG = 'Unknown configuration key {!r} in {}.'
_BAD_VALUE_MSG = 'Invalid configuration value {}={!r}: {}.'
_MISSING_FILE_MSG = 'Mode {} requires --{} but it was not given.'
_UNUSED_FILE_MSG = 'Mode {} does not consume an AMR file, but --{} was given.'
_NOT_FOUND_MSG = 'File for --{} not found: {}'


class ConfigError(NmtError):
    """Raised for invalid or inconsistent run configurations."""


RunConfig = collections.namedtuple('RunConfig', [
    'mode',
    'embed_dim', 'hidden_dim', 'graph_dim',
    'transition_steps', 'max_neighbors', 'grn_candidate',
    'feed_graph_context',
    'learning_rate', 'batch_size', 'dropout', 'epochs', 'clip_norm',
    'seed', 'max_len', 'bucketing',
    'beam_size', 'max_decode_len', 'length_normalize',
    'bpe_merges', 'src_vocab_size', 'tgt_vocab_size', 'graph_vocab_size',
    'train_src', 'train_tgt', 'train_amr',
    'dev_src', 'dev_tgt', 'dev_amr',
    'vocab_dir', 'output_dir',
])

DEFAULTS = RunConfig(
    mode=DUAL2SEQ,
    embed_dim=500, hidden_dim=500, graph_dim=500,
    transition_steps=10, max_neighbors=6, grn_candidate='sigmoid',
    feed_graph_context=True,
    learning_rate=0.0005, batch_size=128, dropout=0.2, epochs=30,
    clip_norm=5.0,
    seed=1, max_len=50, bucketing=True,
    beam_size=5, max_decode_len=100, length_normalize=True,
    bpe_merges=8000, src_vocab_size=50000, tgt_vocab_size=50000,
    graph_vocab_size=40000,
    train_src=None, train_tgt=None, train_amr=None,
    dev_src=None, dev_tgt=None, dev_amr=None,
    vocab_dir=None, output_dir=None,
)

_TYPES = {
    'mode': str, 'grn_candidate': str,
    'embed_dim': int, 'hidden_dim': int, 'graph_dim': int,
    'transition_steps': int, 'max_neighbors': int, 'batch_size': int,
    'epochs': int, 'seed': int, 'max_len': int, 'beam_size': int,
    'max_decode_len': int, 'bpe_merges': int, 'src_vocab_size': int,
    'tgt_vocab_size': int, 'graph_vocab_size': int,
    'learning_rate': float, 'dropout': float, 'clip_norm': float,
    'feed_graph_context': bool, 'bucketing': bool, 'length_normalize': bool,
}


def _normalize_key(key):
    return key.lstrip('-').replace('-', '_')


def _coerce(key, value):
    kind = _TYPES.get(key)
    if value is None or kind is None:
        return value
    if kind is bool:
        if isinstance(value, str):
            lowered = value.lower()
            if lowered not in ('true', 'false', '1', '0', 'yes', 'no'):
                raise ConfigError(_BAD_VALUE_MSG.format(key, value,
                                                        'expected a boolean'))
            return lowered in ('true', '1', 'yes')
        return bool(value)
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(_BAD_VALUE_MSG.format(
            key, value, 'expected {}'.format(kind.__name__)))


def read_config_file(filename):
    """Reads a flat JSON object of configuration values.

    Args:
        filename (str): Path of the JSON file. Keys may use dashes (flag
            spelling) or underscores.

    Returns:
        dict: Values keyed by :class:`RunConfig` field names.

    Raises:
        ConfigError: If the file is not a JSON object or has unknown keys.
    """
    try:
        with io.open(filename, 'r', encoding='utf-8') as fh:
            contents = json.load(fh)
    except ValueError as e:
        raise ConfigError('Config file {} is not valid JSON: {}'.format(
            filename, e))
    if not isinstance(contents, dict):
        raise ConfigError('Config file {} must hold a JSON object.'.format(
            filename))
    values = {}
    for key, value in contents.items():
        field = _normalize_key(key)
        if field not in RunConfig._fields:
            raise ConfigError(_UNKNOWN_KEY_MSG.format(key, filename))
        values[field] = _coerce(field, value)
    return values


def determine_final_config(file_values=None, overrides=None, environ=None):
    """Combines the defaults with a config file and command line flags.

    Args:
        file_values (dict): Values read by :func:`read_config_file`.
        overrides (dict): Flags given explicitly; ``None`` values are
            treated as "not given".
        environ (Mapping[str, str]): Environment, ``os.environ`` by default.

    Returns:
        RunConfig: The final configuration.
    """
    if environ is None:
        environ = os.environ
    config = DEFAULTS
    file_values = file_values or {}
    overrides = dict((k, v) for k, v in (overrides or {}).items()
                     if v is not None and k in RunConfig._fields)

    for field in config._fields:
        if field in file_values:
            config = config._replace(**{field: file_values[field]})

    seed = environ.get(SEED_ENVIRONMENT_VARIABLE)
    if seed and 'seed' not in file_values and 'seed' not in overrides:
        config = config._replace(seed=_coerce('seed', seed))

    for field, value in overrides.items():
        config = config._replace(**{field: _coerce(field, value)})
    return config


def validate(config, require_files=()):
    """Checks the invariants of a configuration.

    Args:
        config (RunConfig): The configuration.
        require_files (Sequence[str]): Path fields that must be set for the
            command at hand. AMR path fields in this list are only required
            in modes that read AMRs, and rejected in the others.

    Raises:
        ConfigError: Naming the first offending key.
    """
    if config.mode not in MODES:
        raise ConfigError(_BAD_VALUE_MSG.format(
            'mode', config.mode, 'expected one of ' + ', '.join(MODES)))
    if config.grn_candidate not in CANDIDATES:
        raise ConfigError(_BAD_VALUE_MSG.format(
            'grn_candidate', config.grn_candidate,
            'expected sigmoid or tanh'))
    for field in ('embed_dim', 'hidden_dim', 'graph_dim', 'transition_steps',
                  'max_neighbors', 'batch_size', 'beam_size',
                  'max_decode_len'):
        if getattr(config, field) < 1:
            raise ConfigError(_BAD_VALUE_MSG.format(
                field, getattr(config, field), 'must be at least 1'))
    if config.epochs < 0:
        raise ConfigError(_BAD_VALUE_MSG.format(
            'epochs', config.epochs, 'must not be negative'))
    if not 0.0 <= config.dropout < 1.0:
        raise ConfigError(_BAD_VALUE_MSG.format(
            'dropout', config.dropout, 'must lie in [0, 1)'))
    if config.learning_rate <= 0.0:
        raise ConfigError(_BAD_VALUE_MSG.format(
            'learning_rate', config.learning_rate, 'must be positive'))

    for field in require_files:
        flag = field.replace('_', '-')
        value = getattr(config, field)
        if field.endswith('_amr'):
            if config.mode not in AMR_MODES:
                if value:
                    raise ConfigError(_UNUSED_FILE_MSG.format(
                        config.mode, flag))
                continue
        if not value:
            raise ConfigError(_MISSING_FILE_MSG.format(config.mode, flag))
        if field.endswith('_dir'):
            continue
        if not os.path.exists(value):
            raise ConfigError(_NOT_FOUND_MSG.format(flag, value))


def to_json(config):
    return json.dumps(config._asdict(), indent=2, sort_keys=True)


def from_dict(values):
    """Rebuilds a :class:`RunConfig` saved with ``_asdict()``."""
    known = dict((k, v) for k, v in values.items() if k in RunConfig._fields)
    return DEFAULTS._replace(**known)


def add_arguments(parser, fields):
    """Registers ``--flag`` options for the given :class:`RunConfig` fields.

    Every flag defaults to ``None`` so that only values given on the
    command line override the config file. Boolean fields also get a
    ``--no-<field>`` switch.
    """
    for field in fields:
        flag = '--' + field.replace('_', '-')
        kind = _TYPES.get(field, str)
        if field == 'mode':
            parser.add_argument(flag, choices=MODES, default=None)
        elif field == 'grn_candidate':
            parser.add_argument(flag, choices=CANDIDATES, default=None)
        elif kind is bool:
            parser.add_argument(flag, choices=('true', 'false'), default=None)
            parser.add_argument(
                '--no-' + field.replace('_', '-'), dest=field,
                action='store_const', const=False, default=None,
                help='Same as {} false.'.format(flag))
        else:
            parser.add_argument(flag, type=kind, default=None)
    parser.add_argument(
        '--config', help='JSON file with flat keys matching flag names.')
    parser.add_argument(
        '--show-config', action='store_true',
        help='Print the final configuration and exit.')


def from_args(args):
    """Builds the final configuration from parsed command line arguments."""
    file_values = read_config_file(args.config) if args.config else {}
    overrides = dict((k, v) for k, v in vars(args).items()
                     if k in RunConfig._fields)
    return determine_final_config(file_values, overrides)
