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


import argparse
import logging
import sys

from . import data
from . import decoder
from . import metrics
from . import training
from .exceptions import NmtError

_LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


def build_parser():
    parser = argparse.ArgumentParser(
        prog='amr-nmt',
        description='AMR-augmented neural machine translation toolkit.')
    parser.add_argument('--verbose', action='store_true',
                        help='Log debug messages.')
    subparsers = parser.add_subparsers(dest='command')
    subparsers.required = True

    data.register_commands(subparsers)
    training.register_commands(subparsers)
    decoder.register_commands(subparsers)
    metrics.register_commands(subparsers)
    return parser


def main(argv=None):
    """Entrypoint for the console script amr-nmt.

    Returns:
        int: 0 on success, 1 for errors reported by the toolkit and 2 for
        command line usage errors.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format=_LOG_FORMAT)
    try:
        args.func(args)
    except (NmtError, OSError) as e:
        sys.stderr.write('amr-nmt: error: {}\n'.format(e))
        return 1
    return 0
