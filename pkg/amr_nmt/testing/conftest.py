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


import numpy as np
import pytest

from amr_nmt.nmt import config as config_lib
from amr_nmt.testing import synthetic


def pytest_configure(config):
    config.addinivalue_line(
        'markers', 'slow: trains models; bound by a wall-clock budget.')


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return config_lib.DEFAULTS._replace(
        mode=config_lib.DUAL2SEQ, embed_dim=6, hidden_dim=5, graph_dim=4,
        transition_steps=2, dropout=0.0, batch_size=4, epochs=2, seed=7,
        max_len=50, beam_size=3, max_decode_len=8, clip_norm=5.0)


@pytest.fixture
def toy_corpus():
    """Twelve word-level synthetic pairs with parsed AMRs."""
    return synthetic.toy_examples(12, seed=3)


@pytest.fixture
def sample_corpus_dir(tmp_path):
    """A 500-pair training and 50-pair dev corpus written to disk."""
    synthetic.write_corpus(str(tmp_path), 500, seed=11, prefix='train')
    synthetic.write_corpus(str(tmp_path), 50, seed=12, prefix='dev')
    return tmp_path
