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


"""Corpus ingestion: BPE, vocabularies, length filtering and batching.

Inputs are pre-tokenized, one sentence per line, tokens separated by single
spaces. Byte-pair encoding splits words into subword units; every unit but
the last of a word carries the ``@@`` continuation suffix so that
:func:`strip_bpe` recovers the original text.
"""

import collections
import hashlib
import io
import itertools
import logging
import os

import numpy as np

from amr_nmt.nmt import amr
from amr_nmt.nmt import config as config_lib
from amr_nmt.nmt.exceptions import NmtError

logger = logging.getLogger(__name__)

PAD, UNK, BOS, EOS = '<pad>', '<unk>', '<s>', '</s>'
SPECIALS = (PAD, UNK, BOS, EOS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = range(4)
CONTINUATION = '@@'

MERGES_FILE = 'merges.txt'
SRC_VOCAB_FILE = 'src.vocab'
TGT_VOCAB_FILE = 'tgt.vocab'
GRAPH_VOCAB_FILE = 'graph.vocab'

_MISALIGNED_MSG = '{} has {} entries but {} has {}.'
_VOCAB_SIZE_MSG = ('Vocabulary size must exceed {} to hold the specials, '
                  'got {}.')
_BAD_MERGE_MSG = '{}:{}: expected two space-separated symbols, got {!r}.'
_ID_RANGE_MSG = 'Id {} is outside the vocabulary of size {}.'
_DUPLICATE_MSG = 'Vocabulary file lists {!r} twice.'


class DataError(NmtError):
    """Raised for malformed corpora, vocabularies or merge lists."""


ParallelExample = collections.namedtuple(
    'ParallelExample', ['src_tokens', 'tgt_tokens', 'amr'])
ParallelExample.__new__.__defaults__ = (None,)

Vocabularies = collections.namedtuple(
    'Vocabularies', ['src', 'tgt', 'graph'])
VocabSizes = collections.namedtuple('VocabSizes', ['src', 'tgt', 'graph'])

GraphInput = collections.namedtuple('GraphInput', ['node_ids', 'adjacency'])

Batch = collections.namedtuple('Batch', [
    'src_ids', 'src_mask', 'tgt_ids', 'tgt_mask',
    'graphs', 'lin_ids', 'lin_mask', 'indices',
])
Batch.__doc__ = """Padded id matrices for a group of examples.

``tgt_ids`` rows read ``<s> y_1 ... y_M </s>`` followed by padding, so the
decoder consumes ``tgt_ids[:, :-1]`` and predicts ``tgt_ids[:, 1:]``.
``graphs`` holds one :class:`GraphInput` per example in graph modes, and
``lin_ids``/``lin_mask`` the linearized AMR tokens in the LinAMR mode;
both are ``None`` otherwise. ``indices`` are positions in the example list
the batch was cut from.
"""


def read_lines(path):
    """Reads a UTF-8 file into a list of lines without line breaks."""
    with io.open(path, 'r', encoding='utf-8') as fh:
        return fh.read().splitlines()


def write_lines(path, lines):
    with io.open(path, 'w', encoding='utf-8') as fh:
        for line in lines:
            fh.write(line + u'\n')


def learn_bpe(words, num_merges):
    """Learns byte-pair merges from a stream of words.

    Each merge joins the adjacent symbol pair with the highest frequency in
    the word-frequency table; ties go to the lexicographically smallest
    pair. Learning stops early when no word has two symbols left.

    Args:
        words (Iterable[str]): Tokens of the training text.
        num_merges (int): Maximum number of merges.

    Returns:
        List[Tuple[str, str]]: Merges in the order they were learned.
    """
    if num_merges < 0:
        raise DataError('num_merges must not be negative, got {}.'
                        .format(num_merges))
    vocab = collections.Counter(tuple(word) for word in words if word)
    merges = []
    while len(merges) < num_merges:
        pairs = collections.Counter()
        for symbols, count in vocab.items():
            for pair in zip(symbols, symbols[1:]):
                pairs[pair] += count
        if not pairs:
            break
        best = min(pairs, key=lambda pair: (-pairs[pair], pair))
        merges.append(best)
        vocab = collections.Counter(dict(
            (_merge_symbols(symbols, best), count)
            for symbols, count in vocab.items()))
    logger.debug('Learned %d BPE merges.', len(merges))
    return merges


def _merge_symbols(symbols, pair):
    first, second = pair
    merged = []
    i = 0
    while i < len(symbols):
        if (i + 1 < len(symbols) and symbols[i] == first and
                symbols[i + 1] == second):
            merged.append(first + second)
            i += 2
        else:
            merged.append(symbols[i])
            i += 1
    return tuple(merged)


class BytePairEncoder(object):
    """Applies a merge list to words, caching the segmentation per word."""

    def __init__(self, merges):
        self.merges = [tuple(merge) for merge in merges]
        self._cache = {}

    def segment(self, word):
        """Splits ``word`` into subword units with ``@@`` suffixes."""
        if word not in self._cache:
            symbols = tuple(word)
            for merge in self.merges:
                if len(symbols) < 2:
                    break
                symbols = _merge_symbols(symbols, merge)
            self._cache[word] = [s + CONTINUATION for s in symbols[:-1]]
            self._cache[word].append(symbols[-1])
        return list(self._cache[word])

    def segment_tokens(self, tokens):
        return list(itertools.chain.from_iterable(
            self.segment(token) for token in tokens))


def apply_bpe(merges, word):
    """Segments a single ``word`` with ``merges``."""
    return BytePairEncoder(merges).segment(word)


def strip_bpe(line):
    """Joins subword units back into words."""
    line = line.replace(CONTINUATION + ' ', '')
    if line.endswith(CONTINUATION):
        line = line[:-len(CONTINUATION)]
    return line


def word_count(bpe_tokens):
    """Number of words before segmentation."""
    return sum(1 for token in bpe_tokens if not token.endswith(CONTINUATION))


def save_merges(path, merges):
    write_lines(path, ['{} {}'.format(first, second)
                       for first, second in merges])


def load_merges(path):
    merges = []
    for number, line in enumerate(read_lines(path), 1):
        parts = line.split(' ')
        if len(parts) != 2 or not all(parts):
            raise DataError(_BAD_MERGE_MSG.format(path, number, line))
        merges.append(tuple(parts))
    return merges


class Vocabulary(object):
    """A bijection between tokens and integer ids.

    Ids 0-3 are reserved for ``<pad>``, ``<unk>``, ``<s>`` and ``</s>``;
    regular tokens follow in the order given. Unknown tokens encode to the
    ``<unk>`` id.

    Attributes:
        token_of (List[str]): Token for every id.
        id_of (Dict[str, int]): Id for every token.
        coverage (float): Fraction of the token occurrences used to build
            the vocabulary that it covers; 1.0 when loaded from a file.
    """

    def __init__(self, tokens, coverage=1.0):
        self.token_of = list(SPECIALS)
        self.id_of = dict((token, i) for i, token in enumerate(SPECIALS))
        for token in tokens:
            if token in self.id_of:
                raise DataError(_DUPLICATE_MSG.format(token))
            self.id_of[token] = len(self.token_of)
            self.token_of.append(token)
        self.coverage = coverage

    @property
    def size(self):
        return len(self.token_of)

    def __len__(self):
        return self.size

    def __contains__(self, token):
        return token in self.id_of

    def encode(self, tokens):
        return [self.id_of.get(token, UNK_ID) for token in tokens]

    def decode(self, ids):
        tokens = []
        for i in ids:
            if not 0 <= i < self.size:
                raise DataError(_ID_RANGE_MSG.format(i, self.size))
            tokens.append(self.token_of[i])
        return tokens

    def _text(self):
        return u''.join(token + u'\n' for token in self.token_of[4:])

    @property
    def fingerprint(self):
        """SHA-256 of the vocabulary file contents."""
        return hashlib.sha256(self._text().encode('utf-8')).hexdigest()

    def save(self, path):
        with io.open(path, 'w', encoding='utf-8') as fh:
            fh.write(self._text())

    @classmethod
    def load(cls, path):
        return cls(read_lines(path))


def build_vocab(tokens, max_size):
    """Builds a frequency-ranked vocabulary.

    Args:
        tokens (Iterable[str]): The token stream.
        max_size (int): Cap on the vocabulary size, specials included.

    Returns:
        Vocabulary: The ``max_size - 4`` most frequent tokens (ties broken
        lexicographically), with ``coverage`` set to the fraction of the
        stream they account for.
    """
    if max_size <= len(SPECIALS):
        raise DataError(_VOCAB_SIZE_MSG.format(len(SPECIALS), max_size))
    counts = collections.Counter(
        token for token in tokens if token not in SPECIALS)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    kept = ranked[:max_size - len(SPECIALS)]
    total = sum(counts.values())
    covered = sum(count for _, count in kept)
    coverage = covered / float(total) if total else 1.0
    return Vocabulary([token for token, _ in kept], coverage=coverage)


def graph_for(example, mode):
    """The graph the GRN encodes for ``example``, or ``None``."""
    if mode == config_lib.DUAL2SEQ:
        return example.amr
    if mode == config_lib.DUAL2SEQ_SELF:
        return amr.chain_graph(example.src_tokens)
    return None


def graph_tokens(example, mode):
    """Node and edge labels (or linearized tokens) of an example's graph."""
    if mode == config_lib.DUAL2SEQ_LINAMR:
        return amr.linearize(example.amr)
    graph = graph_for(example, mode)
    if graph is None:
        return []
    return ([node.label for node in graph.nodes] +
            [edge.label for edge in graph.edges])


def build_graph_vocab(examples, mode, max_size):
    """Joint vocabulary over node labels and edge labels for ``mode``."""
    return build_vocab(itertools.chain.from_iterable(
        graph_tokens(example, mode) for example in examples), max_size)


def load_corpus(src_path, tgt_path=None, amr_path=None, strict=False,
                keep_empty=False):
    """Reads aligned source, target and AMR files.

    Pairs where either side is empty are skipped, together with their AMR,
    unless ``keep_empty`` is set; then every line yields an example and
    empty ones have no source tokens.

    Returns:
        List[ParallelExample]: Token lists split on whitespace.

    Raises:
        DataError: If the files do not have the same number of entries.
    """
    src_lines = read_lines(src_path)
    tgt_lines = read_lines(tgt_path) if tgt_path else [None] * len(src_lines)
    graphs = (amr.read_amr_file(amr_path, strict=strict) if amr_path
              else [None] * len(src_lines))
    if len(tgt_lines) != len(src_lines):
        raise DataError(_MISALIGNED_MSG.format(
            tgt_path, len(tgt_lines), src_path, len(src_lines)))
    if len(graphs) != len(src_lines):
        raise DataError(_MISALIGNED_MSG.format(
            amr_path, len(graphs), src_path, len(src_lines)))

    examples = []
    skipped = 0
    for src, tgt, graph in zip(src_lines, tgt_lines, graphs):
        src_tokens = src.split()
        tgt_tokens = tgt.split() if tgt is not None else None
        if (not src_tokens or tgt_tokens == []) and not keep_empty:
            skipped += 1
            continue
        examples.append(ParallelExample(src_tokens, tgt_tokens, graph))
    if skipped:
        logger.warning('Skipped %d empty line(s) in %s.', skipped, src_path)
    return examples


def _pad(rows, width=None):
    width = width or max(len(row) for row in rows)
    ids = np.full((len(rows), width), PAD_ID, dtype=np.int64)
    for i, row in enumerate(rows):
        ids[i, :len(row)] = row
    return ids, ids != PAD_ID


def collate(examples, vocabs, mode, max_neighbors):
    """Turns examples into one padded :class:`Batch`.

    Examples without target tokens (decoding input) get empty target
    matrices.
    """
    src_ids, src_mask = _pad([vocabs.src.encode(ex.src_tokens)
                              for ex in examples])
    if all(ex.tgt_tokens is not None for ex in examples):
        tgt_ids, tgt_mask = _pad([
            [BOS_ID] + vocabs.tgt.encode(ex.tgt_tokens) + [EOS_ID]
            for ex in examples])
    else:
        tgt_ids = np.zeros((len(examples), 0), dtype=np.int64)
        tgt_mask = np.zeros((len(examples), 0), dtype=bool)

    graphs = None
    lin_ids = lin_mask = None
    if mode in config_lib.GRAPH_MODES:
        graphs = []
        for ex in examples:
            graph = graph_for(ex, mode)
            graphs.append(GraphInput(
                tuple(vocabs.graph.encode(n.label for n in graph.nodes)),
                amr.adjacency(graph, max_neighbors,
                              label_ids=lambda label: vocabs.graph.id_of.get(
                                  label, UNK_ID))))
    elif mode == config_lib.DUAL2SEQ_LINAMR:
        lin_ids, lin_mask = _pad([vocabs.graph.encode(amr.linearize(ex.amr))
                                  for ex in examples])
    return Batch(src_ids, src_mask, tgt_ids, tgt_mask, graphs,
                 lin_ids, lin_mask, tuple(range(len(examples))))


def _within(example, max_len):
    if not max_len:
        return True
    return (word_count(example.src_tokens) <= max_len and
            (example.tgt_tokens is None or
             word_count(example.tgt_tokens) <= max_len))


def filter_by_length(examples, max_len):
    """Drops pairs where either side has more than ``max_len`` words."""
    kept = [ex for ex in examples if _within(ex, max_len)]
    if len(kept) < len(examples):
        logger.info('Length filter %d dropped %d of %d pair(s).',
                    max_len, len(examples) - len(kept), len(examples))
    return kept


def make_batches(examples, vocabs, batch_size, max_len, seed, epoch=0,
                 mode=config_lib.SEQ2SEQ, max_neighbors=6, bucketing=True):
    """Filters, shuffles and batches ``examples`` for one epoch.

    The shuffle is seeded by ``(seed, epoch)``. With ``bucketing`` the
    shuffled examples are stably sorted by source length before being cut
    into batches, and the batch order is shuffled again, so batches hold
    sentences of similar length.

    Returns:
        List[Batch]: ``indices`` refer to positions in ``examples``.
    """
    positions = [i for i, ex in enumerate(examples) if _within(ex, max_len)]
    if len(positions) < len(examples):
        logger.debug('Length filter %d dropped %d of %d pair(s).',
                    max_len, len(examples) - len(positions), len(examples))
    if not positions:
        logger.warning('No examples left to batch.')
        return []

    rng = np.random.default_rng([seed, epoch])
    order = [positions[i] for i in rng.permutation(len(positions))]
    if bucketing:
        order.sort(key=lambda i: len(examples[i].src_tokens))
    chunks = [order[start:start + batch_size]
              for start in range(0, len(order), batch_size)]
    if bucketing:
        chunks = [chunks[i] for i in rng.permutation(len(chunks))]

    batches = []
    for chunk in chunks:
        batch = collate([examples[i] for i in chunk], vocabs, mode,
                        max_neighbors)
        batches.append(batch._replace(indices=tuple(chunk)))
    return batches


def vocab_sizes(vocabs):
    return VocabSizes(vocabs.src.size, vocabs.tgt.size,
                      vocabs.graph.size if vocabs.graph is not None else 0)


def load_vocabularies(vocab_dir, mode):
    """Reads the vocabularies ``preprocess`` wrote for ``mode``."""
    graph = None
    if mode != config_lib.SEQ2SEQ:
        graph = Vocabulary.load(os.path.join(vocab_dir, GRAPH_VOCAB_FILE))
    return Vocabularies(
        Vocabulary.load(os.path.join(vocab_dir, SRC_VOCAB_FILE)),
        Vocabulary.load(os.path.join(vocab_dir, TGT_VOCAB_FILE)),
        graph)


def count_dropped_edges(examples, mode, max_neighbors):
    """Edge slots the adjacency cap removes across ``examples``.

    The total is logged once at INFO when it is not zero.
    """
    dropped = 0
    for example in examples:
        graph = graph_for(example, mode)
        if graph is not None:
            dropped += amr.adjacency(graph, max_neighbors).dropped
    if dropped:
        logger.info('Adjacency cap %d dropped %d edge slot(s) in %d '
                    'graph(s).', max_neighbors, dropped, len(examples))
    return dropped


def _write_split(output_dir, name, examples, with_amr):
    write_lines(os.path.join(output_dir, name + '.src'),
                [' '.join(ex.src_tokens) for ex in examples])
    write_lines(os.path.join(output_dir, name + '.tgt'),
                [' '.join(ex.tgt_tokens) for ex in examples])
    if with_amr:
        write_lines(os.path.join(output_dir, name + '.amr'),
                    [amr.serialize(ex.amr) for ex in examples])


def preprocess(config):
    """Learns BPE, builds vocabularies and writes the segmented corpora.

    Everything is written into ``config.vocab_dir``: the merge list, the
    source, target and (outside seq2seq) graph vocabularies, and
    ``train.{src,tgt[,amr]}`` plus ``dev.*`` when a dev set is given.

    Returns:
        Vocabularies: The vocabularies that were written.
    """
    with_amr = config.mode in config_lib.AMR_MODES
    train = filter_by_length(
        load_corpus(config.train_src, config.train_tgt,
                    config.train_amr if with_amr else None),
        config.max_len)
    dev = []
    if config.dev_src:
        dev = load_corpus(config.dev_src, config.dev_tgt,
                          config.dev_amr if with_amr else None)
    if not train:
        raise DataError('No training pairs left after filtering.')

    merges = learn_bpe(itertools.chain.from_iterable(
        ex.src_tokens + ex.tgt_tokens for ex in train), config.bpe_merges)
    encoder = BytePairEncoder(merges)

    def segment(examples):
        return [ex._replace(src_tokens=encoder.segment_tokens(ex.src_tokens),
                            tgt_tokens=encoder.segment_tokens(ex.tgt_tokens))
                for ex in examples]

    train, dev = segment(train), segment(dev)
    count_dropped_edges(train, config.mode, config.max_neighbors)
    vocabs = Vocabularies(
        build_vocab(itertools.chain.from_iterable(
            ex.src_tokens for ex in train), config.src_vocab_size),
        build_vocab(itertools.chain.from_iterable(
            ex.tgt_tokens for ex in train), config.tgt_vocab_size),
        build_graph_vocab(train, config.mode, config.graph_vocab_size)
        if config.mode != config_lib.SEQ2SEQ else None)

    output_dir = config.vocab_dir
    if not os.path.isdir(output_dir):
        os.makedirs(output_dir)
    save_merges(os.path.join(output_dir, MERGES_FILE), merges)
    for name, vocab in zip((SRC_VOCAB_FILE, TGT_VOCAB_FILE, GRAPH_VOCAB_FILE),
                           vocabs):
        if vocab is None:
            continue
        vocab.save(os.path.join(output_dir, name))
        log = logger.info if vocab.coverage >= 0.99 else logger.warning
        log('%s: %d entries covering %.2f%% of training tokens.',
            name, vocab.size, 100.0 * vocab.coverage)
    _write_split(output_dir, 'train', train, with_amr)
    if dev:
        _write_split(output_dir, 'dev', dev, with_amr)
    logger.info('Wrote %d training and %d dev pair(s) to %s.',
                len(train), len(dev), output_dir)
    return vocabs


_PREPROCESS_FIELDS = (
    'mode', 'bpe_merges', 'src_vocab_size', 'tgt_vocab_size',
    'graph_vocab_size', 'max_len', 'max_neighbors', 'train_src', 'train_tgt',
    'train_amr', 'dev_src', 'dev_tgt', 'dev_amr', 'vocab_dir')


def preprocess_command(args):
    """Learns BPE and vocabularies and writes the filtered corpora."""
    config = config_lib.from_args(args)
    if args.show_config:
        print(config_lib.to_json(config))
        return
    config_lib.validate(config, require_files=(
        'train_src', 'train_tgt', 'train_amr', 'vocab_dir'))
    if config.dev_src or config.dev_tgt:
        config_lib.validate(config, require_files=(
            'dev_src', 'dev_tgt', 'dev_amr'))
    preprocess(config)


def register_commands(subparsers):
    preprocess_parser = subparsers.add_parser(
        'preprocess', help=preprocess_command.__doc__)
    preprocess_parser.set_defaults(func=preprocess_command)
    config_lib.add_arguments(preprocess_parser, _PREPROCESS_FIELDS)
