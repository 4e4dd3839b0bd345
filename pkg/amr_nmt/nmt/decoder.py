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


"""Attention LSTM decoder with an optional second (graph) attention.

The decoder state starts from a projection of the encoder boundary states.
Each step feeds ``[e_y; context]`` (plus the previous graph context in the
dual modes when ``feed_graph_context`` is set) into the LSTM, attends over
the source rows and, in dual modes, over the graph memory, and predicts the
next token from ``s @ V_state + context @ V_context + graph_context @
V_graph + b``.
"""

import collections
import logging
import os

import numpy as np

from amr_nmt.nmt import checkpoint as checkpoint_lib
from amr_nmt.nmt import config as config_lib
from amr_nmt.nmt import data
from amr_nmt.nmt import encoders
from amr_nmt.nmt import numerics as nx
from amr_nmt.nmt.exceptions import NmtError

logger = logging.getLogger(__name__)

_MISSING_MEMORY_MSG = 'Mode {} needs a graph memory but none was encoded.'
_MASKED_MEMORY_MSG = 'Attention memory row(s) {} are fully masked.'
_BEAM_MSG = '{} must be at least 1, got {}.'


class DecoderError(NmtError):
    """Raised when memories and mode disagree or attention has no target."""


DecoderState = collections.namedtuple(
    'DecoderState', ['h', 'c', 'context', 'graph_context'])

AttentionMemory = collections.namedtuple(
    'AttentionMemory', ['rows', 'keys', 'mask'])
AttentionMemory.__doc__ = """Memory rows with their attention projection.

``keys`` is ``rows @ W_mem``, computed once per sentence.
"""

StepTrace = collections.namedtuple(
    'StepTrace', ['alpha', 'context', 'graph_alpha', 'graph_context',
                  'probs'])

Hypothesis = collections.namedtuple(
    'Hypothesis', ['tokens', 'log_prob', 'score'])


def is_dual(config):
    return config.mode != config_lib.SEQ2SEQ


def lstm_input_dim(config):
    width = config.embed_dim + 2 * config.hidden_dim
    if is_dual(config) and config.feed_graph_context:
        width += encoders.graph_memory_width(config)
    return width


def _attention_specs(prefix, memory_width, config):
    a = config.hidden_dim
    return [
        encoders.ParamSpec(prefix + '.W_mem', (memory_width, a), 'uniform'),
        encoders.ParamSpec(prefix + '.W_s', (config.hidden_dim, a),
                           'uniform'),
        encoders.ParamSpec(prefix + '.b', (a,), 'zeros'),
        encoders.ParamSpec(prefix + '.v', (a, 1), 'uniform'),
    ]


def param_specs(config, sizes):
    """Every decoder parameter used in ``config.mode``."""
    h, v = config.hidden_dim, sizes.tgt
    specs = [
        encoders.ParamSpec('dec.embed', (v, config.embed_dim), 'uniform'),
        encoders.ParamSpec('dec.init.W', (2 * h, h), 'uniform'),
        encoders.ParamSpec('dec.init.b', (h,), 'zeros'),
    ]
    specs.extend(encoders.lstm_specs('dec.lstm', lstm_input_dim(config), h))
    specs.extend(_attention_specs('dec.att', 2 * h, config))
    graph_width = encoders.graph_memory_width(config)
    if is_dual(config):
        specs.extend(_attention_specs('dec.gatt', graph_width, config))
    specs.extend([
        encoders.ParamSpec('dec.out.V_state', (h, v), 'uniform'),
        encoders.ParamSpec('dec.out.V_context', (2 * h, v), 'uniform'),
    ])
    if is_dual(config):
        specs.append(
            encoders.ParamSpec('dec.out.V_graph', (graph_width, v), 'uniform'))
    specs.append(encoders.ParamSpec('dec.out.b', (v,), 'zeros'))
    return specs


def init_state(boundary, params, config):
    """Initial decoder state from the encoder boundary states.

    ``s0 = [h_bwd_first; h_fwd_last] @ W1 + b1``; the cell and both
    contexts start at zero.
    """
    first, last = boundary
    batch = first.shape[0]
    s0 = (nx.concat([first, last], axis=-1) @ params['dec.init.W'] +
          params['dec.init.b'])
    graph_context = None
    if is_dual(config):
        graph_context = nx.zeros(
            (batch, encoders.graph_memory_width(config)))
    return DecoderState(s0, nx.zeros(s0.shape),
                        nx.zeros((batch, 2 * config.hidden_dim)),
                        graph_context)


def attention_memory(rows, mask, params, prefix):
    return AttentionMemory(rows, rows @ params[prefix + '.W_mem'],
                           np.asarray(mask, dtype=bool))


def attend(memory, query, params, prefix='dec.att'):
    """Additive attention of ``query`` rows over ``memory``.

    Args:
        memory (AttentionMemory): Rows (B, L, k) with keys and mask; a
            memory of batch size 1 serves any number of queries.
        query (Tensor): Decoder states (Q, d_s).
        params (Mapping[str, Tensor]): ``prefix.W_s``, ``.b`` and ``.v``.
        prefix (str): ``dec.att`` or ``dec.gatt``.

    Returns:
        Tuple[Tensor, Tensor]: Weights (Q, L), zero at masked rows, and the
        context (Q, k).

    Raises:
        DecoderError: If some memory has no unmasked row.
    """
    dead = ~memory.mask.any(axis=-1)
    if dead.any():
        raise DecoderError(
            _MASKED_MEMORY_MSG.format(np.flatnonzero(dead).tolist()))
    queries, size = query.shape[0], memory.keys.shape[-1]
    projected = nx.reshape(query @ params[prefix + '.W_s'],
                           (queries, 1, size))
    energy = nx.tanh(memory.keys + projected + params[prefix + '.b'])
    length = memory.rows.shape[1]
    scores = nx.reshape(energy @ params[prefix + '.v'], (queries, length))
    mask = np.broadcast_to(memory.mask, scores.shape)
    alpha = nx.softmax_rows(scores, mask)
    context = nx.reshape(nx.reshape(alpha, (queries, 1, length)) @
                         memory.rows, (queries, memory.rows.shape[-1]))
    return alpha, context


def prepare_memories(memories, params, config):
    """Projects the memory rows once for a whole decoding run.

    Raises:
        DecoderError: If a dual mode has no graph memory.
    """
    source = attention_memory(memories.states, memories.mask, params,
                              'dec.att')
    graph = None
    if is_dual(config):
        if memories.graph_states is None:
            raise DecoderError(_MISSING_MEMORY_MSG.format(config.mode))
        graph = attention_memory(memories.graph_states, memories.graph_mask,
                                 params, 'dec.gatt')
    return source, graph


def decode_step(state, prev_ids, prepared, params, config, training=False,
                rng=None):
    """Runs one decoder step.

    Args:
        state (DecoderState): State after the previous step.
        prev_ids (numpy.ndarray): Previous target ids, one per row.
        prepared (Tuple[AttentionMemory, Optional[AttentionMemory]]): From
            :func:`prepare_memories`.
        params (Mapping[str, Tensor]): Decoder parameters.
        config (RunConfig): Mode, dropout and context feeding.
        training (bool): Whether dropout is active.
        rng (numpy.random.Generator): Dropout randomness.

    Returns:
        Tuple[DecoderState, StepTrace]: The new state and the step's
        attention weights, contexts and output distribution.
    """
    source, graph = prepared
    if is_dual(config) and graph is None:
        raise DecoderError(_MISSING_MEMORY_MSG.format(config.mode))
    inputs = [nx.embedding_lookup(params['dec.embed'], prev_ids),
              state.context]
    if is_dual(config) and config.feed_graph_context:
        inputs.append(state.graph_context)
    cell = encoders.lstm_cell(nx.concat(inputs, axis=-1),
                              encoders.LstmState(state.h, state.c),
                              params, 'dec.lstm')
    alpha, context = attend(source, cell.h, params, 'dec.att')
    graph_alpha = graph_context = None
    if is_dual(config):
        graph_alpha, graph_context = attend(graph, cell.h, params, 'dec.gatt')

    logits = (nx.dropout(cell.h, config.dropout, rng, training) @
              params['dec.out.V_state'] +
              nx.dropout(context, config.dropout, rng, training) @
              params['dec.out.V_context'])
    if is_dual(config):
        logits = logits + (
            nx.dropout(graph_context, config.dropout, rng, training) @
            params['dec.out.V_graph'])
    probs = nx.softmax_rows(logits + params['dec.out.b'])
    new_state = DecoderState(cell.h, cell.c, context, graph_context)
    return new_state, StepTrace(alpha, context, graph_alpha, graph_context,
                                probs)


def teacher_force(params, memories, batch, config, training=False, rng=None):
    """Feeds the gold prefix and collects every step's distribution.

    Returns:
        Tensor: Probabilities (B, M, V) for predicting ``tgt_ids[:, 1:]``.
    """
    prepared = prepare_memories(memories, params, config)
    state = init_state(memories.boundary, params, config)
    steps = []
    for m in range(batch.tgt_ids.shape[1] - 1):
        state, trace = decode_step(state, batch.tgt_ids[:, m], prepared,
                                   params, config, training, rng)
        steps.append(trace.probs)
    return nx.stack(steps, axis=1)


def _select(state, rows):
    fields = []
    for field in state:
        if field is None:
            fields.append(None)
        elif isinstance(field, nx.Tensor):
            fields.append(nx.Tensor(field.data[rows]))
        else:
            fields.append(np.asarray(field)[rows])
    return type(state)(*fields)


def _score(log_prob, length, normalize):
    return log_prob / length if normalize else log_prob


def greedy_search(step_fn, initial_state, bos, eos, max_len,
                  normalize=True):
    """Follows the most probable token until ``eos`` or ``max_len``.

    Args:
        step_fn (Callable): Maps ``(state, prev_ids)`` to ``(log_probs,
            new_state)`` with one row per state row.
        initial_state (tuple): A namedtuple of arrays or tensors holding a
            single row.

    Returns:
        Hypothesis: The greedy hypothesis, ``eos`` included when emitted.
    """
    tokens = []
    log_prob = 0.0
    state = initial_state
    prev = bos
    for _ in range(max_len):
        log_probs, state = step_fn(state, np.array([prev]))
        prev = int(np.argmax(log_probs[0]))
        log_prob += float(log_probs[0, prev])
        tokens.append(prev)
        if prev == eos:
            break
    return Hypothesis(tuple(tokens), log_prob,
                      _score(log_prob, len(tokens), normalize))


def beam_search(step_fn, initial_state, bos, eos, beam_size, max_len,
                normalize=True):
    """Keeps the ``beam_size`` best partial hypotheses at every step.

    Hypotheses that emit ``eos`` leave the beam; the search stops once
    nothing is live or ``max_len`` tokens were produced, and hypotheses
    still live then compete truncated. The winner maximizes the log
    probability, divided by the token count (``eos`` included) when
    ``normalize`` is set. Ties go to the hypothesis found first.

    Args:
        step_fn (Callable): Maps ``(state, prev_ids)`` to ``(log_probs,
            new_state)``; ``log_probs`` is a (rows, V) array.
        initial_state (tuple): A namedtuple of arrays or tensors holding a
            single row.
        bos (int): Id fed at the first step.
        eos (int): Id that finishes a hypothesis.
        beam_size (int): Live hypotheses kept per step.
        max_len (int): Maximum number of emitted tokens.
        normalize (bool): Rank by per-token log probability.

    Returns:
        Hypothesis: The best hypothesis.

    Raises:
        DecoderError: If ``beam_size`` or ``max_len`` is below 1.
    """
    if beam_size < 1:
        raise DecoderError(_BEAM_MSG.format('beam_size', beam_size))
    if max_len < 1:
        raise DecoderError(_BEAM_MSG.format('max_len', max_len))
    live = [((), 0.0)]
    state = initial_state
    finished = []
    for _ in range(max_len):
        prev = np.array([tokens[-1] if tokens else bos for tokens, _ in live])
        log_probs, new_state = step_fn(state, prev)
        candidates = []
        for row, (_, log_prob) in enumerate(live):
            top = np.argsort(-log_probs[row], kind='stable')[:beam_size]
            candidates.extend((log_prob + float(log_probs[row, token]),
                               row, int(token)) for token in top)
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))

        next_live, rows = [], []
        for log_prob, row, token in candidates[:beam_size]:
            tokens = live[row][0] + (token,)
            if token == eos:
                finished.append((tokens, log_prob))
            else:
                next_live.append((tokens, log_prob))
                rows.append(row)
        live = next_live
        if not live:
            break
        state = _select(new_state, rows)
    finished.extend(live)

    best = None
    for tokens, log_prob in finished:
        score = _score(log_prob, len(tokens), normalize)
        if best is None or score > best.score:
            best = Hypothesis(tokens, log_prob, score)
    return best


def _step_function(params, memories, config):
    prepared = prepare_memories(memories, params, config)

    def step_fn(state, prev_ids):
        new_state, trace = decode_step(state, prev_ids, prepared, params,
                                       config)
        return np.log(np.maximum(trace.probs.data, 1e-300)), new_state

    return step_fn


def _without_eos(hypothesis):
    tokens = list(hypothesis.tokens)
    if tokens and tokens[-1] == data.EOS_ID:
        tokens.pop()
    return tokens


def greedy_decode(params, memories, config, max_len):
    """Greedy decoding of a single encoded sentence.

    Returns:
        List[int]: Target ids without the final ``eos``.
    """
    return _without_eos(greedy_search(
        _step_function(params, memories, config),
        init_state(memories.boundary, params, config),
        data.BOS_ID, data.EOS_ID, max_len, config.length_normalize))


def beam_decode(params, memories, config, beam_size, max_len):
    """Beam search over a single encoded sentence.

    The greedy hypothesis always competes as well, so a wider beam never
    scores below beam size 1.

    Returns:
        List[int]: Target ids without the final ``eos``.
    """
    step_fn = _step_function(params, memories, config)
    start = init_state(memories.boundary, params, config)
    best = beam_search(step_fn, start, data.BOS_ID, data.EOS_ID, beam_size,
                       max_len, config.length_normalize)
    if beam_size > 1:
        greedy = greedy_search(step_fn, start, data.BOS_ID, data.EOS_ID,
                               max_len, config.length_normalize)
        if greedy.score > best.score:
            best = greedy
    return _without_eos(best)


def translate(params, config, vocabs, examples, beam_size=None,
              max_len=None):
    """Decodes BPE-segmented examples one by one.

    Returns:
        List[List[str]]: Target BPE tokens per example.
    """
    beam_size = beam_size or config.beam_size
    max_len = max_len or config.max_decode_len
    outputs = []
    for number, example in enumerate(examples, 1):
        batch = data.collate([example], vocabs, config.mode,
                             config.max_neighbors)
        memories = encoders.encode_sources(params, batch, config)
        if beam_size == 1:
            ids = greedy_decode(params, memories, config, max_len)
        else:
            ids = beam_decode(params, memories, config, beam_size, max_len)
        outputs.append(vocabs.tgt.decode(ids))
        if number % 100 == 0:
            logger.info('Translated %d of %d sentence(s).', number,
                        len(examples))
    return outputs


_TRANSLATE_FIELDS = (
    'beam_size', 'max_decode_len', 'length_normalize', 'vocab_dir')


def translate_command(args):
    """Decodes a tokenized source file with a trained checkpoint."""
    checkpoint = checkpoint_lib.load_checkpoint(args.checkpoint)
    file_values = config_lib.from_dict(checkpoint.hyperparameters)._asdict()
    if args.config:
        file_values.update(config_lib.read_config_file(args.config))
    overrides = dict((k, v) for k, v in vars(args).items()
                     if k in _TRANSLATE_FIELDS)
    config = config_lib.determine_final_config(
        file_values, overrides, environ={})
    checkpoint_lib.check_mode(checkpoint, config.mode)
    if args.show_config:
        print(config_lib.to_json(config))
        return
    config_lib.validate(config)
    if config.mode in config_lib.AMR_MODES and not args.input_amr:
        raise config_lib.ConfigError(
            'Mode {} requires --input-amr.'.format(config.mode))

    vocabs = data.load_vocabularies(config.vocab_dir, config.mode)
    checkpoint_lib.check_fingerprints(checkpoint, vocabs)
    encoder = data.BytePairEncoder(data.load_merges(
        os.path.join(config.vocab_dir, data.MERGES_FILE)))
    inputs = data.load_corpus(
        args.input, amr_path=args.input_amr
        if config.mode in config_lib.AMR_MODES else None, keep_empty=True)
    positions = [i for i, ex in enumerate(inputs) if ex.src_tokens]
    if len(positions) < len(inputs):
        logger.warning('Writing empty translations for %d empty line(s).',
                       len(inputs) - len(positions))
    examples = [
        inputs[i]._replace(
            src_tokens=encoder.segment_tokens(inputs[i].src_tokens))
        for i in positions]
    params = checkpoint_lib.to_tensors(checkpoint.params)
    lines = [''] * len(inputs)
    for i, tokens in zip(positions,
                         translate(params, config, vocabs, examples)):
        lines[i] = data.strip_bpe(' '.join(tokens))
    data.write_lines(args.output, lines)
    logger.info('Wrote %d translation(s) to %s.', len(lines), args.output)


def register_commands(subparsers):
    translate_parser = subparsers.add_parser(
        'translate', help=translate_command.__doc__)
    translate_parser.set_defaults(func=translate_command)
    translate_parser.add_argument('--checkpoint', required=True)
    translate_parser.add_argument(
        '--input', required=True, help='Tokenized source text.')
    translate_parser.add_argument(
        '--input-amr', help='AMRs aligned with --input (AMR modes).')
    translate_parser.add_argument('--output', required=True)
    config_lib.add_arguments(translate_parser, _TRANSLATE_FIELDS)
