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


"""Cross-entropy training with Adam, dev-loss model selection and resume."""

import collections
import io
import logging
import math
import os
import time

import numpy as np

from amr_nmt.nmt import checkpoint as checkpoint_lib
from amr_nmt.nmt import config as config_lib
from amr_nmt.nmt import data
from amr_nmt.nmt import decoder
from amr_nmt.nmt import encoders
from amr_nmt.nmt import metrics
from amr_nmt.nmt import numerics as nx
from amr_nmt.nmt.exceptions import NmtError

logger = logging.getLogger(__name__)

INIT_SCALE = 0.08
FORGET_BIAS = 1.0
LOG_FILE = 'train.log'
LAST_CHECKPOINT = 'last.json'
BEST_CHECKPOINT = 'best.json'
SWEEP_FILE = 'sweep.tsv'

_EMPTY_BATCH_MSG = 'The batch has no target token to score.'
_GRAD_MISMATCH_MSG = 'Gradient for {} has shape {} but the parameter has {}.'
_MISSING_GRAD_MSG = 'No gradient given for parameter {}.'
_MISSING_AMR_MSG = 'Mode {} needs an AMR for every example; {} have none.'
_MISSING_GRAPH_VOCAB_MSG = 'Mode {} needs a graph vocabulary.'


class TrainingError(NmtError):
    """Raised for inconsistent training inputs."""


AdamState = collections.namedtuple(
    'AdamState', ['step', 'lr', 'beta1', 'beta2', 'eps', 'm', 'v'])


def init_params(config, sizes, seed):
    """Draws the initial parameters for ``config.mode``.

    Weights and embeddings are uniform in [-0.08, 0.08]; biases are zero
    except LSTM and GRN forget gates, which start at 1.0.

    Args:
        config (RunConfig): Dimensions and mode.
        sizes (VocabSizes): Vocabulary sizes.
        seed (int): Seed of the initializer.

    Returns:
        OrderedDict[str, Tensor]: Trainable parameters by name.
    """
    rng = np.random.default_rng(seed)
    params = collections.OrderedDict()
    specs = (encoders.param_specs(config, sizes) +
             decoder.param_specs(config, sizes))
    for spec in specs:
        if spec.init == 'uniform':
            value = rng.uniform(-INIT_SCALE, INIT_SCALE, spec.shape)
        else:
            value = np.zeros(spec.shape)
        if spec.forget is not None:
            value[spec.forget[0]:spec.forget[1]] = FORGET_BIAS
        params[spec.name] = nx.parameter(value)
    return params


def parameter_count(params):
    return sum(int(tensor.data.size) for tensor in params.values())


def sequence_loss(probs, gold_ids, mask):
    """Mean negative log-likelihood per unmasked target token.

    Args:
        probs (Tensor): Output distributions (B, M, V).
        gold_ids (numpy.ndarray): Gold ids (B, M).
        mask (numpy.ndarray): True at scored positions.

    Returns:
        Tensor: A scalar.

    Raises:
        TrainingError: If nothing is left to score.
    """
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if not count:
        raise TrainingError(_EMPTY_BATCH_MSG)
    gold_ids = np.asarray(gold_ids, dtype=np.int64)
    weights = np.zeros(probs.shape)
    rows, cols = np.nonzero(mask)
    weights[rows, cols, gold_ids[rows, cols]] = 1.0
    total = nx.reduce_sum(nx.log(probs) * nx.Tensor(weights))
    return total * (-1.0 / count)


def batch_loss(params, batch, config, training=False, rng=None):
    """Teacher-forced loss of one batch."""
    memories = encoders.encode_sources(params, batch, config, training, rng)
    probs = decoder.teacher_force(params, memories, batch, config, training,
                                  rng)
    return sequence_loss(probs, batch.tgt_ids[:, 1:], batch.tgt_mask[:, 1:])


def adam_init(params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    zeros = collections.OrderedDict(
        (name, np.zeros_like(tensor.data)) for name, tensor in params.items())
    second = collections.OrderedDict(
        (name, value.copy()) for name, value in zeros.items())
    return AdamState(0, lr, beta1, beta2, eps, zeros, second)


def adam_step(params, grads, state):
    """Applies one bias-corrected Adam update in place.

    Args:
        params (Mapping[str, Tensor]): Parameters, updated in place.
        grads (Mapping[str, numpy.ndarray]): Gradients by parameter name.
        state (AdamState): Moments and step count before the update.

    Returns:
        AdamState: The state after the update.

    Raises:
        TrainingError: If a gradient is missing or misshapen.
    """
    step = state.step + 1
    m = collections.OrderedDict()
    v = collections.OrderedDict()
    for name, tensor in params.items():
        if name not in grads:
            raise TrainingError(_MISSING_GRAD_MSG.format(name))
        grad = np.asarray(grads[name])
        if grad.shape != tensor.shape:
            raise TrainingError(
                _GRAD_MISMATCH_MSG.format(name, grad.shape, tensor.shape))
        m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * grad
        v[name] = (state.beta2 * state.v[name] +
                   (1.0 - state.beta2) * grad * grad)
        m_hat = m[name] / (1.0 - state.beta1 ** step)
        v_hat = v[name] / (1.0 - state.beta2 ** step)
        tensor.data = tensor.data - state.lr * m_hat / (
            np.sqrt(v_hat) + state.eps)
    return state._replace(step=step, m=m, v=v)


def clip_gradients(grads, max_norm):
    """Rescales ``grads`` so their global L2 norm is at most ``max_norm``.

    A ``max_norm`` of 0 disables clipping.

    Returns:
        Tuple[OrderedDict, float]: The gradients and their norm before
        clipping.
    """
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if not max_norm or norm <= max_norm:
        return grads, norm
    scale = max_norm / norm
    return collections.OrderedDict(
        (name, g * scale) for name, g in grads.items()), norm


def _token_count(batch):
    return int(np.asarray(batch.tgt_mask)[:, 1:].sum())


def evaluate_loss(params, examples, vocabs, config):
    """Token-weighted mean loss over ``examples`` with dropout disabled."""
    batches = data.make_batches(
        examples, vocabs, config.batch_size, None, config.seed, 0,
        config.mode, config.max_neighbors, bucketing=False)
    total, tokens = 0.0, 0
    for batch in batches:
        count = _token_count(batch)
        total += batch_loss(params, batch, config).item() * count
        tokens += count
    if not tokens:
        raise TrainingError(_EMPTY_BATCH_MSG)
    return total / tokens


def _check_inputs(config, examples, vocabs):
    if config.mode != config_lib.SEQ2SEQ and vocabs.graph is None:
        raise TrainingError(_MISSING_GRAPH_VOCAB_MSG.format(config.mode))
    if config.mode in config_lib.AMR_MODES:
        missing = sum(1 for ex in examples if ex.amr is None)
        if missing:
            raise TrainingError(_MISSING_AMR_MSG.format(config.mode, missing))


def _log_line(epoch, train_loss, dev_loss, seconds):
    return '{}\t{:.6f}\t{}\t{:.2f}'.format(
        epoch, train_loss,
        '-' if dev_loss is None else '{:.6f}'.format(dev_loss), seconds)


def _snapshot(config, vocabs, params, state, best_dev_loss, epoch):
    return checkpoint_lib.Checkpoint(
        mode=config.mode,
        hyperparameters=config._asdict(),
        vocab_fingerprints=checkpoint_lib.fingerprints(vocabs),
        params=collections.OrderedDict(
            (name, tensor.data.copy()) for name, tensor in params.items()),
        optimizer=dict(state._asdict()),
        best_dev_loss=best_dev_loss,
        epoch=epoch)


def train(config, train_set, dev_set, vocabs, output_dir=None,
          resume_from=None, step_callback=None):
    """Trains a model and keeps the checkpoint with the lowest dev loss.

    Each epoch shuffles with seed ``(config.seed, epoch)`` and draws dropout
    masks from ``(config.seed, epoch, 1)``, so resuming from a checkpoint
    continues exactly like an uninterrupted run.

    Args:
        config (RunConfig): The run configuration.
        train_set (List[ParallelExample]): BPE-segmented training pairs.
        dev_set (List[ParallelExample]): Dev pairs; may be empty, in which
            case the last epoch wins.
        vocabs (Vocabularies): Source, target and graph vocabularies.
        output_dir (Optional[str]): Receives ``last.json``, ``best.json``
            and ``train.log``.
        resume_from (Optional[str]): Checkpoint to continue from.
        step_callback (Optional[Callable[[int, float], None]]): Called with
            the optimizer step and batch loss after every update.

    Returns:
        Checkpoint: The selected checkpoint.
    """
    _check_inputs(config, list(train_set) + list(dev_set or []), vocabs)
    if resume_from:
        saved = checkpoint_lib.load_checkpoint(resume_from, mode=config.mode)
        checkpoint_lib.check_fingerprints(saved, vocabs)
        params = checkpoint_lib.to_tensors(saved.params)
        state = AdamState(**saved.optimizer)
        start, best_loss, best = saved.epoch, saved.best_dev_loss, None
        logger.info('Resuming %s after epoch %d.', resume_from, start)
    else:
        params = init_params(config, data.vocab_sizes(vocabs), config.seed)
        state = adam_init(params, config.learning_rate)
        start, best_loss, best = 0, None, None
    logger.info('Training %s with %d parameters on %d pair(s).',
                config.mode, parameter_count(params), len(train_set))

    if output_dir and not os.path.isdir(output_dir):
        os.makedirs(output_dir)
    for epoch in range(start, config.epochs):
        started = time.time()
        batches = data.make_batches(
            train_set, vocabs, config.batch_size, config.max_len, config.seed,
            epoch, config.mode, config.max_neighbors, config.bucketing)
        if not batches:
            raise TrainingError('No training batches left after filtering.')
        dropout_rng = np.random.default_rng([config.seed, epoch, 1])
        total, tokens = 0.0, 0
        for batch in batches:
            with nx.recording() as record:
                loss = batch_loss(params, batch, config, True, dropout_rng)
            grads, norm = clip_gradients(record.backward(loss, params),
                                         config.clip_norm)
            state = adam_step(params, grads, state)
            count = _token_count(batch)
            total += loss.item() * count
            tokens += count
            logger.debug('step %d loss %.6f norm %.4f', state.step,
                         loss.item(), norm)
            if step_callback:
                step_callback(state.step, loss.item())

        train_loss = total / tokens
        dev_loss = (evaluate_loss(params, dev_set, vocabs, config)
                    if dev_set else None)
        seconds = time.time() - started
        line = _log_line(epoch + 1, train_loss, dev_loss, seconds)
        logger.info('epoch %s', line.replace('\t', ' '))

        improved = dev_loss is not None and (best_loss is None or
                                             dev_loss < best_loss)
        if improved:
            best_loss = dev_loss
        last = _snapshot(config, vocabs, params, state, best_loss, epoch + 1)
        if improved or dev_loss is None:
            best = last
        if output_dir:
            with io.open(os.path.join(output_dir, LOG_FILE), 'a',
                         encoding='utf-8') as fh:
                fh.write(line + u'\n')
            checkpoint_lib.save_checkpoint(
                os.path.join(output_dir, LAST_CHECKPOINT), last)
            if best is last:
                checkpoint_lib.save_checkpoint(
                    os.path.join(output_dir, BEST_CHECKPOINT), best)

    if best is None:
        best_path = os.path.join(output_dir or '', BEST_CHECKPOINT)
        if output_dir and os.path.exists(best_path):
            best = checkpoint_lib.load_checkpoint(best_path, config.mode)
        else:
            best = _snapshot(config, vocabs, params, state, best_loss,
                             max(start, config.epochs))
    return best


def dev_bleu(params, config, vocabs, examples):
    """Corpus BLEU of the decoded dev sources against their targets."""
    outputs = decoder.translate(params, config, vocabs, examples)
    candidates = [data.strip_bpe(' '.join(tokens)).split()
                  for tokens in outputs]
    references = [data.strip_bpe(' '.join(ex.tgt_tokens)).split()
                  for ex in examples]
    return metrics.bleu(candidates, references).bleu


def sweep_steps(config, train_set, dev_set, vocabs, steps, output_dir=None):
    """Trains once per transition-step count and scores each on dev.

    Returns:
        List[Tuple[int, float, float]]: ``(steps, best_dev_loss, dev_bleu)``
        rows in the order given.
    """
    if config.mode not in config_lib.GRAPH_MODES:
        raise config_lib.ConfigError(
            'sweep-steps needs a graph encoder mode, got {}.'.format(
                config.mode))
    if not dev_set:
        raise TrainingError('sweep-steps needs a dev set.')
    rows = []
    for count in steps:
        run_config = config._replace(transition_steps=count)
        run_dir = (os.path.join(output_dir, 'steps-{}'.format(count))
                   if output_dir else None)
        best = train(run_config, train_set, dev_set, vocabs, run_dir)
        score = dev_bleu(checkpoint_lib.to_tensors(best.params), run_config,
                         vocabs, dev_set)
        rows.append((count, best.best_dev_loss, score))
        logger.info('steps %d best_dev_loss %.6f dev_bleu %.2f', count,
                    best.best_dev_loss, score)
    if output_dir:
        data.write_lines(
            os.path.join(output_dir, SWEEP_FILE),
            ['steps\tbest_dev_loss\tdev_bleu'] +
            ['{}\t{:.6f}\t{:.2f}'.format(*row) for row in rows])
    return rows


_TRAIN_FIELDS = (
    'mode', 'embed_dim', 'hidden_dim', 'graph_dim', 'transition_steps',
    'max_neighbors', 'grn_candidate', 'feed_graph_context', 'learning_rate',
    'batch_size', 'dropout', 'epochs', 'clip_norm', 'seed', 'max_len',
    'bucketing', 'beam_size', 'max_decode_len', 'length_normalize',
    'train_src', 'train_tgt', 'train_amr', 'dev_src', 'dev_tgt', 'dev_amr',
    'vocab_dir', 'output_dir')


def _load_run(args, require_dev=False):
    config = config_lib.from_args(args)
    if args.show_config:
        print(config_lib.to_json(config))
        return None
    config_lib.validate(config, require_files=(
        'train_src', 'train_tgt', 'train_amr', 'vocab_dir', 'output_dir'))
    if require_dev or config.dev_src or config.dev_tgt:
        config_lib.validate(config, require_files=(
            'dev_src', 'dev_tgt', 'dev_amr'))
    with_amr = config.mode in config_lib.AMR_MODES
    vocabs = data.load_vocabularies(config.vocab_dir, config.mode)
    train_set = data.load_corpus(config.train_src, config.train_tgt,
                                 config.train_amr if with_amr else None)
    dev_set = []
    if config.dev_src:
        dev_set = data.load_corpus(config.dev_src, config.dev_tgt,
                                   config.dev_amr if with_amr else None)
    return config, train_set, dev_set, vocabs


def train_command(args):
    """Trains a model on preprocessed corpora."""
    run = _load_run(args)
    if run is None:
        return
    config, train_set, dev_set, vocabs = run
    best = train(config, train_set, dev_set, vocabs, config.output_dir,
                 resume_from=args.resume)
    logger.info('Best checkpoint: epoch %d, dev loss %s.', best.epoch,
                best.best_dev_loss)


def sweep_steps_command(args):
    """Trains one model per transition-step count and reports dev scores."""
    run = _load_run(args, require_dev=True)
    if run is None:
        return
    config, train_set, dev_set, vocabs = run
    for row in sweep_steps(config, train_set, dev_set, vocabs, args.steps,
                           config.output_dir):
        print('{}\t{:.6f}\t{:.2f}'.format(*row))


def register_commands(subparsers):
    train_parser = subparsers.add_parser('train', help=train_command.__doc__)
    train_parser.set_defaults(func=train_command)
    train_parser.add_argument(
        '--resume', help='Checkpoint to continue training from.')
    config_lib.add_arguments(train_parser, _TRAIN_FIELDS)

    sweep_parser = subparsers.add_parser(
        'sweep-steps', help=sweep_steps_command.__doc__)
    sweep_parser.set_defaults(func=sweep_steps_command)
    sweep_parser.add_argument(
        '--steps', type=int, nargs='+', default=[1, 5, 10, 12],
        help='Transition step counts to try.')
    config_lib.add_arguments(sweep_parser, _TRAIN_FIELDS)
