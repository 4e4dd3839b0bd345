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


"""Sequential (BiLSTM) and graph (GRN) encoders.

Parameters live in a flat mapping from names such as ``enc.fwd.W`` or
``grn.U_hat`` to :class:`~amr_nmt.nmt.numerics.Tensor` objects. Dense layers
use row vectors, ``x @ W + b`` with ``W`` shaped (in, out), and every gated
cell keeps its gate blocks side by side in one fused matrix.
"""

import collections
import logging

import numpy as np

from amr_nmt.nmt import config as config_lib
from amr_nmt.nmt import numerics as nx
from amr_nmt.nmt.exceptions import NmtError

logger = logging.getLogger(__name__)

_EMPTY_SEQUENCE_MSG = 'Cannot encode an empty sequence.'
_STEPS_MSG = 'The graph encoder needs at least one transition step, got {}.'
_NO_GRAPHS_MSG = 'Mode {} needs graphs in the batch but none were given.'


class EncoderError(NmtError):
    """Raised for invalid encoder inputs."""


ParamSpec = collections.namedtuple(
    'ParamSpec', ['name', 'shape', 'init', 'forget'])
ParamSpec.__new__.__defaults__ = (None,)
ParamSpec.__doc__ = """Shape and initializer of one named parameter.

``init`` is ``'uniform'`` or ``'zeros'``; ``forget`` optionally names the
``(start, stop)`` columns of a bias that start at 1.0.
"""

LstmState = collections.namedtuple('LstmState', ['h', 'c'])
GraphState = collections.namedtuple('GraphState', ['a', 'c'])

GraphPack = collections.namedtuple('GraphPack', [
    'node_ids', 'num_nodes',
    'in_owner', 'in_other', 'in_labels',
    'out_owner', 'out_other', 'out_labels',
    'gather', 'mask',
])
GraphPack.__doc__ = """The graphs of a batch flattened into one node list.

Node ``j`` of example ``b`` becomes row ``offset_b + j``. Each capped
incoming entry of node ``j`` is a slot with ``owner`` j, ``other`` its
source node and a label id; outgoing entries likewise, with ``other`` the
target. ``gather`` (B, max_nodes) indexes the flat node rows, pointing at
the extra zero row ``num_nodes`` for padding, and ``mask`` marks real nodes.
"""

Memories = collections.namedtuple('Memories', [
    'states', 'mask', 'boundary', 'graph_states', 'graph_mask'])
Memories.__doc__ = """Attention memories of a batch.

``states`` (B, L, 2h) are the BiLSTM rows ``[h_bwd; h_fwd]``, ``boundary``
the pair ``(h_bwd of the first token, h_fwd of the last token)``.
``graph_states`` holds the second memory (GRN node states or the LinAMR
BiLSTM rows) and is ``None`` in seq2seq mode.
"""


def lstm_specs(prefix, input_dim, hidden_dim):
    """Fused LSTM parameters; gate columns are ordered i, f, o, g."""
    return [
        ParamSpec(prefix + '.W', (input_dim, 4 * hidden_dim), 'uniform'),
        ParamSpec(prefix + '.U', (hidden_dim, 4 * hidden_dim), 'uniform'),
        ParamSpec(prefix + '.b', (4 * hidden_dim,), 'zeros',
                  (hidden_dim, 2 * hidden_dim)),
    ]


def bilstm_specs(prefix, vocab_size, config):
    specs = [ParamSpec(prefix + '.embed', (vocab_size, config.embed_dim),
                       'uniform')]
    for direction in ('fwd', 'bwd'):
        specs.extend(lstm_specs('{}.{}'.format(prefix, direction),
                                config.embed_dim, config.hidden_dim))
    return specs


def grn_specs(vocab_size, config):
    """Graph encoder parameters; gate columns are ordered i, o, f, u."""
    e, g = config.embed_dim, config.graph_dim
    return [
        ParamSpec('grn.node_embed', (vocab_size, e), 'uniform'),
        ParamSpec('grn.edge_embed', (vocab_size, e), 'uniform'),
        ParamSpec('grn.W4', (2 * e, g), 'uniform'),
        ParamSpec('grn.b4', (g,), 'zeros'),
        ParamSpec('grn.W', (g, 4 * g), 'uniform'),
        ParamSpec('grn.W_hat', (g, 4 * g), 'uniform'),
        ParamSpec('grn.U', (g, 4 * g), 'uniform'),
        ParamSpec('grn.U_hat', (g, 4 * g), 'uniform'),
        ParamSpec('grn.b', (4 * g,), 'zeros', (2 * g, 3 * g)),
    ]


def param_specs(config, sizes):
    """Every encoder parameter used in ``config.mode``.

    Args:
        config (RunConfig): Dimensions and mode.
        sizes (VocabSizes): Vocabulary sizes.
    """
    specs = bilstm_specs('enc', sizes.src, config)
    if config.mode in config_lib.GRAPH_MODES:
        specs.extend(grn_specs(sizes.graph, config))
    elif config.mode == config_lib.DUAL2SEQ_LINAMR:
        specs.extend(bilstm_specs('lin', sizes.graph, config))
    return specs


def graph_memory_width(config):
    if config.mode in config_lib.GRAPH_MODES:
        return config.graph_dim
    if config.mode == config_lib.DUAL2SEQ_LINAMR:
        return 2 * config.hidden_dim
    return 0


def _mask_column(mask):
    return nx.Tensor(np.asarray(mask, dtype=np.float64)[:, None])


def lstm_cell(x, state, params, prefix, mask=None):
    """One LSTM step.

    Rows whose ``mask`` entry is false keep their previous state.

    Args:
        x (Tensor): Inputs (B, in).
        state (LstmState): Previous ``h`` and ``c``, each (B, hidden).
        params (Mapping[str, Tensor]): Holds ``prefix.W``, ``.U``, ``.b``.
        prefix (str): Parameter name prefix.
        mask (Optional[numpy.ndarray]): Boolean (B,).

    Returns:
        LstmState: The next state.
    """
    hidden = state.h.shape[-1]
    z = (x @ params[prefix + '.W'] + state.h @ params[prefix + '.U'] +
         params[prefix + '.b'])
    i = nx.sigmoid(nx.slice_last(z, 0, hidden))
    f = nx.sigmoid(nx.slice_last(z, hidden, 2 * hidden))
    o = nx.sigmoid(nx.slice_last(z, 2 * hidden, 3 * hidden))
    g = nx.tanh(nx.slice_last(z, 3 * hidden, 4 * hidden))
    c = f * state.c + i * g
    h = o * nx.tanh(c)
    if mask is not None:
        keep = _mask_column(mask)
        h = keep * h + (1.0 - keep) * state.h
        c = keep * c + (1.0 - keep) * state.c
    return LstmState(h, c)


def bilstm_encode(ids, mask, params, prefix='enc'):
    """Runs a bidirectional LSTM over padded id rows.

    Args:
        ids (numpy.ndarray): Token ids (B, L).
        mask (numpy.ndarray): True at real tokens; padding sits at the end
            of each row.
        params (Mapping[str, Tensor]): Embedding and both directions.
        prefix (str): ``enc`` for the source, ``lin`` for linearized AMRs.

    Returns:
        Tuple[Tensor, Tuple[Tensor, Tensor]]: The (B, L, 2h) rows
        ``[h_bwd; h_fwd]`` and the boundary pair used to start the decoder.

    Raises:
        EncoderError: If the rows are empty.
    """
    ids = np.asarray(ids)
    mask = np.asarray(mask, dtype=bool)
    if ids.ndim != 2 or ids.shape[1] == 0 or not mask.any(axis=1).all():
        raise EncoderError(_EMPTY_SEQUENCE_MSG)
    batch, length = ids.shape
    hidden = params[prefix + '.fwd.U'].shape[0]
    table = params[prefix + '.embed']
    inputs = [nx.embedding_lookup(table, ids[:, t]) for t in range(length)]

    start = LstmState(nx.zeros((batch, hidden)), nx.zeros((batch, hidden)))
    forward = []
    state = start
    for t in range(length):
        state = lstm_cell(inputs[t], state, params, prefix + '.fwd',
                          mask[:, t])
        forward.append(state.h)
    backward = [None] * length
    state = start
    for t in reversed(range(length)):
        state = lstm_cell(inputs[t], state, params, prefix + '.bwd',
                          mask[:, t])
        backward[t] = state.h

    rows = [nx.concat([backward[t], forward[t]], axis=-1)
            for t in range(length)]
    return nx.stack(rows, axis=1), (backward[0], forward[-1])


def pack_graphs(graphs):
    """Flattens per-example :class:`~amr_nmt.nmt.data.GraphInput` objects.

    Returns:
        GraphPack: Index arrays for the whole batch.
    """
    node_ids = []
    in_owner, in_other, in_labels = [], [], []
    out_owner, out_other, out_labels = [], [], []
    offsets = []
    for graph in graphs:
        offset = len(node_ids)
        offsets.append(offset)
        node_ids.extend(graph.node_ids)
        for j, entries in enumerate(graph.adjacency.incoming):
            for source, label in entries:
                in_owner.append(offset + j)
                in_other.append(offset + source)
                in_labels.append(label)
        for j, entries in enumerate(graph.adjacency.outgoing):
            for target, label in entries:
                out_owner.append(offset + j)
                out_other.append(offset + target)
                out_labels.append(label)

    num_nodes = len(node_ids)
    width = max(len(graph.node_ids) for graph in graphs)
    gather = np.full((len(graphs), width), num_nodes, dtype=np.int64)
    for b, graph in enumerate(graphs):
        size = len(graph.node_ids)
        gather[b, :size] = np.arange(offsets[b], offsets[b] + size)

    def as_ids(values):
        return np.asarray(values, dtype=np.int64)

    return GraphPack(
        as_ids(node_ids), num_nodes,
        as_ids(in_owner), as_ids(in_other), as_ids(in_labels),
        as_ids(out_owner), as_ids(out_other), as_ids(out_labels),
        gather, gather != num_nodes)


def edge_repr(label_ids, source_node_ids, params):
    """Edge inputs ``[e_label; e_source] @ W4 + b4``, one row per edge.

    Args:
        label_ids (Sequence[int]): Edge label ids.
        source_node_ids (Sequence[int]): Concept ids of the edge sources.
        params (Mapping[str, Tensor]): Holds ``grn.edge_embed``,
            ``grn.node_embed``, ``grn.W4`` and ``grn.b4``.
    """
    joined = nx.concat([
        nx.embedding_lookup(params['grn.edge_embed'], label_ids),
        nx.embedding_lookup(params['grn.node_embed'], source_node_ids),
    ], axis=-1)
    return joined @ params['grn.W4'] + params['grn.b4']


def edge_inputs(pack, params):
    """Summed incoming and outgoing edge inputs per node.

    Incoming entries of node j come from their source node; outgoing entries
    have j itself as the source.
    """
    incoming = edge_repr(pack.in_labels, pack.node_ids[pack.in_other], params)
    outgoing = edge_repr(pack.out_labels, pack.node_ids[pack.out_owner],
                         params)
    return (nx.segment_sum(incoming, pack.in_owner, pack.num_nodes),
            nx.segment_sum(outgoing, pack.out_owner, pack.num_nodes))


def grn_step(state, inputs, pack, params, candidate='sigmoid'):
    """One simultaneous state transition of every node.

    Args:
        state (GraphState): Node states and cells after the previous step.
        inputs (Tuple[Tensor, Tensor]): Incoming and outgoing edge sums from
            :func:`edge_inputs`.
        pack (GraphPack): Adjacency of the batch.
        params (Mapping[str, Tensor]): The ``grn.*`` gate parameters.
        candidate (str): Nonlinearity of the cell candidate, ``sigmoid`` or
            ``tanh``.

    Returns:
        GraphState: The next states, all computed from ``state``.
    """
    phi_in, phi_out = inputs
    psi_in = nx.segment_sum(nx.embedding_lookup(state.a, pack.in_other),
                            pack.in_owner, pack.num_nodes)
    psi_out = nx.segment_sum(nx.embedding_lookup(state.a, pack.out_other),
                             pack.out_owner, pack.num_nodes)
    z = (phi_in @ params['grn.W'] + phi_out @ params['grn.W_hat'] +
         psi_in @ params['grn.U'] + psi_out @ params['grn.U_hat'] +
         params['grn.b'])
    dim = state.a.shape[-1]
    i = nx.sigmoid(nx.slice_last(z, 0, dim))
    o = nx.sigmoid(nx.slice_last(z, dim, 2 * dim))
    f = nx.sigmoid(nx.slice_last(z, 2 * dim, 3 * dim))
    u = nx.unary(candidate, nx.slice_last(z, 3 * dim, 4 * dim))
    c = f * state.c + i * u
    return GraphState(o * nx.tanh(c), c)


def grn_encode(pack, params, steps, candidate='sigmoid'):
    """Runs ``steps`` transitions from all-zero states.

    Returns:
        Tensor: Final node states (num_nodes, graph_dim).

    Raises:
        EncoderError: If ``steps`` is below 1.
    """
    if steps < 1:
        raise EncoderError(_STEPS_MSG.format(steps))
    dim = params['grn.U'].shape[0]
    inputs = edge_inputs(pack, params)
    state = GraphState(nx.zeros((pack.num_nodes, dim)),
                       nx.zeros((pack.num_nodes, dim)))
    for _ in range(steps):
        state = grn_step(state, inputs, pack, params, candidate)
    return state.a


def graph_memory(node_states, pack):
    """Regroups flat node states into (B, max_nodes, graph_dim) rows."""
    padded = nx.concat([node_states, nx.zeros((1, node_states.shape[-1]))],
                       axis=0)
    return nx.embedding_lookup(padded, pack.gather)


def encode_sources(params, batch, config, training=False, rng=None):
    """Builds every attention memory ``config.mode`` uses for ``batch``.

    Dropout is applied to the memory rows when ``training`` is true.

    Returns:
        Memories: The memories and the boundary states.
    """
    states, boundary = bilstm_encode(batch.src_ids, batch.src_mask, params)
    states = nx.dropout(states, config.dropout, rng, training)
    graph_states = graph_mask = None
    if config.mode in config_lib.GRAPH_MODES:
        if not batch.graphs:
            raise EncoderError(_NO_GRAPHS_MSG.format(config.mode))
        pack = pack_graphs(batch.graphs)
        nodes = grn_encode(pack, params, config.transition_steps,
                           config.grn_candidate)
        nodes = nx.dropout(nodes, config.dropout, rng, training)
        graph_states, graph_mask = graph_memory(nodes, pack), pack.mask
    elif config.mode == config_lib.DUAL2SEQ_LINAMR:
        if batch.lin_ids is None:
            raise EncoderError(_NO_GRAPHS_MSG.format(config.mode))
        graph_states, _ = bilstm_encode(batch.lin_ids, batch.lin_mask,
                                        params, prefix='lin')
        graph_states = nx.dropout(graph_states, config.dropout, rng, training)
        graph_mask = batch.lin_mask
    return Memories(states, np.asarray(batch.src_mask, dtype=bool), boundary,
                    graph_states, graph_mask)
