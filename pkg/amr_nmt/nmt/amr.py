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


"""AMR graphs: PENMAN parsing and writing, linearization, chain graphs and
capped adjacency lists for the graph encoder."""

import collections
import io
import logging
import re

import penman
from penman.tree import Tree

from amr_nmt.nmt.exceptions import NmtError

logger = logging.getLogger(__name__)

CONCEPT = 'concept'
STRING_CONSTANT = 'string-constant'
NUMERIC_CONSTANT = 'numeric-constant'
SYMBOL_CONSTANT = 'symbol-constant'
NEXT_LABEL = ':next'

_NUMERIC_RE = re.compile(r'^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$')
_VARIABLE_RE = re.compile(r'^[a-z]\d*$')
_NODE_START_RE = re.compile(r'\s*([^\s()/:"]+)\s*(.?)')

_UNBALANCED_MSG = 'unbalanced parentheses'
_UNCLOSED_MSG = 'unclosed parenthesis'
_MISSING_SLASH_MSG = "missing '/' after variable {!r}"
_TRAILING_MSG = 'unexpected text after the top-level node'
_EMPTY_MSG = 'no PENMAN expression found'
_UNDEFINED_MSG = 'reference to undefined variable {!r}'
_UNTERMINATED_MSG = 'unterminated string constant'


class AmrError(NmtError):
    """Raised for invalid graph operations."""


class AmrParseError(AmrError):
    """Raised for malformed PENMAN text.

    Attributes:
        offset (int): Byte offset (UTF-8) of the offending position.
    """

    def __init__(self, message, offset):
        super(AmrParseError, self).__init__(
            '{} at byte {}'.format(message, offset))
        self.offset = offset


Node = collections.namedtuple('Node', ['label', 'kind'])
Edge = collections.namedtuple('Edge', ['src', 'tgt', 'label'])
AmrGraph = collections.namedtuple('AmrGraph', ['nodes', 'edges', 'root'])
AmrGraph.__doc__ = """A rooted, directed, labeled graph.

Nodes are listed in order of first mention in the PENMAN text; a re-used
variable adds an edge to the existing node instead of a new node. Edge
direction follows the text, so ``:ARG0-of`` edges are kept as written.
"""

Adjacency = collections.namedtuple(
    'Adjacency', ['incoming', 'outgoing', 'dropped'])
Adjacency.__doc__ = """Per-node neighbor lists after capping.

``incoming[j]`` holds ``(source, label)`` pairs and ``outgoing[j]`` holds
``(target, label)`` pairs, both in edge order. ``dropped`` counts the
incident edge slots removed by the cap.
"""


def _byte_offset(text, index):
    return len(text[:index].encode('utf-8'))


def _blank_comments(text):
    """Replaces ``#`` comment lines by spaces so offsets are preserved."""
    lines = text.split('\n')
    return '\n'.join(
        ' ' * len(line) if line.lstrip().startswith('#') else line
        for line in lines)


def _scan(text):
    """Checks parenthesis balance and variable/concept syntax.

    penman recovers from several of these mistakes silently, so they are
    caught here with exact positions.
    """
    depth = 0
    opened = []
    closed_at = None
    i = 0
    n = len(text)
    while i < n:
        char = text[i]
        if char == '"':
            end = i + 1
            while end < n and text[end] != '"':
                end += 2 if text[end] == '\\' else 1
            if end >= n:
                raise AmrParseError(_UNTERMINATED_MSG, _byte_offset(text, i))
            i = end + 1
            continue
        if closed_at is not None and not char.isspace():
            raise AmrParseError(_TRAILING_MSG, _byte_offset(text, i))
        if char == '(':
            depth += 1
            opened.append(i)
            match = _NODE_START_RE.match(text, i + 1)
            if match and match.group(1) and match.group(2) != '/':
                raise AmrParseError(
                    _MISSING_SLASH_MSG.format(match.group(1)),
                    _byte_offset(text, match.start(1)))
        elif char == ')':
            depth -= 1
            if depth < 0:
                raise AmrParseError(_UNBALANCED_MSG, _byte_offset(text, i))
            opened.pop()
            if depth == 0:
                closed_at = i
        i += 1
    if depth > 0:
        raise AmrParseError(_UNCLOSED_MSG, _byte_offset(text, opened[-1]))
    if closed_at is None:
        raise AmrParseError(_EMPTY_MSG, 0)


def _constant(value):
    if value.startswith('"'):
        return Node(value[1:-1].replace('\\"', '"'), STRING_CONSTANT)
    if _NUMERIC_RE.match(value):
        return Node(value, NUMERIC_CONSTANT)
    return Node(value, SYMBOL_CONSTANT)


def _decode_error_offset(text, error):
    lineno = getattr(error, 'lineno', None)
    column = getattr(error, 'offset', None) or 0
    if not lineno:
        return 0
    lines = text.split('\n')
    index = sum(len(line) + 1 for line in lines[:lineno - 1]) + column
    return _byte_offset(text, min(index, len(text)))


def parse_penman(text, strict=False):
    """Parses one PENMAN expression into an :class:`AmrGraph`.

    Args:
        text (str): A single AMR, on one or several lines. ``#`` comment
            lines are ignored.
        strict (bool): Reject bare targets that look like variables
            (a letter plus optional digits) but are never defined.

    Returns:
        AmrGraph: The parsed graph, rooted at node 0.

    Raises:
        AmrParseError: On unbalanced parentheses, a missing ``/`` after a
            fresh variable, or (in strict mode) an undefined variable.
    """
    text = _blank_comments(text)
    _scan(text)
    try:
        tree = penman.parse(text)
    except penman.DecodeError as error:
        raise AmrParseError(str(error).splitlines()[-1].strip(),
                            _decode_error_offset(text, error))

    defined = set(var for var, _ in tree.nodes())
    nodes = []
    edges = []
    index = {}

    def register(var):
        if var not in index:
            index[var] = len(nodes)
            nodes.append(Node(None, CONCEPT))
        return index[var]

    def expand(node):
        var, branches = node
        j = index[var]
        concept = [target for role, target in branches if role == '/']
        if nodes[j].label is None:
            nodes[j] = Node(concept[0] if concept else None, CONCEPT)
        for role, target in branches:
            if role == '/':
                continue
            if isinstance(target, tuple):
                k = register(target[0])
                edges.append(Edge(j, k, role))
                expand(target)
            elif target in defined:
                edges.append(Edge(j, register(target), role))
            else:
                if strict and _VARIABLE_RE.match(target):
                    found = re.search(
                        r'(?<=\s){}(?=[\s)])'.format(re.escape(target)), text)
                    raise AmrParseError(
                        _UNDEFINED_MSG.format(target),
                        _byte_offset(text, found.start() if found else 0))
                edges.append(Edge(j, len(nodes), role))
                nodes.append(_constant(target))

    register(tree.node[0])
    expand(tree.node)
    return AmrGraph(tuple(nodes), tuple(edges), 0)


def iter_amr_blocks(text):
    """Yields the PENMAN expressions in ``text``.

    Expressions may span several lines (separated by blank lines) or sit
    one per line; ``#`` lines are skipped.
    """
    buffer = []
    depth = 0
    for line in io.StringIO(text):
        stripped = line.strip()
        if not stripped or stripped.startswith('#'):
            continue
        buffer.append(line)
        depth += _depth_change(line)
        if depth <= 0:
            block = ''.join(buffer).strip()
            if block:
                yield block
            buffer = []
            depth = 0
    if buffer:
        yield ''.join(buffer).strip()


def _depth_change(line):
    delta = 0
    in_string = False
    previous = ''
    for char in line:
        if char == '"' and previous != '\\':
            in_string = not in_string
        elif not in_string:
            if char == '(':
                delta += 1
            elif char == ')':
                delta -= 1
        previous = char
    return delta


def read_amr_file(path, strict=False):
    """Reads every AMR in a UTF-8 PENMAN file, in file order."""
    with io.open(path, 'r', encoding='utf-8') as fh:
        return [parse_penman(block, strict=strict)
                for block in iter_amr_blocks(fh.read())]


def _outgoing(graph):
    children = [[] for _ in graph.nodes]
    for edge in graph.edges:
        children[edge.src].append(edge)
    return children


def _variable_names(graph, order):
    reserved = set(n.label for n in graph.nodes if n.kind == SYMBOL_CONSTANT)
    counts = collections.Counter()
    names = {}
    for j in order:
        label = graph.nodes[j].label or 'x'
        letter = label[0].lower() if label[0].isalpha() else 'x'
        while True:
            counts[letter] += 1
            name = letter if counts[letter] == 1 else '{}{}'.format(
                letter, counts[letter])
            if name not in reserved:
                break
        names[j] = name
    return names


def _atom(node):
    if node.kind == STRING_CONSTANT:
        return '"{}"'.format(node.label.replace('"', '\\"'))
    return node.label


def serialize(graph):
    """Writes ``graph`` as canonical single-line PENMAN text.

    Concept nodes get fresh variables in depth-first order; a concept met
    again is written as a variable reference.

    Raises:
        AmrError: If some concept node is unreachable from the root.
    """
    children = _outgoing(graph)
    order = []
    seen = set()

    def collect(j):
        seen.add(j)
        order.append(j)
        for edge in children[j]:
            target = graph.nodes[edge.tgt]
            if target.kind == CONCEPT and edge.tgt not in seen:
                collect(edge.tgt)

    collect(graph.root)
    concepts = [j for j, n in enumerate(graph.nodes) if n.kind == CONCEPT]
    if len(order) != len(concepts):
        raise AmrError('Cannot serialize: {} concept node(s) unreachable '
                       'from the root.'.format(len(concepts) - len(order)))
    names = _variable_names(graph, order)
    visited = set()

    def build(j):
        visited.add(j)
        branches = [('/', graph.nodes[j].label)]
        for edge in children[j]:
            target = graph.nodes[edge.tgt]
            if target.kind != CONCEPT:
                branches.append((edge.label, _atom(target)))
            elif edge.tgt in visited:
                branches.append((edge.label, names[edge.tgt]))
            else:
                branches.append((edge.label, build(edge.tgt)))
        return (names[j], branches)

    return penman.format(Tree(build(graph.root)), indent=None)


def linearize(graph):
    """Depth-first token sequence of ``graph`` without variables.

    Nodes with children are wrapped in parentheses; leaves and revisited
    (reentrant) nodes contribute only their label.
    """
    children = _outgoing(graph)
    visited = set()

    def walk(j):
        visited.add(j)
        label = graph.nodes[j].label
        if not children[j]:
            return [label]
        tokens = ['(', label]
        for edge in children[j]:
            tokens.append(edge.label)
            if edge.tgt in visited:
                tokens.append(graph.nodes[edge.tgt].label)
            else:
                tokens.extend(walk(edge.tgt))
        tokens.append(')')
        return tokens

    return walk(graph.root)


def delinearize(tokens):
    """Rebuilds a tree-shaped graph from :func:`linearize` output.

    Reentrant references come back as separate leaf nodes, and every node
    is typed as a concept since linearized text carries no kinds.
    """
    nodes = []
    edges = []
    position = [0]

    def read():
        token = tokens[position[0]]
        position[0] += 1
        j = len(nodes)
        if token != '(':
            nodes.append(Node(token, CONCEPT))
            return j
        nodes.append(Node(tokens[position[0]], CONCEPT))
        position[0] += 1
        while tokens[position[0]] != ')':
            label = tokens[position[0]]
            position[0] += 1
            edges.append(Edge(j, None, label))
            slot = len(edges) - 1
            k = read()
            edges[slot] = Edge(j, k, label)
        position[0] += 1
        return j

    if not tokens:
        raise AmrError('Cannot delinearize an empty token list.')
    read()
    return AmrGraph(tuple(nodes), tuple(edges), 0)


def chain_graph(tokens):
    """Links ``tokens`` left to right with ``:next`` edges.

    Raises:
        AmrError: If ``tokens`` is empty.
    """
    if not tokens:
        raise AmrError('A chain graph needs at least one token.')
    nodes = tuple(Node(token, CONCEPT) for token in tokens)
    edges = tuple(Edge(i, i + 1, NEXT_LABEL) for i in range(len(tokens) - 1))
    return AmrGraph(nodes, edges, 0)


def adjacency(graph, max_neighbors, label_ids=None):
    """Groups edges into capped incoming and outgoing lists per node.

    When a node has more than ``max_neighbors`` incident edges the earliest
    ones are kept, incoming edges before outgoing ones.

    Args:
        graph (AmrGraph): The graph.
        max_neighbors (int): Cap on incoming plus outgoing entries per node.
        label_ids (Optional[Callable[[str], int]]): Maps edge labels to ids;
            labels are kept as strings when omitted.

    Returns:
        Adjacency: The capped lists and the number of dropped entries.
    """
    if max_neighbors < 1:
        raise AmrError('max_neighbors must be at least 1, got {}.'
                       .format(max_neighbors))
    encode = label_ids or (lambda label: label)
    incoming = [[] for _ in graph.nodes]
    outgoing = [[] for _ in graph.nodes]
    for edge in graph.edges:
        label = encode(edge.label)
        incoming[edge.tgt].append((edge.src, label))
        outgoing[edge.src].append((edge.tgt, label))

    dropped = 0
    for j in range(len(graph.nodes)):
        total = len(incoming[j]) + len(outgoing[j])
        if total > max_neighbors:
            dropped += total - max_neighbors
            incoming[j] = incoming[j][:max_neighbors]
            outgoing[j] = outgoing[j][:max_neighbors - len(incoming[j])]
    if dropped:
        logger.debug('Adjacency cap %d dropped %d edge slot(s).',
                     max_neighbors, dropped)
    return Adjacency(tuple(tuple(x) for x in incoming),
                     tuple(tuple(x) for x in outgoing), dropped)
