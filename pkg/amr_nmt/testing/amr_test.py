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
Unit tests for amr.py
"""

import pytest

from amr_nmt.nmt import amr
from amr_nmt.testing import synthetic

WANT = '(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-01 :ARG0 b))'


def _node_edge_sets(graph):
    return (graph.nodes,
            sorted((e.src, e.tgt, e.label) for e in graph.edges))


def test_parse_merges_reentrant_variables():
    graph = amr.parse_penman(WANT)
    assert [n.label for n in graph.nodes] == ['want-01', 'boy', 'go-01']
    assert graph.edges == (
        amr.Edge(0, 1, ':ARG0'),
        amr.Edge(0, 2, ':ARG1'),
        amr.Edge(2, 1, ':ARG0'),
    )
    assert graph.root == 0


def test_parse_types_constants():
    graph = amr.parse_penman(
        '(p / person :name (n / name :op1 "Anna") :age 15 :polarity -)')
    assert graph.nodes == (
        amr.Node('person', amr.CONCEPT),
        amr.Node('name', amr.CONCEPT),
        amr.Node('Anna', amr.STRING_CONSTANT),
        amr.Node('15', amr.NUMERIC_CONSTANT),
        amr.Node('-', amr.SYMBOL_CONSTANT),
    )


def test_parse_keeps_inverted_roles_as_written():
    graph = amr.parse_penman('(b / boy :ARG0-of (w / want-01))')
    assert graph.edges == (amr.Edge(0, 1, ':ARG0-of'),)


def test_parse_ignores_comment_lines():
    graph = amr.parse_penman('# ::snt The boy.\n(b / boy)')
    assert graph.nodes == (amr.Node('boy', amr.CONCEPT),)


@pytest.mark.parametrize("text,offset", [
    ("(a / b", 0),
    ("(a / b))", 7),
    ("(a b)", 1),
    ("(a / b) x", 8),
    ("(ä / x :ARG0 (b c))", 15),
    ('(a / b :name "Anna)', 13),
])
def test_parse_errors_report_byte_offsets(text, offset):
    with pytest.raises(amr.AmrParseError) as excinfo:
        amr.parse_penman(text)
    assert excinfo.value.offset == offset


def test_strict_mode_rejects_undefined_variables():
    text = '(a / want-01 :ARG0 b)'
    with pytest.raises(amr.AmrParseError) as excinfo:
        amr.parse_penman(text, strict=True)
    assert excinfo.value.offset == 19
    lenient = amr.parse_penman(text)
    assert lenient.nodes[1] == amr.Node('b', amr.SYMBOL_CONSTANT)


@pytest.mark.parametrize(
    "text",
    synthetic.CASE_STUDY_AMRS + [synthetic.REENTRANT_AMR] +
    [pair.amr for pair in synthetic.generate_corpus(20, seed=5)])
def test_serialize_round_trip(text):
    graph = amr.parse_penman(text)
    again = amr.parse_penman(amr.serialize(graph))
    assert _node_edge_sets(again) == _node_edge_sets(graph)


def test_serialize_is_single_line():
    graph = amr.parse_penman('(b / boy\n   :ARG0-of (w / want-01))')
    assert amr.serialize(graph) == '(b / boy :ARG0-of (w / want-01))'


def test_serialize_rejects_unreachable_concepts():
    graph = amr.AmrGraph(
        (amr.Node('a', amr.CONCEPT), amr.Node('b', amr.CONCEPT)), (), 0)
    with pytest.raises(amr.AmrError):
        amr.serialize(graph)


def test_iter_amr_blocks_handles_both_layouts():
    text = ('# ::id 1\n'
            '(a / alpha\n'
            '   :ARG0 (b / beta))\n'
            '\n'
            '(c / gamma)\n'
            '(d / delta :name (n / name :op1 "x(y"))\n')
    blocks = list(amr.iter_amr_blocks(text))
    assert blocks == [
        '(a / alpha\n   :ARG0 (b / beta))',
        '(c / gamma)',
        '(d / delta :name (n / name :op1 "x(y"))',
    ]


def test_read_amr_file(tmp_path):
    path = tmp_path / 'sample.amr'
    path.write_text(u'\n\n'.join(synthetic.CASE_STUDY_AMRS) + u'\n',
                    encoding='utf-8')
    graphs = amr.read_amr_file(str(path))
    assert [g.nodes[0].label for g in graphs] == [
        'say-01', 'say-01', 'breed-01']


def test_linearize_drops_variables_and_repeats_reentrancies():
    tokens = amr.linearize(amr.parse_penman(WANT))
    assert tokens == ['(', 'want-01', ':ARG0', 'boy', ':ARG1',
                      '(', 'go-01', ':ARG0', 'boy', ')', ')']


def test_delinearize_inverts_linearize_on_trees():
    graph = amr.parse_penman(synthetic.CASE_STUDY_AMRS[2])
    rebuilt = amr.delinearize(amr.linearize(graph))
    assert [n.label for n in rebuilt.nodes] == [n.label for n in graph.nodes]
    assert rebuilt.edges == graph.edges


def test_chain_graph():
    graph = amr.chain_graph(['a', 'b', 'c'])
    assert [n.label for n in graph.nodes] == ['a', 'b', 'c']
    assert graph.edges == (amr.Edge(0, 1, amr.NEXT_LABEL),
                           amr.Edge(1, 2, amr.NEXT_LABEL))


def test_chain_graph_rejects_empty_input():
    with pytest.raises(amr.AmrError):
        amr.chain_graph([])


def _star(outgoing, incoming=0):
    nodes = tuple(amr.Node('n{}'.format(i), amr.CONCEPT)
                  for i in range(1 + outgoing + incoming))
    edges = [amr.Edge(0, 1 + i, ':out{}'.format(i)) for i in range(outgoing)]
    edges += [amr.Edge(1 + outgoing + i, 0, ':in{}'.format(i))
              for i in range(incoming)]
    return amr.AmrGraph(nodes, tuple(edges), 0)


def test_adjacency_caps_neighbors_keeping_earliest():
    result = amr.adjacency(_star(8), 6)
    assert [label for _, label in result.outgoing[0]] == [
        ':out0', ':out1', ':out2', ':out3', ':out4', ':out5']
    assert result.dropped == 2
    assert result.incoming[1] == ((0, ':out0'),)


def test_adjacency_keeps_incoming_before_outgoing():
    result = amr.adjacency(_star(5, incoming=2), 6)
    assert len(result.incoming[0]) == 2
    assert len(result.outgoing[0]) == 4
    assert result.dropped == 1


def test_adjacency_maps_labels():
    graph = amr.chain_graph(['a', 'b'])
    result = amr.adjacency(graph, 6, label_ids=lambda label: 42)
    assert result.outgoing[0] == ((1, 42),)
    assert result.incoming[1] == ((0, 42),)
    assert result.incoming[0] == ()


def test_adjacency_rejects_nonpositive_cap():
    with pytest.raises(amr.AmrError):
        amr.adjacency(amr.chain_graph(['a']), 0)
