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


"""Deterministic synthetic English-German corpus with matching AMRs.

Sentences come from a handful of templates covering transitive and
intransitive clauses, control verbs (whose AMRs reuse the subject variable),
named entities (string constants) and negation (a symbol constant). Also
holds three hand-written AMRs of real news sentences as PENMAN fixtures.
"""

import collections
import io
import os

import numpy as np

from amr_nmt.nmt import amr
from amr_nmt.nmt import config as config_lib
from amr_nmt.nmt import data

Pair = collections.namedtuple('Pair', ['src', 'tgt', 'amr'])
CorpusFiles = collections.namedtuple('CorpusFiles', ['src', 'tgt', 'amr'])

# english, german nominative, german accusative, concept
NOUNS = [
    ('boy', 'der Junge', 'den Jungen', 'boy'),
    ('girl', 'das Mädchen', 'das Mädchen', 'girl'),
    ('cat', 'die Katze', 'die Katze', 'cat'),
    ('dog', 'der Hund', 'den Hund', 'dog'),
    ('teacher', 'der Lehrer', 'den Lehrer', 'teacher'),
    ('doctor', 'die Ärztin', 'die Ärztin', 'doctor'),
]

# english third person, english infinitive, german finite, german
# infinitive, frame
TRANSITIVE = [
    ('sees', 'see', 'sieht', 'sehen', 'see-01'),
    ('likes', 'like', 'mag', 'mögen', 'like-01'),
    ('visits', 'visit', 'besucht', 'besuchen', 'visit-01'),
    ('finds', 'find', 'findet', 'finden', 'find-01'),
]

INTRANSITIVE = [
    ('sleeps', 'schläft', 'sleep-01'),
    ('runs', 'läuft', 'run-02'),
    ('laughs', 'lacht', 'laugh-01'),
]

NAMES = ['Anna', 'Peter', 'Maria', 'Jonas']

CASE_STUDY_AMRS = [
    """(s2 / say-01
       :ARG0 (p3 / person
             :ARG1-of (h / have-rel-role-91
                   :ARG0 (p / person
                         :ARG1-of (m2 / meet-03
                               :ARG0 (t / they)
                               :ARG2 15)
                         :mod (m / mutual))
                   :ARG2 (f / friend))
             :name (n2 / name
                   :op1 "Carla"
                   :op2 "Hairston"))
       :ARG1 (a / and
             :op1 (p2 / person
                   :name (n / name
                         :op1 "Lamb")))
       :ARG2 (s / she)
       :time 20)""",
    """(s / say-01
       :ARG0 (m / media
             :ARG1-of (l / local-02))
       :ARG1 (c2 / come-01
             :ARG1 (v / vehicle
                   :mod (p / police))
             :manner (c3 / constant)
             :path (a / across
                   :op1 (r / refugee
                         :mod (n2 / new)))
             :time (s2 / since
                   :op1 (t3 / then))
             :topic (t / thing
                   :name (n / name
                         :op1 (c / Croatian)
                         :op2 (t2 / Tavarnik)))))""",
    """(b2 / breed-01
       :ARG0 (p2 / person
             :ARG0-of (h / have-org-role-91
                   :ARG2 (s3 / scientist)))
       :ARG1 (w2 / worm)
       :ARG2 (s2 / system
             :ARG1-of (c / control-01
                   :ARG0 (b / burst-01
                         :ARG1 (w / wave
                               :mod (s / sound)))
                   :ARG1-of (p / possible-01))
             :ARG1-of (n / nervous-01)
             :mod (m / modify-01
                   :ARG1 (g / genetics))))""",
]

REENTRANT_AMR = ('(w / want-01 :ARG0 (b / boy) '
                 ':ARG1 (g / go-01 :ARG0 b :polarity -))')


def _capitalize(text):
    return text[0].upper() + text[1:]


def _transitive(subject, verb, obj):
    return Pair(
        'the {} {} the {} .'.format(subject[0], verb[0], obj[0]),
        '{} {} {} .'.format(_capitalize(subject[1]), verb[2], obj[2]),
        '(x0 / {} :ARG0 (x1 / {}) :ARG1 (x2 / {}))'.format(
            verb[4], subject[3], obj[3]))


def _intransitive(subject, verb):
    return Pair(
        'the {} {} .'.format(subject[0], verb[0]),
        '{} {} .'.format(_capitalize(subject[1]), verb[1]),
        '(x0 / {} :ARG0 (x1 / {}))'.format(verb[2], subject[3]))


def _control(subject, verb, obj):
    return Pair(
        'the {} wants to {} the {} .'.format(subject[0], verb[1], obj[0]),
        '{} will {} {} .'.format(_capitalize(subject[1]), obj[2], verb[3]),
        '(x0 / want-01 :ARG0 (x1 / {}) :ARG1 (x2 / {} :ARG0 x1 '
        ':ARG1 (x3 / {})))'.format(subject[3], verb[4], obj[3]))


def _named(name, verb, obj):
    return Pair(
        '{} {} the {} .'.format(name, verb[0], obj[0]),
        '{} {} {} .'.format(name, verb[2], obj[2]),
        '(x0 / {} :ARG0 (x1 / person :name (x2 / name :op1 "{}")) '
        ':ARG1 (x3 / {}))'.format(verb[4], name, obj[3]))


def _negated(subject, verb, obj):
    return Pair(
        'the {} does not {} the {} .'.format(subject[0], verb[1], obj[0]),
        '{} {} {} nicht .'.format(_capitalize(subject[1]), verb[2], obj[2]),
        '(x0 / {} :polarity - :ARG0 (x1 / {}) :ARG1 (x2 / {}))'.format(
            verb[4], subject[3], obj[3]))


def generate_corpus(n, seed=0):
    """Draws ``n`` sentence triples.

    Returns:
        List[Pair]: Tokenized English, tokenized German and PENMAN text.
    """
    rng = np.random.default_rng(seed)

    def pick(items):
        return items[int(rng.integers(len(items)))]

    pairs = []
    for _ in range(n):
        template = int(rng.integers(5))
        subject, obj = pick(NOUNS), pick(NOUNS)
        if template == 0:
            pairs.append(_transitive(subject, pick(TRANSITIVE), obj))
        elif template == 1:
            pairs.append(_intransitive(subject, pick(INTRANSITIVE)))
        elif template == 2:
            pairs.append(_control(subject, pick(TRANSITIVE), obj))
        elif template == 3:
            pairs.append(_named(pick(NAMES), pick(TRANSITIVE), obj))
        else:
            pairs.append(_negated(subject, pick(TRANSITIVE), obj))
    return pairs


def write_corpus(directory, n, seed=0, prefix='train'):
    """Writes ``prefix.en``, ``prefix.de`` and ``prefix.amr``.

    AMRs are separated by blank lines, one block per sentence.

    Returns:
        CorpusFiles: The three paths.
    """
    pairs = generate_corpus(n, seed)
    files = CorpusFiles(*[os.path.join(directory, prefix + suffix)
                          for suffix in ('.en', '.de', '.amr')])
    for path, lines, separator in ((files.src, [p.src for p in pairs], u'\n'),
                                   (files.tgt, [p.tgt for p in pairs], u'\n'),
                                   (files.amr, [p.amr for p in pairs],
                                    u'\n\n')):
        with io.open(path, 'w', encoding='utf-8') as fh:
            fh.write(separator.join(lines) + u'\n')
    return files


def toy_examples(n, seed=0):
    """Synthetic pairs as word-level examples with parsed AMRs."""
    return [data.ParallelExample(pair.src.split(), pair.tgt.split(),
                                 amr.parse_penman(pair.amr))
            for pair in generate_corpus(n, seed)]


def toy_vocabularies(examples, mode, max_size=1000):
    """Untruncated vocabularies over ``examples`` for ``mode``."""
    graph = None
    if mode != config_lib.SEQ2SEQ:
        graph = data.build_graph_vocab(examples, mode, max_size)
    return data.Vocabularies(
        data.build_vocab([t for ex in examples for t in ex.src_tokens],
                         max_size),
        data.build_vocab([t for ex in examples for t in ex.tgt_tokens],
                         max_size),
        graph)
