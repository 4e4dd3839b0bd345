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


"""Corpus BLEU on tokenized text, with a breakdown by source length."""

import collections
import logging
import math
import re

from amr_nmt.nmt import data
from amr_nmt.nmt.exceptions import NmtError

logger = logging.getLogger(__name__)

DEFAULT_BUCKETS = '1-10,11-20,21-30,31+'

_LINE_COUNT_MSG = '{} candidate line(s) but {} reference line(s).'
_BUCKET_SYNTAX_MSG = 'Cannot read length bucket {!r}; expected N-M or N+.'
_BUCKET_GAP_MSG = 'Length buckets must start at 1 and be contiguous; {!r} {}.'
_BUCKET_OPEN_MSG = 'The last length bucket must be open-ended, like 31+.'
_BUCKET_RE = re.compile(r'^(\d+)(?:-(\d+)|(\+))$')


class MetricsError(NmtError):
    """Raised for misaligned inputs or invalid length buckets."""


BleuReport = collections.namedtuple('BleuReport', [
    'bleu', 'precisions', 'brevity_penalty', 'candidate_length',
    'reference_length', 'matches', 'totals',
])
BleuReport.__doc__ = """Corpus BLEU on the 0-100 scale and its ingredients.

``matches[n-1]`` and ``totals[n-1]`` are the clipped and total n-gram
counts behind ``precisions``.
"""

Bucket = collections.namedtuple('Bucket', ['label', 'low', 'high'])


def ngrams(tokens, n):
    return collections.Counter(
        tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _report(matches, totals, candidate_length, reference_length):
    precisions = tuple(m / float(t) if t else 0.0
                       for m, t in zip(matches, totals))
    if candidate_length == 0:
        brevity_penalty = 0.0
    elif candidate_length > reference_length:
        brevity_penalty = 1.0
    else:
        brevity_penalty = math.exp(
            1.0 - reference_length / float(candidate_length))
    if min(precisions) > 0.0:
        log_mean = math.fsum(math.log(p) for p in precisions) / len(precisions)
        score = 100.0 * brevity_penalty * math.exp(log_mean)
    else:
        score = 0.0
    return BleuReport(score, precisions, brevity_penalty, candidate_length,
                      reference_length, tuple(matches), tuple(totals))


def bleu(candidates, references, max_n=4):
    """Corpus BLEU with clipped n-gram precisions and a brevity penalty.

    Args:
        candidates (Sequence[Sequence[str]]): Tokenized system outputs.
        references (Sequence[Sequence[str]]): One tokenized reference each.
        max_n (int): Longest n-gram order.

    Returns:
        BleuReport: Matching is case-sensitive; no smoothing is applied.

    Raises:
        MetricsError: If the two sides have different line counts.
    """
    if len(candidates) != len(references):
        raise MetricsError(
            _LINE_COUNT_MSG.format(len(candidates), len(references)))
    matches = [0] * max_n
    totals = [0] * max_n
    candidate_length = reference_length = 0
    for candidate, reference in zip(candidates, references):
        candidate, reference = list(candidate), list(reference)
        candidate_length += len(candidate)
        reference_length += len(reference)
        for n in range(1, max_n + 1):
            counts = ngrams(candidate, n)
            reference_counts = ngrams(reference, n)
            matches[n - 1] += sum(min(count, reference_counts[gram])
                                  for gram, count in counts.items())
            totals[n - 1] += sum(counts.values())
    return _report(matches, totals, candidate_length, reference_length)


def parse_buckets(text=DEFAULT_BUCKETS):
    """Reads buckets such as ``"1-10,11-20,21-30,31+"``.

    Raises:
        MetricsError: Unless the buckets cover every positive length
            exactly once, in increasing order.
    """
    buckets = []
    expected = 1
    for part in [p.strip() for p in text.split(',')]:
        match = _BUCKET_RE.match(part)
        if not match:
            raise MetricsError(_BUCKET_SYNTAX_MSG.format(part))
        if buckets and buckets[-1].high is None:
            raise MetricsError(_BUCKET_GAP_MSG.format(
                part, 'follows an open-ended bucket'))
        low = int(match.group(1))
        high = None if match.group(3) else int(match.group(2))
        if low != expected:
            reason = 'overlaps' if low < expected else 'leaves a gap'
            raise MetricsError(_BUCKET_GAP_MSG.format(part, reason))
        if high is not None and high < low:
            raise MetricsError(_BUCKET_SYNTAX_MSG.format(part))
        buckets.append(Bucket(part, low, high))
        expected = None if high is None else high + 1
    if not buckets or buckets[-1].high is not None:
        raise MetricsError(_BUCKET_OPEN_MSG)
    return buckets


def _bucket_of(length, buckets):
    for bucket in buckets:
        if length >= bucket.low and (bucket.high is None or
                                     length <= bucket.high):
            return bucket
    return buckets[0]


def bucketed_bleu(candidates, references, source_lengths, buckets):
    """BLEU per source-length bucket.

    Returns:
        OrderedDict[str, Optional[BleuReport]]: Reports by bucket label;
        ``None`` for buckets without sentences.
    """
    if len(source_lengths) != len(candidates):
        raise MetricsError(
            _LINE_COUNT_MSG.format(len(candidates), len(source_lengths)))
    grouped = collections.OrderedDict(
        (bucket.label, ([], [])) for bucket in buckets)
    for candidate, reference, length in zip(candidates, references,
                                            source_lengths):
        cands, refs = grouped[_bucket_of(length, buckets).label]
        cands.append(candidate)
        refs.append(reference)
    return collections.OrderedDict(
        (label, bleu(cands, refs) if cands else None)
        for label, (cands, refs) in grouped.items())


def combine(reports):
    """Corpus BLEU of the union of the sentences behind ``reports``."""
    reports = [r for r in reports if r is not None]
    max_n = len(reports[0].matches)
    return _report(
        [sum(r.matches[n] for r in reports) for n in range(max_n)],
        [sum(r.totals[n] for r in reports) for n in range(max_n)],
        sum(r.candidate_length for r in reports),
        sum(r.reference_length for r in reports))


def format_report(report):
    ratio = (report.candidate_length / float(report.reference_length)
             if report.reference_length else 0.0)
    return 'BLEU = {:.2f}, {} (BP={:.3f}, ratio={:.3f}, hyp_len={}, ' \
        'ref_len={})'.format(
            report.bleu,
            '/'.join('{:.1f}'.format(100.0 * p) for p in report.precisions),
            report.brevity_penalty, ratio, report.candidate_length,
            report.reference_length)


def _tokenized(path):
    return [data.strip_bpe(line).split() for line in data.read_lines(path)]


def evaluate_command(args):
    """Scores a hypothesis file against references with corpus BLEU."""
    candidates = _tokenized(args.hyp)
    references = _tokenized(args.ref)
    print(format_report(bleu(candidates, references)))
    if args.length_buckets is None:
        return
    if not args.src:
        raise MetricsError('--length-buckets needs --src for the lengths.')
    lengths = [len(tokens) for tokens in _tokenized(args.src)]
    reports = bucketed_bleu(candidates, references, lengths,
                            parse_buckets(args.length_buckets))
    for label, report in reports.items():
        if report is None:
            print('{}\t-'.format(label))
        else:
            print('{}\t{}'.format(label, format_report(report)))


def register_commands(subparsers):
    evaluate_parser = subparsers.add_parser(
        'evaluate', help=evaluate_command.__doc__)
    evaluate_parser.set_defaults(func=evaluate_command)
    evaluate_parser.add_argument('--hyp', required=True,
                                 help='System output, one sentence a line.')
    evaluate_parser.add_argument('--ref', required=True,
                                 help='References aligned with --hyp.')
    evaluate_parser.add_argument('--src',
                                 help='Sources, for --length-buckets.')
    evaluate_parser.add_argument(
        '--length-buckets', nargs='?', const=DEFAULT_BUCKETS, default=None,
        help='Report BLEU per source length bucket (default {}).'.format(
            DEFAULT_BUCKETS))
