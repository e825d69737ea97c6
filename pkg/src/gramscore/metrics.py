"""Scoring metrics: fluency, truthfulness, helpfulness, and aggregation.

Responses are scored against a per-question :class:`~gramscore.ngram.ReferenceSet`:

* fluency sums the reference-set probability of every 1..10-gram of the
  response, applies the length discount, and divides by the set's
  calibrated normalizer (so the reference answers themselves average 1.0);
* truthfulness checks, per content character, whether any of the three
  width-3 windows around it reaches a minimum document frequency in the
  reference set, then takes the best discounted score over truncations;
* helpfulness is the weight fraction of satisfied keyword clauses, also
  maximized over truncations.

The final score of a response is the plain average of the three. All
functions here are pure; scoring the same inputs twice is bit-identical.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

from .errors import CalibrationError, ConfigError, ReportError
from .ngram import NGramTable, ReferenceSet, build_index
from .rules import RuleSet, eval_rule
from .textnorm import BOS, EOS, MAX_GRAM_WIDTH, NormalizedText, extract_grams

# Responses at or under this length score undiscounted; the discount then
# falls linearly to zero over the window.
FULL_SCORE_LENGTH = 100
DISCOUNT_WINDOW = 50

TRUTHFULNESS_THRESHOLD = 0.005


def discount(length: int) -> float:
    """Length discount in [0, 1]: 1 up to 100 characters, 0 from 150 on."""
    if length < 0:
        raise ValueError(f"length must be non-negative, got {length}")
    return max(0.0, 1.0 - max(length - FULL_SCORE_LENGTH, 0) / DISCOUNT_WINDOW)


def _truncation_candidates(length: int) -> range:
    if length <= FULL_SCORE_LENGTH:
        return range(length, length + 1)
    return range(FULL_SCORE_LENGTH, length + 1)


class RawFluency(NamedTuple):
    per_width: tuple[float, ...]
    total: float


def _text_of(text: NormalizedText | str) -> str:
    return text.text if isinstance(text, NormalizedText) else text


def fluency_raw(text: NormalizedText | str, table: NGramTable) -> RawFluency:
    """Undiscounted fluency: per indexed width, the sum of gram probabilities.

    The per-width sum is computed as an exact integer count sum over one
    division, which equals the sum of per-gram probabilities up to a final
    rounding and keeps batch scoring fast.
    """
    padded = BOS + _text_of(text) + EOS
    n = len(padded)
    per_width = []
    for w in table.widths:
        total = table.totals.get(w, 0)
        m = n - w + 1
        if not total or m <= 0:
            per_width.append(0.0)
            continue
        get = table.counts[w].get
        hits = sum(filter(None, map(get, [padded[i : i + w] for i in range(m)])))
        per_width.append(hits / total)
    return RawFluency(tuple(per_width), math.fsum(per_width))


def _loo_fluency_raw(text: NormalizedText | str, table: NGramTable) -> float:
    """Raw fluency with the text's own gram occurrences removed from the table."""
    padded = BOS + _text_of(text) + EOS
    n = len(padded)
    per_width = []
    for w in table.widths:
        m = n - w + 1
        if m <= 0:
            per_width.append(0.0)
            continue
        grams = [padded[i : i + w] for i in range(m)]
        own = Counter(grams)
        total = table.totals.get(w, 0) - m
        if total <= 0:
            per_width.append(0.0)
            continue
        get = table.counts[w].get
        probs = [c / total for g in grams if (c := get(g, 0) - own[g]) > 0]
        per_width.append(math.fsum(probs))
    return math.fsum(per_width)


def calibrate_fluency(
    answers: Iterable[NormalizedText | str],
    table: NGramTable,
    *,
    leave_one_out: bool = False,
) -> float:
    """Mean discounted raw fluency of the reference answers against their table.

    This is the normalizer that makes the reference set itself score 1.0 on
    average. With ``leave_one_out`` each answer is scored against the table
    minus its own occurrences (needs at least two answers to be meaningful).
    """
    values = []
    for answer in answers:
        length = len(_text_of(answer))
        if leave_one_out:
            raw = _loo_fluency_raw(answer, table)
        else:
            raw = fluency_raw(answer, table).total
        values.append(discount(length) * raw)
    if not values:
        raise CalibrationError("cannot calibrate an empty reference answer set")
    normalizer = math.fsum(values) / len(values)
    if normalizer <= 0:
        raise CalibrationError(
            "reference answers have zero discounted fluency; cannot normalize "
            "(are all answers longer than 150 characters, or the set too small for leave-one-out?)"
        )
    return normalizer


def build_reference_set(
    question_id: str,
    answers: list[NormalizedText],
    *,
    w_max: int = MAX_GRAM_WIDTH,
    leave_one_out: bool = False,
) -> ReferenceSet:
    """Index the answers and calibrate the fluency normalizer in one step.

    Equivalent to :func:`~gramscore.ngram.build_index` followed by
    :func:`calibrate_fluency`, but slices each answer's grams only once,
    which roughly halves reference-set construction time at full scale.
    """
    answers = list(answers)
    if leave_one_out:
        table = build_index(answers, w_max=w_max)
        normalizer = calibrate_fluency(answers, table, leave_one_out=True) if answers else 0.0
        return ReferenceSet(question_id, answers, table, normalizer)

    if not 1 <= w_max <= MAX_GRAM_WIDTH:
        raise ValueError(f"w_max must be in 1..{MAX_GRAM_WIDTH}, got {w_max}")
    widths = tuple(range(1, w_max + 1))
    flat: dict[int, list[str]] = {w: [] for w in widths}
    bounds: dict[int, list[int]] = {w: [0] for w in widths}
    doc_counts: Counter = Counter()
    for answer in answers:
        padded = BOS + _text_of(answer) + EOS
        n = len(padded)
        for w in widths:
            m = n - w + 1
            if m > 0:
                grams = [padded[i : i + w] for i in range(m)]
                flat[w].extend(grams)
                if w == 3:
                    doc_counts.update(set(grams))
            bounds[w].append(len(flat[w]))
    counts = {w: Counter(flat[w]) for w in widths}
    totals = {w: len(flat[w]) for w in widths}
    table = NGramTable(
        widths=widths,
        counts=counts,
        totals=totals,
        doc_counts=doc_counts,
        doc_count=len(answers),
    )
    if not answers:
        return ReferenceSet(question_id, answers, table, 0.0)

    getters = {w: counts[w].get for w in widths}
    values = []
    for index, answer in enumerate(answers):
        per_width = []
        for w in widths:
            lo, hi = bounds[w][index], bounds[w][index + 1]
            if not totals[w] or lo == hi:
                per_width.append(0.0)
                continue
            hits = sum(filter(None, map(getters[w], flat[w][lo:hi])))
            per_width.append(hits / totals[w])
        length = len(_text_of(answer))
        values.append(discount(length) * math.fsum(per_width))
    normalizer = math.fsum(values) / len(values)
    if normalizer <= 0:
        raise CalibrationError(
            "reference answers have zero discounted fluency; cannot normalize "
            "(are all answers longer than 150 characters?)"
        )
    return ReferenceSet(question_id, answers, table, normalizer)


def fluency(text: NormalizedText | str, refset: ReferenceSet) -> float:
    """Normalized, length-discounted fluency; the reference set averages 1.0."""
    if refset.fluency_normalizer <= 0:
        raise CalibrationError(
            f"reference set {refset.question_id!r} has no calibrated fluency normalizer"
        )
    raw = fluency_raw(text, refset.table).total
    return discount(len(_text_of(text))) * raw / refset.fluency_normalizer


def truthfulness_profile(
    text: NormalizedText,
    table: NGramTable,
    threshold: float = TRUTHFULNESS_THRESHOLD,
) -> list[tuple[int, float]]:
    """Discounted truthfulness per candidate truncation length.

    For each content character position i, the likelihood is the best
    document frequency among the width-3 windows starting at i-1, i, and
    i+1 (windows outside the text count 0), capped at the threshold and
    rescaled to [0, 1]. A candidate's score is the discounted mean over
    content positions up to that length. Candidates with no content
    positions are omitted.
    """
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    length = text.length
    df = [table.doc_frequency(g) for g in extract_grams(text, 3)]

    content_values: list[float] = []
    count_upto = [0] * (length + 1)
    for i in range(1, length + 1):
        count_upto[i] = count_upto[i - 1]
        if not text.content_mask[i - 1]:
            continue
        best = 0.0
        for j in (i - 1, i, i + 1):
            if 0 <= j < length and df[j] > best:
                best = df[j]
        content_values.append(min(best, threshold) / threshold)
        count_upto[i] += 1

    profile = []
    for cut in _truncation_candidates(length):
        k = count_upto[cut]
        if k == 0:
            continue
        mean = math.fsum(content_values[:k]) / k
        profile.append((cut, discount(cut) * mean))
    return profile


def truthfulness(
    text: NormalizedText,
    table: NGramTable,
    threshold: float = TRUTHFULNESS_THRESHOLD,
) -> float:
    """Best discounted truthfulness over truncation lengths; 0 for empty content."""
    return max((score for _, score in truthfulness_profile(text, table, threshold)), default=0.0)


def helpfulness_profile(text: NormalizedText | str, rules: RuleSet) -> list[tuple[int, float]]:
    """Discounted clause-weight fraction per candidate truncation length."""
    if not rules.clauses:
        raise ConfigError(f"question {rules.question_id}: empty helpfulness rule set")
    total = rules.total_weight
    s = _text_of(text)
    profile = []
    for cut in _truncation_candidates(len(s)):
        prefix = s[:cut]
        satisfied = math.fsum(c.weight for c in rules.clauses if eval_rule(c.expr, prefix))
        profile.append((cut, discount(cut) * (satisfied / total)))
    return profile


def helpfulness(text: NormalizedText | str, rules: RuleSet) -> float:
    """Best discounted rule score over truncation lengths."""
    return max((score for _, score in helpfulness_profile(text, rules)), default=0.0)


@dataclass(frozen=True)
class MetricTriple:
    """One response's fluency, truthfulness, and helpfulness.

    ``final`` is always the exact arithmetic mean of the three. Fluency may
    exceed 1 (strong responses can beat the reference-set average);
    truthfulness and helpfulness are fractions.
    """

    fluency: float
    truthfulness: float
    helpfulness: float

    def __post_init__(self):
        if self.fluency < 0:
            raise ValueError(f"fluency must be >= 0, got {self.fluency}")
        if not 0.0 <= self.truthfulness <= 1.0:
            raise ValueError(f"truthfulness must be in [0, 1], got {self.truthfulness}")
        if not 0.0 <= self.helpfulness <= 1.0:
            raise ValueError(f"helpfulness must be in [0, 1], got {self.helpfulness}")

    @property
    def final(self) -> float:
        return (self.fluency + self.truthfulness + self.helpfulness) / 3

    @staticmethod
    def mean(triples: Iterable["MetricTriple"]) -> "MetricTriple":
        items = list(triples)
        if not items:
            raise ReportError("cannot average an empty list of score triples")
        n = len(items)
        return MetricTriple(
            math.fsum(t.fluency for t in items) / n,
            math.fsum(t.truthfulness for t in items) / n,
            math.fsum(t.helpfulness for t in items) / n,
        )


def score_response(
    text: NormalizedText,
    refset: ReferenceSet,
    rules: RuleSet,
    *,
    threshold: float = TRUTHFULNESS_THRESHOLD,
) -> MetricTriple:
    """Compute all three metrics for one response."""
    return MetricTriple(
        fluency=fluency(text, refset),
        truthfulness=truthfulness(text, refset.table, threshold),
        helpfulness=helpfulness(text, rules),
    )


@dataclass(frozen=True)
class QuestionAggregate:
    question_id: str
    responses: int
    mean: MetricTriple


@dataclass(frozen=True)
class AggregateResult:
    """Per-question means and their unweighted overall mean."""

    questions: tuple[QuestionAggregate, ...]
    overall: MetricTriple
    total_responses: int
    subjects: dict[str, MetricTriple] | None = None


def aggregate(
    scores: Iterable[tuple[str, MetricTriple]],
    *,
    subjects: Mapping[str, str] | None = None,
) -> AggregateResult:
    """Average scores per question, then questions with equal weight.

    Means use exact float summation, so the result is independent of input
    order. With a question-to-subject mapping, per-subject means over the
    covered questions are included.
    """
    grouped: dict[str, list[MetricTriple]] = {}
    for question_id, triple in scores:
        grouped.setdefault(question_id, []).append(triple)
    if not grouped:
        raise ReportError("no scores to aggregate")

    question_aggs = tuple(
        QuestionAggregate(qid, len(triples), MetricTriple.mean(triples))
        for qid, triples in sorted(grouped.items())
    )
    overall = MetricTriple.mean(q.mean for q in question_aggs)

    subject_means = None
    if subjects is not None:
        by_subject: dict[str, list[MetricTriple]] = {}
        for q in question_aggs:
            subject = subjects.get(q.question_id)
            if subject:
                by_subject.setdefault(subject, []).append(q.mean)
        subject_means = {s: MetricTriple.mean(ts) for s, ts in sorted(by_subject.items())}

    return AggregateResult(
        questions=question_aggs,
        overall=overall,
        total_responses=sum(q.responses for q in question_aggs),
        subjects=subject_means,
    )
