"""Per-question frequency statistics over character n-grams.

An :class:`NGramTable` answers three kinds of queries against an indexed
answer corpus: gram probability (count over total occurrences at a width),
document frequency (fraction of answers containing a width-3 gram), and raw
corpus counts. Tables are immutable after :func:`build_index`; concurrent
reads need no synchronization.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError
from .textnorm import BOS, EOS, MAX_GRAM_WIDTH, NormalizedText

DOC_FREQUENCY_WIDTH = 3

_NGRAMS_FORMAT = "gramscore-ngrams/1"


def _text_of(value: NormalizedText | str) -> str:
    return value.text if isinstance(value, NormalizedText) else value


def _validate_widths(widths) -> tuple[int, ...]:
    out = tuple(sorted({int(w) for w in widths}))
    if not out:
        raise ValueError("at least one gram width is required")
    if out[0] < 1 or out[-1] > MAX_GRAM_WIDTH:
        raise ValueError(f"gram widths must be in 1..{MAX_GRAM_WIDTH}, got {out}")
    return out


@dataclass
class NGramTable:
    """Occurrence counts per width, plus width-3 document frequencies."""

    widths: tuple[int, ...]
    counts: dict[int, Counter]
    totals: dict[int, int]
    doc_counts: Counter = field(default_factory=Counter)
    doc_count: int = 0

    def _check_width(self, w: int) -> None:
        if w not in self.counts:
            raise ValueError(f"width {w} is not indexed (indexed widths: {self.widths})")

    def gram_probability(self, gram: str) -> float:
        """count(gram) / total occurrences at its width; 0 when unseen or empty."""
        w = len(gram)
        self._check_width(w)
        total = self.totals.get(w, 0)
        if not total:
            return 0.0
        return self.counts[w].get(gram, 0) / total

    def doc_frequency(self, gram: str) -> float:
        """Fraction of indexed answers containing the width-3 gram at least once."""
        if len(gram) != DOC_FREQUENCY_WIDTH:
            raise ValueError(
                f"document frequencies are indexed at width {DOC_FREQUENCY_WIDTH}, got width {len(gram)}"
            )
        self._check_width(DOC_FREQUENCY_WIDTH)
        if not self.doc_count:
            return 0.0
        return self.doc_counts.get(gram, 0) / self.doc_count

    def corpus_gram_count(self, gram: str) -> int:
        """Raw occurrence count across the indexed corpus."""
        self._check_width(len(gram))
        return self.counts[len(gram)].get(gram, 0)

    def save(self, path, *, normalization_digest: str = "", punctuation_digest: str = "") -> None:
        """Write a portable snapshot; round-trips bit-exactly via :meth:`load`."""
        doc = {
            "format": _NGRAMS_FORMAT,
            "widths": list(self.widths),
            "doc_count": self.doc_count,
            "normalization_digest": normalization_digest,
            "punctuation_digest": punctuation_digest,
            "totals": {str(w): t for w, t in self.totals.items()},
            "counts": {str(w): dict(sorted(c.items())) for w, c in self.counts.items()},
            "doc_counts": dict(sorted(self.doc_counts.items())),
        }
        Path(path).write_text(
            json.dumps(doc, sort_keys=True, ensure_ascii=False), encoding="utf-8"
        )

    @classmethod
    def load(cls, path) -> tuple["NGramTable", dict]:
        """Read a snapshot; returns the table and its header metadata."""
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            raise FormatError(f"{path}: cannot read n-gram snapshot: {err}") from err
        if doc.get("format") != _NGRAMS_FORMAT:
            raise FormatError(f"{path}: unsupported snapshot format {doc.get('format')!r}")
        widths = tuple(doc["widths"])
        table = cls(
            widths=widths,
            counts={int(w): Counter(c) for w, c in doc["counts"].items()},
            totals={int(w): t for w, t in doc["totals"].items()},
            doc_counts=Counter(doc["doc_counts"]),
            doc_count=doc["doc_count"],
        )
        header = {
            "normalization_digest": doc.get("normalization_digest", ""),
            "punctuation_digest": doc.get("punctuation_digest", ""),
        }
        return table, header


def build_index(
    answers,
    w_max: int = MAX_GRAM_WIDTH,
    widths=None,
) -> NGramTable:
    """Index every gram of every answer, with sentinels, for the given widths.

    Counts are independent of answer order. Width-3 per-answer containment
    is recorded whenever width 3 is indexed. Accepts NormalizedText or str;
    texts are indexed as given (normalize first).
    """
    if widths is None:
        if not 1 <= w_max <= MAX_GRAM_WIDTH:
            raise ValueError(f"w_max must be in 1..{MAX_GRAM_WIDTH}, got {w_max}")
        widths = tuple(range(1, w_max + 1))
    else:
        widths = _validate_widths(widths)

    flat: dict[int, list[str]] = {w: [] for w in widths}
    doc_counts: Counter = Counter()
    doc_count = 0
    for answer in answers:
        padded = BOS + _text_of(answer) + EOS
        n = len(padded)
        doc_count += 1
        for w in widths:
            m = n - w + 1
            if m <= 0:
                continue
            grams = [padded[i : i + w] for i in range(m)]
            flat[w].extend(grams)
            if w == DOC_FREQUENCY_WIDTH:
                doc_counts.update(set(grams))
    counts = {w: Counter(flat[w]) for w in widths}
    totals = {w: len(flat[w]) for w in widths}
    return NGramTable(
        widths=widths, counts=counts, totals=totals, doc_counts=doc_counts, doc_count=doc_count
    )


@dataclass
class ReferenceSet:
    """A question's reference answers, their index, and the fluency normalizer.

    Built via :func:`gramscore.metrics.build_reference_set`; the table is
    always exactly the index of ``answers`` and the normalizer is positive
    whenever ``answers`` is non-empty.
    """

    question_id: str
    answers: list[NormalizedText]
    table: NGramTable
    fluency_normalizer: float
