"""Text normalization, character classification, and character n-gram extraction.

Every other module works on :class:`NormalizedText` values produced here, so
this module owns the two pieces of configuration that must stay identical
across a whole run: the rewrite-rule table and the punctuation/symbol set.
Both carry content digests so downstream files can detect drift.

Grams are plain Python strings over the normalized alphabet plus two reserved
sentinel characters (:data:`BOS`, :data:`EOS`). Normalization strips the
reserved code points from input text, so a sentinel inside a gram can only
have come from padding, never from the text itself.
"""

from __future__ import annotations

import hashlib
import json
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

# Reserved sentinel characters used to pad texts before gram extraction.
BOS = "\x02"
EOS = "\x03"

MAX_GRAM_WIDTH = 10

CONTENT = "content"
PUNCTUATION = "punctuation_or_symbol"

_SENTINELS_RE = re.compile(f"[{BOS}{EOS}]")
_RANGE_RE = re.compile(r"^U\+([0-9A-Fa-f]{1,6})(?:\.\.U\+([0-9A-Fa-f]{1,6}))?$")


class PunctuationSet:
    """Characters excluded from the content class.

    Without an explicit character set, membership is decided by Unicode
    general category: anything in P* (punctuation) or S* (symbols), which
    covers ASCII punctuation, brackets and quotes, and the CJK marks
    (、。「」『』・（） and friends). An explicit set loaded from a file
    replaces the category rule entirely.
    """

    __slots__ = ("chars",)

    def __init__(self, chars=None):
        self.chars = frozenset(chars) if chars is not None else None

    def __contains__(self, ch: str) -> bool:
        if len(ch) != 1:
            raise ValueError(f"expected a single character, got {ch!r}")
        if self.chars is not None:
            return ch in self.chars
        return unicodedata.category(ch)[0] in ("P", "S")

    def digest(self) -> str:
        if self.chars is None:
            payload = "categories:P*,S*"
        else:
            payload = "chars:" + ",".join(sorted(f"{ord(c):04X}" for c in self.chars))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @classmethod
    def from_file(cls, path) -> "PunctuationSet":
        """Load an explicit set: one character or ``U+XXXX..U+YYYY`` range per line.

        Lines starting with ``#`` and blank lines are skipped. Whitespace
        characters must be given in ``U+XXXX`` form since bare lines are
        stripped before parsing.
        """
        chars: set[str] = set()
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            m = _RANGE_RE.match(line)
            if m:
                lo = int(m.group(1), 16)
                hi = int(m.group(2), 16) if m.group(2) else lo
                if hi < lo or hi > 0x10FFFF:
                    raise ConfigError(f"{path}:{lineno}: invalid code point range {line!r}")
                chars.update(chr(cp) for cp in range(lo, hi + 1))
            elif len(line) == 1:
                chars.add(line)
            else:
                raise ConfigError(
                    f"{path}:{lineno}: expected a single character or U+XXXX[..U+YYYY], got {line!r}"
                )
        return cls(chars)


DEFAULT_PUNCTUATION = PunctuationSet()


def classify_char(ch: str, punctuation: PunctuationSet | None = None) -> str:
    """Classify one character as :data:`CONTENT` or :data:`PUNCTUATION`."""
    if len(ch) != 1:
        raise ValueError(f"expected a single character, got {ch!r}")
    punct = DEFAULT_PUNCTUATION if punctuation is None else punctuation
    return PUNCTUATION if ch in punct else CONTENT


@dataclass(frozen=True)
class NormalizedText:
    """A text after normalization, with a per-character content flag.

    ``content_mask[i]`` is True when ``text[i]`` is a content character
    (not punctuation or symbol). Lengths are code-point counts.
    """

    text: str
    content_mask: tuple[bool, ...]

    def __post_init__(self):
        if len(self.text) != len(self.content_mask):
            raise ValueError("content_mask must have one entry per character")

    @property
    def length(self) -> int:
        return len(self.text)


@dataclass(frozen=True)
class RewriteRule:
    pattern: str
    replacement: str


class RuleTable:
    """Ordered regex rewrite rules plus width-unification and edge-strip flags.

    Rules are applied once each, in listed order, after optional NFKC
    normalization (which unifies full-width and half-width forms) and before
    an optional strip of leading/trailing whitespace. Reserved sentinel code
    points are always removed. Application is a single ordered pass, so a
    rule never sees text produced by a later rule.
    """

    def __init__(self, rules=(), *, unify_widths: bool = True, strip_edges: bool = True):
        normalized_rules = []
        for item in rules:
            if isinstance(item, RewriteRule):
                normalized_rules.append(item)
            else:
                pattern, replacement = item
                normalized_rules.append(RewriteRule(pattern, replacement))
        self.rules: tuple[RewriteRule, ...] = tuple(normalized_rules)
        self.unify_widths = unify_widths
        self.strip_edges = strip_edges
        self._compiled = []
        for i, rule in enumerate(self.rules):
            try:
                self._compiled.append((re.compile(rule.pattern), rule.replacement))
            except re.error as err:
                raise ConfigError(f"normalization rule {i}: invalid pattern {rule.pattern!r}: {err}") from err

    def apply(self, raw: str) -> str:
        text = raw
        if self.unify_widths:
            text = unicodedata.normalize("NFKC", text)
        for rx, replacement in self._compiled:
            text = rx.sub(replacement, text)
        if self.strip_edges:
            text = text.strip()
        return _SENTINELS_RE.sub("", text)

    def digest(self) -> str:
        payload = json.dumps(
            {
                "unify_widths": self.unify_widths,
                "strip_edges": self.strip_edges,
                "rules": [[r.pattern, r.replacement] for r in self.rules],
            },
            sort_keys=True,
            ensure_ascii=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @classmethod
    def from_file(cls, path, *, unify_widths: bool = True, strip_edges: bool = True) -> "RuleTable":
        """Load rules from a file: one ``pattern<TAB>replacement`` per line.

        Lines starting with ``#`` and blank lines are skipped. The
        replacement may contain further tabs; only the first tab separates.
        """
        rules = []
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not raw.strip() or raw.lstrip().startswith("#"):
                continue
            if "\t" not in raw:
                raise ConfigError(f"{path}:{lineno}: expected pattern<TAB>replacement, got {raw!r}")
            pattern, replacement = raw.split("\t", 1)
            rules.append(RewriteRule(pattern, replacement))
        return cls(rules, unify_widths=unify_widths, strip_edges=strip_edges)


DEFAULT_RULE_TABLE = RuleTable(((r"\s+", " "),))

# Pass-through table: no NFKC, no rewrites, no stripping. Sentinel scrubbing
# still applies. Handy for tests and for callers that pre-normalize.
IDENTITY_RULE_TABLE = RuleTable((), unify_widths=False, strip_edges=False)


def normalize_text(
    raw: str,
    table: RuleTable | None = None,
    punctuation: PunctuationSet | None = None,
) -> NormalizedText:
    """Apply the rewrite table to ``raw`` and classify every character.

    Deterministic; empty input is legal and yields an empty value. The
    shipped default table (NFKC, whitespace collapse, edge strip) is
    idempotent: normalizing the result again is a no-op.
    """
    table = DEFAULT_RULE_TABLE if table is None else table
    punct = DEFAULT_PUNCTUATION if punctuation is None else punctuation
    text = table.apply(raw)
    mask = tuple(ch not in punct for ch in text)
    return NormalizedText(text, mask)


def extract_grams(text: NormalizedText | str, w: int) -> list[str]:
    """Extract all width-``w`` character grams, with sentinel padding.

    A text of L characters is padded to BOS + text + EOS and yields
    max(L - w + 3, 0) grams of width w, each a string of w code points.
    """
    if not 1 <= w <= MAX_GRAM_WIDTH:
        raise ValueError(f"gram width must be in 1..{MAX_GRAM_WIDTH}, got {w}")
    s = text.text if isinstance(text, NormalizedText) else text
    padded = BOS + s + EOS
    return [padded[i : i + w] for i in range(len(padded) - w + 1)]
