"""Per-question keyword rule language: parsing, printing, and evaluation.

Rule files are UTF-8 text, one clause per line::

    # weight is optional and defaults to 1
    2.0<TAB>ALL(ANY("zero", "0"), "resistance")
    "temperature"

An expression is either a double-quoted term (matched by substring
containment against normalized text, case sensitive) or one of the
operators ``ALL(...)``, ``ANY(...)``, ``NOT(...)`` over sub-expressions.
``\\"`` and ``\\\\`` are the only escapes inside terms. Term literals are
normalized with the active rule table at parse time so variant forms unify
before matching.

Drop-rule files share the grammar; each line is an expression meaning
"drop the candidate when this matches". Weights on drop lines are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

from .errors import ConfigError, RuleParseError
from .textnorm import DEFAULT_RULE_TABLE, NormalizedText


@dataclass(frozen=True)
class Term:
    text: str


@dataclass(frozen=True)
class AnyOf:
    children: tuple["RuleExpr", ...]


@dataclass(frozen=True)
class AllOf:
    children: tuple["RuleExpr", ...]


@dataclass(frozen=True)
class Not:
    child: "RuleExpr"


RuleExpr = Union[Term, AnyOf, AllOf, Not]


@dataclass(frozen=True)
class Clause:
    weight: float
    expr: RuleExpr


@dataclass(frozen=True)
class RuleSet:
    question_id: str
    clauses: tuple[Clause, ...]

    def __post_init__(self):
        if any(c.weight <= 0 for c in self.clauses):
            raise ValueError("clause weights must be positive")

    @property
    def total_weight(self) -> float:
        return math.fsum(c.weight for c in self.clauses)


@dataclass(frozen=True)
class DropRule:
    question_id: str
    expr: RuleExpr

    @property
    def label(self) -> str:
        return format_expr(self.expr)


_OPERATORS = {"ALL", "ANY", "NOT"}


class _Scanner:
    def __init__(self, source: str, line: int):
        self.src = source
        self.line = line
        self.pos = 0

    def error(self, message: str) -> RuleParseError:
        return RuleParseError(message, self.line, self.pos + 1)

    def skip_ws(self) -> None:
        while self.pos < len(self.src) and self.src[self.pos] in " \t":
            self.pos += 1

    def peek(self) -> str:
        return self.src[self.pos] if self.pos < len(self.src) else ""

    def expect(self, ch: str) -> None:
        if self.peek() != ch:
            raise self.error(f"expected {ch!r}")
        self.pos += 1

    def read_string(self) -> str:
        self.expect('"')
        out = []
        while True:
            if self.pos >= len(self.src):
                raise self.error("unterminated string")
            ch = self.src[self.pos]
            self.pos += 1
            if ch == '"':
                return "".join(out)
            if ch == "\\":
                if self.pos >= len(self.src):
                    raise self.error("dangling escape")
                esc = self.src[self.pos]
                self.pos += 1
                if esc not in ('"', "\\"):
                    raise self.error(f"unsupported escape \\{esc}")
                out.append(esc)
            else:
                out.append(ch)

    def read_ident(self) -> str:
        start = self.pos
        while self.pos < len(self.src) and (self.src[self.pos].isalpha() or self.src[self.pos] == "_"):
            self.pos += 1
        if start == self.pos:
            raise self.error("expected an operator or a quoted term")
        return self.src[start : self.pos]


def _parse_expr(sc: _Scanner, normalizer: Callable[[str], str]) -> RuleExpr:
    sc.skip_ws()
    if sc.peek() == '"':
        col = sc.pos + 1
        raw = sc.read_string()
        literal = normalizer(raw)
        if not literal:
            raise RuleParseError("term is empty after normalization", sc.line, col)
        return Term(literal)
    ident = sc.read_ident()
    if ident not in _OPERATORS:
        raise sc.error(f"unknown operator {ident!r} (expected ALL, ANY, or NOT)")
    sc.skip_ws()
    sc.expect("(")
    children = []
    sc.skip_ws()
    if sc.peek() == ")":
        raise sc.error(f"{ident} requires at least one argument")
    while True:
        children.append(_parse_expr(sc, normalizer))
        sc.skip_ws()
        if sc.peek() == ",":
            sc.pos += 1
            continue
        sc.expect(")")
        break
    if ident == "NOT":
        if len(children) != 1:
            raise sc.error("NOT takes exactly one argument")
        return Not(children[0])
    if ident == "ANY":
        return AnyOf(tuple(children))
    return AllOf(tuple(children))


def parse_expr(source: str, *, normalizer: Callable[[str], str] | None = None, line: int = 1) -> RuleExpr:
    """Parse a single expression; raises :class:`RuleParseError` on bad input."""
    normalizer = DEFAULT_RULE_TABLE.apply if normalizer is None else normalizer
    sc = _Scanner(source, line)
    expr = _parse_expr(sc, normalizer)
    sc.skip_ws()
    if sc.pos != len(sc.src):
        raise sc.error("unexpected trailing input after expression")
    return expr


def _clause_lines(source: str):
    for lineno, raw in enumerate(source.splitlines(), 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield lineno, line


def _split_weight(line: str, lineno: int) -> tuple[float, str]:
    if "\t" in line:
        head, rest = line.split("\t", 1)
        head = head.strip()
        try:
            weight = float(head)
        except ValueError:
            raise RuleParseError(f"invalid weight {head!r}", lineno) from None
        if not math.isfinite(weight) or weight <= 0:
            raise RuleParseError(f"weight must be positive and finite, got {head}", lineno)
        return weight, rest
    return 1.0, line


def _forbid_not(expr: RuleExpr, lineno: int) -> None:
    if isinstance(expr, Not):
        raise RuleParseError("NOT is not allowed in scoring rules (strict mode)", lineno)
    if isinstance(expr, (AnyOf, AllOf)):
        for child in expr.children:
            _forbid_not(child, lineno)


def parse_rules(
    source: str,
    question_id: str,
    *,
    normalizer: Callable[[str], str] | None = None,
    forbid_not: bool = False,
) -> RuleSet:
    """Parse a scoring rule file body into a validated :class:`RuleSet`."""
    clauses = []
    for lineno, line in _clause_lines(source):
        weight, body = _split_weight(line, lineno)
        expr = parse_expr(body, normalizer=normalizer, line=lineno)
        if forbid_not:
            _forbid_not(expr, lineno)
        clauses.append(Clause(weight, expr))
    if not clauses:
        raise ConfigError(f"question {question_id}: rule file defines no clauses")
    return RuleSet(question_id, tuple(clauses))


def parse_drop_rules(
    source: str,
    question_id: str,
    *,
    normalizer: Callable[[str], str] | None = None,
) -> list[DropRule]:
    """Parse a drop-rule file body; weights, if present, are ignored."""
    out = []
    for lineno, line in _clause_lines(source):
        _, body = _split_weight(line, lineno)
        out.append(DropRule(question_id, parse_expr(body, normalizer=normalizer, line=lineno)))
    return out


def eval_rule(expr: RuleExpr, text: NormalizedText | str) -> bool:
    """Evaluate an expression against a (normalized) text. Pure and total."""
    s = text.text if isinstance(text, NormalizedText) else text
    if isinstance(expr, Term):
        return expr.text in s
    if isinstance(expr, AnyOf):
        return any(eval_rule(c, s) for c in expr.children)
    if isinstance(expr, AllOf):
        return all(eval_rule(c, s) for c in expr.children)
    if isinstance(expr, Not):
        return not eval_rule(expr.child, s)
    raise TypeError(f"not a rule expression: {expr!r}")


def rule_score(rules: RuleSet, text: NormalizedText | str) -> float:
    """Weight fraction of satisfied clauses, in [0, 1]."""
    total = rules.total_weight
    if total <= 0:
        raise ConfigError(f"question {rules.question_id}: rule set has no positive weight")
    satisfied = math.fsum(c.weight for c in rules.clauses if eval_rule(c.expr, text))
    return satisfied / total


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def format_expr(expr: RuleExpr) -> str:
    """Print an expression in the file grammar; parse(format(e)) == e."""
    if isinstance(expr, Term):
        return f'"{_escape(expr.text)}"'
    if isinstance(expr, Not):
        return f"NOT({format_expr(expr.child)})"
    name = "ANY" if isinstance(expr, AnyOf) else "ALL"
    return f"{name}({', '.join(format_expr(c) for c in expr.children)})"


def format_rules(rules: RuleSet) -> str:
    """Render a RuleSet back into the line format (stable round trip)."""
    lines = [f"{r.weight!r}\t{format_expr(r.expr)}" for r in rules.clauses]
    return "\n".join(lines) + "\n"


def _load_dir(paths, suffix: str):
    seen: dict[str, Path] = {}
    for path in paths:
        base = Path(path)
        if not base.is_dir():
            raise ConfigError(f"rule directory not found: {base}")
        for file in sorted(base.glob(f"*{suffix}")):
            qid = file.name[: -len(suffix)]
            if qid in seen:
                raise ConfigError(f"duplicate question_id {qid!r}: {seen[qid]} and {file}")
            seen[qid] = file
    return seen


def load_rules_dir(
    *paths,
    normalizer: Callable[[str], str] | None = None,
    forbid_not: bool = False,
) -> dict[str, RuleSet]:
    """Load every ``<question_id>.rules`` file under the given directories."""
    out = {}
    for qid, file in _load_dir(paths, ".rules").items():
        try:
            out[qid] = parse_rules(
                file.read_text(encoding="utf-8"), qid, normalizer=normalizer, forbid_not=forbid_not
            )
        except RuleParseError as err:
            raise RuleParseError(f"{file}: {err}") from err
    return out


def load_drop_rules_dir(
    *paths,
    normalizer: Callable[[str], str] | None = None,
) -> dict[str, list[DropRule]]:
    """Load every ``<question_id>.drop`` file under the given directories."""
    out = {}
    for qid, file in _load_dir(paths, ".drop").items():
        try:
            out[qid] = parse_drop_rules(file.read_text(encoding="utf-8"), qid, normalizer=normalizer)
        except RuleParseError as err:
            raise RuleParseError(f"{file}: {err}") from err
    return out
