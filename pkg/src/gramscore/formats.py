"""Record file formats, score reports, and run configuration.

All record files are line-delimited UTF-8 JSON (one object per line):

* questions: ``{"question_id", "subject", "question", "sample_answer"}``
* responses/candidates: ``{"question_id", "model", "response", ...extras}``
* external scores (for correlation): ``{"model", "score"}``

A reference set file ``<question_id>.refset`` is a JSON header line
followed by one JSON string per answer. Score reports are a single JSON
document plus a rendered leaderboard. Nothing here embeds timestamps, so
identical inputs produce identical bytes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import ConfigError, FormatError
from .metrics import MetricTriple, QuestionAggregate
from .textnorm import (
    DEFAULT_PUNCTUATION,
    DEFAULT_RULE_TABLE,
    MAX_GRAM_WIDTH,
    PunctuationSet,
    RuleTable,
)

logger = logging.getLogger(__name__)

REFSET_FORMAT = "gramscore-refset/1"
REPORT_FORMAT = "gramscore-report/1"
PIPELINE_REPORT_FORMAT = "gramscore-pipeline-report/1"


@dataclass(frozen=True)
class QuestionRecord:
    question_id: str
    subject: str
    question: str
    sample_answer: str


@dataclass(frozen=True)
class ResponseRecord:
    question_id: str
    model: str
    response: str
    metadata: dict = field(default_factory=dict)


def _parse_json_line(path, lineno: int, line: str) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as err:
        raise FormatError(f"{path}:{lineno}: invalid JSON: {err}") from err
    if not isinstance(record, dict):
        raise FormatError(f"{path}:{lineno}: expected a JSON object, got {type(record).__name__}")
    return record


def read_questions(path) -> dict[str, QuestionRecord]:
    """Load a question file; question ids must be unique, subjects non-empty."""
    questions: dict[str, QuestionRecord] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, 1):
            line = raw.strip()
            if not line:
                continue
            record = _parse_json_line(path, lineno, line)
            try:
                qid = record["question_id"]
                subject = record["subject"]
                question = record["question"]
                sample_answer = record["sample_answer"]
            except KeyError as err:
                raise FormatError(f"{path}:{lineno}: missing field {err.args[0]!r}") from err
            if not qid or not isinstance(qid, str):
                raise FormatError(f"{path}:{lineno}: question_id must be a non-empty string")
            if qid in questions:
                raise FormatError(f"{path}:{lineno}: duplicate question_id {qid!r}")
            if not subject:
                raise FormatError(f"{path}:{lineno}: subject must be non-empty")
            questions[qid] = QuestionRecord(qid, subject, question, sample_answer)
    if not questions:
        raise FormatError(f"{path}: no questions found")
    return questions


def iter_responses(path, *, strict: bool = False) -> Iterator[ResponseRecord]:
    """Stream response records; malformed lines abort (strict) or skip with a warning."""
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, 1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = _parse_json_line(path, lineno, line)
                qid = record.get("question_id")
                model = record.get("model")
                response = record.get("response")
                if not qid or not isinstance(qid, str):
                    raise FormatError(f"{path}:{lineno}: question_id must be a non-empty string")
                if not model or not isinstance(model, str):
                    raise FormatError(f"{path}:{lineno}: model must be a non-empty string")
                if not isinstance(response, str):
                    raise FormatError(f"{path}:{lineno}: response must be a string")
            except FormatError as err:
                if strict:
                    raise
                logger.warning("skipping malformed record: %s", err)
                continue
            extras = {
                k: v
                for k, v in record.items()
                if k not in ("question_id", "model", "response")
            }
            yield ResponseRecord(qid, model, response, extras)


def write_refset(
    path,
    question_id: str,
    answers: Iterable[str],
    *,
    normalization_digest: str,
    punctuation_digest: str,
) -> None:
    answers = list(answers)
    header = {
        "format": REFSET_FORMAT,
        "question_id": question_id,
        "answer_count": len(answers),
        "normalization_digest": normalization_digest,
        "punctuation_digest": punctuation_digest,
    }
    lines = [json.dumps(header, sort_keys=True, ensure_ascii=False)]
    lines.extend(json.dumps(a, ensure_ascii=False) for a in answers)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_refset(path) -> tuple[dict, list[str]]:
    """Read a refset file; returns (header, answers)."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{path}: empty refset file")
    header = _parse_json_line(path, 1, lines[0])
    if header.get("format") != REFSET_FORMAT:
        raise FormatError(f"{path}: unsupported refset format {header.get('format')!r}")
    answers = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        try:
            answer = json.loads(line)
        except json.JSONDecodeError as err:
            raise FormatError(f"{path}:{lineno}: invalid answer line: {err}") from err
        if not isinstance(answer, str):
            raise FormatError(f"{path}:{lineno}: answers must be JSON strings")
        answers.append(answer)
    if len(answers) != header.get("answer_count"):
        raise FormatError(
            f"{path}: header says {header.get('answer_count')} answers, found {len(answers)}"
        )
    return header, answers


@dataclass(frozen=True)
class ModelReport:
    model: str
    overall: MetricTriple
    question_count: int
    response_count: int
    questions: tuple[QuestionAggregate, ...]


@dataclass(frozen=True)
class ScoreReport:
    models: tuple[ModelReport, ...]  # sorted by model name
    metadata: dict


def _triple_dict(triple: MetricTriple) -> dict:
    return {
        "fluency": triple.fluency,
        "truthfulness": triple.truthfulness,
        "helpfulness": triple.helpfulness,
        "final": triple.final,
    }


def _triple_from(d: dict) -> MetricTriple:
    return MetricTriple(d["fluency"], d["truthfulness"], d["helpfulness"])


def score_report_to_json(report: ScoreReport) -> str:
    doc = {
        "format": REPORT_FORMAT,
        "metadata": report.metadata,
        "models": {
            m.model: {
                "overall": _triple_dict(m.overall),
                "question_count": m.question_count,
                "response_count": m.response_count,
                "questions": {
                    q.question_id: {**_triple_dict(q.mean), "responses": q.responses}
                    for q in m.questions
                },
            }
            for m in report.models
        },
    }
    return json.dumps(doc, sort_keys=True, ensure_ascii=False, indent=1)


def score_report_from_json(text: str, *, source: str = "<report>") -> ScoreReport:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise FormatError(f"{source}: invalid report JSON: {err}") from err
    if doc.get("format") != REPORT_FORMAT:
        raise FormatError(f"{source}: unsupported report format {doc.get('format')!r}")
    models = []
    for name in sorted(doc.get("models", {})):
        entry = doc["models"][name]
        questions = tuple(
            QuestionAggregate(qid, q["responses"], _triple_from(q))
            for qid, q in sorted(entry.get("questions", {}).items())
        )
        models.append(
            ModelReport(
                model=name,
                overall=_triple_from(entry["overall"]),
                question_count=entry.get("question_count", len(questions)),
                response_count=entry.get("response_count", 0),
                questions=questions,
            )
        )
    return ScoreReport(models=tuple(models), metadata=doc.get("metadata", {}))


def write_score_report(path, report: ScoreReport) -> None:
    Path(path).write_text(score_report_to_json(report) + "\n", encoding="utf-8")


def read_score_report(path) -> ScoreReport:
    return score_report_from_json(Path(path).read_text(encoding="utf-8"), source=str(path))


def leaderboard_rows(report: ScoreReport) -> list[tuple[str, float, float, float, float]]:
    """(model, final, fluency, truthfulness, helpfulness), best final first."""
    rows = [
        (m.model, m.overall.final, m.overall.fluency, m.overall.truthfulness, m.overall.helpfulness)
        for m in report.models
    ]
    rows.sort(key=lambda r: (-r[1], r[0]))
    return rows


def render_leaderboard(report: ScoreReport, fmt: str = "markdown") -> str:
    """Render the leaderboard table as markdown or TSV."""
    rows = leaderboard_rows(report)
    if fmt == "markdown":
        lines = [
            "| Model | Score | Fluency | Truthfulness | Helpfulness |",
            "|---|---:|---:|---:|---:|",
        ]
        lines.extend(
            f"| {name} | {final:.4f} | {flu:.3f} | {tru:.3f} | {hel:.3f} |"
            for name, final, flu, tru, hel in rows
        )
        return "\n".join(lines) + "\n"
    if fmt == "tsv":
        lines = ["Model\tScore\tFluency\tTruthfulness\tHelpfulness"]
        lines.extend(
            f"{name}\t{final:.4f}\t{flu:.3f}\t{tru:.3f}\t{hel:.3f}"
            for name, final, flu, tru, hel in rows
        )
        return "\n".join(lines) + "\n"
    raise ConfigError(f"unknown leaderboard format {fmt!r} (expected markdown or tsv)")


def read_external_scores(path) -> dict[str, float]:
    """Load ``{"model", "score"}`` lines, e.g. externally produced judge scores."""
    scores: dict[str, float] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, 1):
            line = raw.strip()
            if not line:
                continue
            record = _parse_json_line(path, lineno, line)
            model = record.get("model")
            if not model or not isinstance(model, str):
                raise FormatError(f"{path}:{lineno}: model must be a non-empty string")
            if model in scores:
                raise FormatError(f"{path}:{lineno}: duplicate model {model!r}")
            try:
                scores[model] = float(record["score"])
            except (KeyError, TypeError, ValueError) as err:
                raise FormatError(f"{path}:{lineno}: score must be a number") from err
    if not scores:
        raise FormatError(f"{path}: no scores found")
    return scores


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def refset_collection_digest(paths: Iterable) -> str:
    """Stable digest over a set of refset files, keyed by file name."""
    items = sorted((Path(p).name, sha256_file(p)) for p in paths)
    payload = "\n".join(f"{name}:{digest}" for name, digest in items)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


_TRUE_WORDS = {"true", "1", "yes", "on"}
_FALSE_WORDS = {"false", "0", "no", "off"}


def _parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in _TRUE_WORDS:
        return True
    if v in _FALSE_WORDS:
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


def _parse_optional_int(value: str):
    v = value.strip().lower()
    if v in ("", "none"):
        return None
    return int(value)


def _parse_optional_str(value: str):
    v = value.strip()
    return v or None


@dataclass
class RunConfig:
    """Tunable knobs for pipeline and scoring runs.

    Precedence: built-in defaults, then a config file, then explicit
    command-line flags.
    """

    seed: int = 0
    keep: int = 1000
    length_keep: int = 30000
    target_length: int = 100
    rare_gram_width: int = 5
    include_sentinel_grams: bool = True
    threshold: float = 0.005
    w_max: int = MAX_GRAM_WIDTH
    strict: bool = False
    fluency_leave_one_out: bool = False
    max_moves: int | None = None
    normalization_rules: str | None = None
    unify_widths: bool = True
    strip_edges: bool = True
    punctuation_file: str | None = None

    _PARSERS = {
        "seed": int,
        "keep": int,
        "length_keep": int,
        "target_length": int,
        "rare_gram_width": int,
        "include_sentinel_grams": _parse_bool,
        "threshold": float,
        "w_max": int,
        "strict": _parse_bool,
        "fluency_leave_one_out": _parse_bool,
        "max_moves": _parse_optional_int,
        "normalization_rules": _parse_optional_str,
        "unify_widths": _parse_bool,
        "strip_edges": _parse_bool,
        "punctuation_file": _parse_optional_str,
    }

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        """Parse a ``key = value`` config file (# comments, blank lines ok)."""
        config = cls()
        for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            parser = cls._PARSERS.get(key)
            if parser is None:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                setattr(config, key, parser(value.strip()))
            except ValueError as err:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {err}") from err
        return config

    def updated(self, **overrides) -> "RunConfig":
        values = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **values)

    def rule_table(self) -> RuleTable:
        if self.normalization_rules:
            return RuleTable.from_file(
                self.normalization_rules,
                unify_widths=self.unify_widths,
                strip_edges=self.strip_edges,
            )
        if self.unify_widths and self.strip_edges:
            return DEFAULT_RULE_TABLE
        return RuleTable(
            ((r"\s+", " "),), unify_widths=self.unify_widths, strip_edges=self.strip_edges
        )

    def punctuation(self) -> PunctuationSet:
        if self.punctuation_file:
            return PunctuationSet.from_file(self.punctuation_file)
        return DEFAULT_PUNCTUATION

    def digest(self) -> str:
        payload = json.dumps(dataclasses.asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()
