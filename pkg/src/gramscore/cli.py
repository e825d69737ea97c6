"""Command-line interface: build-refset, score, correlate, report.

Exit codes: 0 on success, 1 on domain errors (bad inputs, validation
failures), 2 on usage errors. All randomness flows from ``--seed``;
rerunning any command with identical inputs and seed reproduces every
output file byte for byte.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
from pathlib import Path

from . import __version__
from .errors import GramscoreError, ReportError
from .formats import (
    PIPELINE_REPORT_FORMAT,
    RunConfig,
    ScoreReport,
    ModelReport,
    iter_responses,
    read_external_scores,
    read_questions,
    read_refset,
    read_score_report,
    refset_collection_digest,
    render_leaderboard,
    write_refset,
    write_score_report,
)
from .metrics import aggregate, build_reference_set, score_response
from .pipeline import (
    apply_drop_rules,
    distribution_refine,
    length_refine,
    make_pool,
    rare_gram_filter,
)
from .rules import load_drop_rules_dir, load_rules_dir
from .textnorm import normalize_text

logger = logging.getLogger(__name__)


def _load_config(args) -> RunConfig:
    path = args.config or os.environ.get("GRAMSCORE_CONFIG")
    config = RunConfig.from_file(path) if path else RunConfig()
    overrides = {}
    for key in ("seed", "keep", "length_keep", "threshold"):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    if getattr(args, "strict", False):
        overrides["strict"] = True
    return config.updated(**overrides)


def _group_candidates(path, config: RunConfig):
    """Collect (text, source) records per question, in file order."""
    grouped: dict[str, list[tuple[str, str]]] = {}
    for record in iter_responses(path, strict=config.strict):
        grouped.setdefault(record.question_id, []).append((record.response, record.model))
    return grouped


def cmd_build_refset(args) -> int:
    config = _load_config(args)
    table = config.rule_table()
    punctuation = config.punctuation()
    questions = read_questions(args.questions)
    grouped = _group_candidates(args.candidates, config)

    unknown = sorted(set(grouped) - set(questions))
    if unknown:
        raise ReportError(f"candidates reference unknown question_ids: {', '.join(unknown)}")
    missing = sorted(set(questions) - set(grouped))
    if missing:
        raise ReportError(f"candidates file has no responses for: {', '.join(missing)}")

    drop_rules = (
        load_drop_rules_dir(args.drop_rules, normalizer=table.apply) if args.drop_rules else {}
    )

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = []
    question_reports = {}
    for qid in sorted(questions):
        pool = make_pool(qid, grouped[qid], table=table, punctuation=punctuation)
        ingested = len(pool)

        pool, drop_report = apply_drop_rules(pool, drop_rules.get(qid, []))
        if not len(pool):
            failures.append(f"{qid}: empty pool after drop rules")
            continue
        pool, rare_report = rare_gram_filter(
            pool, config.rare_gram_width, include_sentinels=config.include_sentinel_grams
        )
        if not len(pool):
            failures.append(f"{qid}: empty pool after rare-gram filter")
            continue
        pool, length_report = length_refine(pool, config.length_keep, target=config.target_length)
        pool, refine_report = distribution_refine(
            pool,
            config.keep,
            seed=config.seed,
            target=config.target_length,
            max_moves=config.max_moves,
        )

        write_refset(
            out_dir / f"{qid}.refset",
            qid,
            pool.texts(),
            normalization_digest=table.digest(),
            punctuation_digest=punctuation.digest(),
        )
        question_reports[qid] = {
            "ingested": ingested,
            "drop_stage": {
                "removed": drop_report.removed,
                "kept": drop_report.kept,
                "per_rule": [{"rule": r, "matched": n} for r, n in drop_report.per_rule],
            },
            "rare_stage": {
                "width": rare_report.width,
                "singleton_grams": rare_report.singleton_grams,
                "removed": rare_report.removed,
                "kept": rare_report.kept,
            },
            "length_stage": {
                "target": length_report.target,
                "kept": length_report.kept,
                "mean_length": length_report.mean_length,
                "std_length": length_report.std_length,
            },
            "refine_stage": {
                "kept": refine_report.kept,
                "initial_mse": refine_report.initial_mse,
                "final_mse": refine_report.final_mse,
                "moves": refine_report.moves,
                "sweeps": refine_report.sweeps,
            },
        }

    report_doc = {
        "format": PIPELINE_REPORT_FORMAT,
        "seed": config.seed,
        "config_digest": config.digest(),
        "normalization_digest": table.digest(),
        "punctuation_digest": punctuation.digest(),
        "questions": question_reports,
        "failures": failures,
    }
    (out_dir / "pipeline_report.json").write_text(
        json.dumps(report_doc, sort_keys=True, ensure_ascii=False, indent=1) + "\n",
        encoding="utf-8",
    )

    if failures:
        for failure in failures:
            print(f"error: {failure}", file=sys.stderr)
        return 1
    print(f"wrote {len(question_reports)} refsets to {out_dir}")
    return 0


def cmd_score(args) -> int:
    config = _load_config(args)
    table = config.rule_table()
    punctuation = config.punctuation()
    questions = read_questions(args.questions)

    responses = list(iter_responses(args.responses, strict=config.strict))
    if not responses:
        raise ReportError(f"{args.responses}: no responses to score")
    unknown = sorted({r.question_id for r in responses} - set(questions))
    if unknown:
        raise ReportError(f"responses reference unknown question_ids: {', '.join(unknown)}")

    needed = sorted({r.question_id for r in responses})
    refset_dir = Path(args.refsets)
    rules = load_rules_dir(args.rules, normalizer=table.apply)

    gaps = []
    for qid in needed:
        if not (refset_dir / f"{qid}.refset").exists():
            gaps.append(f"missing refset: {qid}")
        if qid not in rules:
            gaps.append(f"missing rules: {qid}")
    if gaps:
        for gap in gaps:
            print(f"error: {gap}", file=sys.stderr)
        return 1

    refset_paths = [refset_dir / f"{qid}.refset" for qid in needed]
    refsets = {}
    for qid, path in zip(needed, refset_paths):
        header, answers = read_refset(path)
        if header.get("normalization_digest") != table.digest():
            raise ReportError(
                f"{path}: refset was built with a different normalization table "
                f"(digest {header.get('normalization_digest')!r} != {table.digest()!r})"
            )
        if header.get("punctuation_digest") != punctuation.digest():
            raise ReportError(f"{path}: refset was built with a different punctuation set")
        normalized = [normalize_text(a, table, punctuation) for a in answers]
        refsets[qid] = build_reference_set(
            qid, normalized, w_max=config.w_max, leave_one_out=config.fluency_leave_one_out
        )

    by_model: dict[str, list[tuple[str, object]]] = {}
    for record in responses:
        text = normalize_text(record.response, table, punctuation)
        triple = score_response(
            text, refsets[record.question_id], rules[record.question_id], threshold=config.threshold
        )
        by_model.setdefault(record.model, []).append((record.question_id, triple))

    subjects = {qid: q.subject for qid, q in questions.items()}
    models = []
    for model in sorted(by_model):
        result = aggregate(by_model[model], subjects=subjects)
        models.append(
            ModelReport(
                model=model,
                overall=result.overall,
                question_count=len(result.questions),
                response_count=result.total_responses,
                questions=result.questions,
            )
        )

    metadata = {
        "tool_version": __version__,
        "threshold": config.threshold,
        "config_digest": config.digest(),
        "normalization_digest": table.digest(),
        "punctuation_digest": punctuation.digest(),
        "refset_digest": refset_collection_digest(refset_paths),
        "response_count": len(responses),
        "question_count": len(needed),
    }
    report = ScoreReport(models=tuple(models), metadata=metadata)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_score_report(out_dir / "report.json", report)
    (out_dir / "leaderboard.md").write_text(
        render_leaderboard(report, "markdown"), encoding="utf-8"
    )
    print(render_leaderboard(report, "markdown"), end="")
    print(f"wrote {out_dir / 'report.json'} and {out_dir / 'leaderboard.md'}")
    return 0


def pearson(xs: list[float], ys: list[float]) -> float:
    """Pearson correlation of two equal-length series."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise ReportError("correlation needs two series of equal length >= 2")
    try:
        return statistics.correlation(xs, ys)
    except statistics.StatisticsError as err:
        raise ReportError(f"correlation undefined: {err}") from err


def cmd_correlate(args) -> int:
    report = read_score_report(args.report)
    ours = {m.model: m.overall.final for m in report.models}
    external = read_external_scores(args.external)

    common = sorted(set(ours) & set(external))
    if len(common) < 3:
        raise ReportError(
            f"need at least 3 models present in both inputs, found {len(common)}"
        )
    xs = [ours[m] for m in common]
    ys = [external[m] for m in common]
    r = pearson(xs, ys)

    width = max(len(m) for m in common)
    print(f"{'model'.ljust(width)}\tscore\texternal")
    for model in common:
        print(f"{model.ljust(width)}\t{ours[model]:.4f}\t{external[model]:.4f}")
    print(f"pearson_r\t{r:.6f}\tn={len(common)}")

    if args.out:
        doc = {
            "pearson_r": r,
            "n": len(common),
            "pairs": [
                {"model": m, "score": ours[m], "external": external[m]} for m in common
            ],
        }
        Path(args.out).write_text(
            json.dumps(doc, sort_keys=True, ensure_ascii=False, indent=1) + "\n",
            encoding="utf-8",
        )
    return 0


def cmd_report(args) -> int:
    report = read_score_report(args.report)
    rendered = render_leaderboard(report, args.format)
    if args.out:
        Path(args.out).write_text(rendered, encoding="utf-8")
    else:
        print(rendered, end="")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gramscore",
        description="Deterministic n-gram and rule based scoring for open-ended text generation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    build = sub.add_parser("build-refset", help="construct refined reference answer sets")
    build.add_argument("--questions", required=True, help="questions file (JSONL)")
    build.add_argument("--candidates", required=True, help="candidate responses file (JSONL)")
    build.add_argument("--drop-rules", help="directory of <question_id>.drop rule files")
    build.add_argument("--out", required=True, help="output directory for refsets")
    build.add_argument("--keep", type=int, help="final answers per question")
    build.add_argument("--length-keep", dest="length_keep", type=int, help="answers kept after length refinement")
    build.add_argument("--seed", type=int, help="seed for the distribution refinement")
    build.add_argument("--config", help="config file (key = value lines)")
    build.add_argument("--strict", action="store_true", help="abort on malformed candidate records")
    build.set_defaults(func=cmd_build_refset)

    score = sub.add_parser("score", help="score a responses file against refsets and rules")
    score.add_argument("--questions", required=True)
    score.add_argument("--refsets", required=True, help="directory of <question_id>.refset files")
    score.add_argument("--rules", required=True, help="directory of <question_id>.rules files")
    score.add_argument("--responses", required=True, help="responses file (JSONL)")
    score.add_argument("--out", required=True, help="output directory for report files")
    score.add_argument("--threshold", type=float, help="truthfulness frequency threshold")
    score.add_argument("--config", help="config file (key = value lines)")
    score.add_argument("--strict", action="store_true", help="abort on malformed response records")
    score.set_defaults(func=cmd_score)

    corr = sub.add_parser("correlate", help="Pearson correlation against external scores")
    corr.add_argument("--report", required=True, help="score report JSON")
    corr.add_argument("--external", required=True, help="external scores file (JSONL)")
    corr.add_argument("--out", help="optional JSON output for r and the paired table")
    corr.set_defaults(func=cmd_correlate)

    rep = sub.add_parser("report", help="render a leaderboard from a score report")
    rep.add_argument("--report", required=True, help="score report JSON")
    rep.add_argument("--format", choices=("markdown", "tsv"), default="markdown")
    rep.add_argument("--out", help="write the table here instead of stdout")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GramscoreError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
