import json
import math

import pytest

from conftest import write_jsonl
from gramscore.cli import main, pearson
from gramscore.errors import ReportError
from gramscore.formats import read_refset, read_score_report


def run(argv):
    return main([str(a) for a in argv])


def build_refsets(base, out_name="refsets"):
    out = base / out_name
    code = run(
        [
            "build-refset",
            "--questions", base / "questions.jsonl",
            "--candidates", base / "candidates.jsonl",
            "--drop-rules", base / "drop",
            "--out", out,
            "--config", base / "config.txt",
        ]
    )
    return code, out


class TestBuildRefset:
    def test_toy_pipeline_produces_refsets(self, toy_benchmark):
        code, out = build_refsets(toy_benchmark)
        assert code == 0
        for qid in ("q001", "q002", "q003"):
            header, answers = read_refset(out / f"{qid}.refset")
            assert header["question_id"] == qid
            assert len(answers) == 8
        report = json.loads((out / "pipeline_report.json").read_text(encoding="utf-8"))
        assert report["failures"] == []
        q1 = report["questions"]["q001"]
        assert q1["ingested"] == 21
        assert q1["drop_stage"]["removed"] == 1
        # stage accounting: every candidate is kept or removed somewhere
        assert (
            q1["drop_stage"]["removed"] + q1["rare_stage"]["removed"] + q1["rare_stage"]["kept"]
            == q1["ingested"]
        )

    def test_rerun_is_byte_identical(self, toy_benchmark):
        _, first = build_refsets(toy_benchmark, "refsets_a")
        _, second = build_refsets(toy_benchmark, "refsets_b")
        for name in ("q001.refset", "q002.refset", "q003.refset", "pipeline_report.json"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_missing_question_in_candidates_errors(self, toy_benchmark, capsys):
        records = [
            json.loads(line)
            for line in (toy_benchmark / "candidates.jsonl").read_text(encoding="utf-8").splitlines()
        ]
        write_jsonl(
            toy_benchmark / "candidates.jsonl",
            [r for r in records if r["question_id"] != "q002"],
        )
        code, _ = build_refsets(toy_benchmark)
        assert code == 1
        assert "q002" in capsys.readouterr().err

    def test_unknown_question_in_candidates_errors(self, toy_benchmark, capsys):
        with (toy_benchmark / "candidates.jsonl").open("a", encoding="utf-8") as handle:
            handle.write(json.dumps({"question_id": "q999", "model": "m", "response": "x"}) + "\n")
        code, _ = build_refsets(toy_benchmark)
        assert code == 1
        assert "q999" in capsys.readouterr().err


@pytest.fixture
def scored_benchmark(toy_benchmark):
    code, refsets = build_refsets(toy_benchmark)
    assert code == 0

    responses = []
    for qid in ("q001", "q002", "q003"):
        _, answers = read_refset(refsets / f"{qid}.refset")
        responses.extend(
            {"question_id": qid, "model": "copycat", "response": a} for a in answers
        )
        responses.append({"question_id": qid, "model": "empty", "response": ""})
        responses.append(
            {"question_id": qid, "model": "decent", "response": answers[0][: len(answers[0]) // 2]}
        )
    write_jsonl(toy_benchmark / "responses.jsonl", responses)

    out = toy_benchmark / "scores"
    code = run(
        [
            "score",
            "--questions", toy_benchmark / "questions.jsonl",
            "--refsets", refsets,
            "--rules", toy_benchmark / "rules",
            "--responses", toy_benchmark / "responses.jsonl",
            "--out", out,
            "--config", toy_benchmark / "config.txt",
        ]
    )
    assert code == 0
    return toy_benchmark, out


class TestScore:
    def test_refset_answers_score_fluency_one(self, scored_benchmark):
        _, out = scored_benchmark
        report = read_score_report(out / "report.json")
        copycat = next(m for m in report.models if m.model == "copycat")
        assert copycat.overall.fluency == pytest.approx(1.0, abs=1e-9)
        assert copycat.question_count == 3

    def test_empty_model_ranks_last(self, scored_benchmark):
        _, out = scored_benchmark
        leaderboard = (out / "leaderboard.md").read_text(encoding="utf-8").splitlines()
        assert leaderboard[-1].startswith("| empty |")
        report = read_score_report(out / "report.json")
        empty = next(m for m in report.models if m.model == "empty")
        assert empty.overall.final < 0.05

    def test_overall_final_recomputes_from_questions(self, scored_benchmark):
        _, out = scored_benchmark
        report = read_score_report(out / "report.json")
        for model in report.models:
            recomputed = math.fsum(q.mean.final for q in model.questions) / len(model.questions)
            assert abs(model.overall.final - recomputed) < 1e-12

    def test_missing_refset_and_rules_listed(self, toy_benchmark, capsys):
        code, refsets = build_refsets(toy_benchmark)
        assert code == 0
        (refsets / "q001.refset").unlink()
        (toy_benchmark / "rules" / "q003.rules").unlink()
        write_jsonl(
            toy_benchmark / "responses.jsonl",
            [
                {"question_id": "q001", "model": "m", "response": "x"},
                {"question_id": "q003", "model": "m", "response": "y"},
            ],
        )
        code = run(
            [
                "score",
                "--questions", toy_benchmark / "questions.jsonl",
                "--refsets", refsets,
                "--rules", toy_benchmark / "rules",
                "--responses", toy_benchmark / "responses.jsonl",
                "--out", toy_benchmark / "scores",
            ]
        )
        err = capsys.readouterr().err
        assert code == 1
        assert "missing refset: q001" in err
        assert "missing rules: q003" in err

    def test_normalization_digest_mismatch_rejected(self, toy_benchmark, capsys):
        code, refsets = build_refsets(toy_benchmark)
        assert code == 0
        write_jsonl(
            toy_benchmark / "responses.jsonl",
            [{"question_id": "q001", "model": "m", "response": "x"}],
        )
        norm_file = toy_benchmark / "other_norm.tsv"
        norm_file.write_text("abc\txyz\n", encoding="utf-8")
        config = toy_benchmark / "config2.txt"
        config.write_text(f"normalization_rules = {norm_file}\n", encoding="utf-8")
        code = run(
            [
                "score",
                "--questions", toy_benchmark / "questions.jsonl",
                "--refsets", refsets,
                "--rules", toy_benchmark / "rules",
                "--responses", toy_benchmark / "responses.jsonl",
                "--out", toy_benchmark / "scores",
                "--config", config,
            ]
        )
        assert code == 1
        assert "different normalization table" in capsys.readouterr().err


class TestCorrelate:
    def test_identity_and_negation(self, scored_benchmark, tmp_path, capsys):
        base, out = scored_benchmark
        report = read_score_report(out / "report.json")
        finals = {m.model: m.overall.final for m in report.models}

        identical = tmp_path / "same.jsonl"
        write_jsonl(identical, [{"model": m, "score": s} for m, s in finals.items()])
        out_json = tmp_path / "corr.json"
        code = run(
            ["correlate", "--report", out / "report.json", "--external", identical, "--out", out_json]
        )
        assert code == 0
        assert abs(json.loads(out_json.read_text())["pearson_r"] - 1.0) <= 1e-12

        negated = tmp_path / "neg.jsonl"
        write_jsonl(negated, [{"model": m, "score": 5.0 - 2.0 * s} for m, s in finals.items()])
        code = run(
            ["correlate", "--report", out / "report.json", "--external", negated, "--out", out_json]
        )
        assert code == 0
        assert abs(json.loads(out_json.read_text())["pearson_r"] + 1.0) <= 1e-12

    def test_too_few_common_models(self, scored_benchmark, tmp_path, capsys):
        _, out = scored_benchmark
        external = tmp_path / "ext.jsonl"
        write_jsonl(external, [{"model": "copycat", "score": 1.0}, {"model": "nobody", "score": 2.0}])
        code = run(["correlate", "--report", out / "report.json", "--external", external])
        assert code == 1
        assert "at least 3 models" in capsys.readouterr().err

    def test_zero_variance_rejected(self, scored_benchmark, tmp_path, capsys):
        _, out = scored_benchmark
        report = read_score_report(out / "report.json")
        external = tmp_path / "ext.jsonl"
        write_jsonl(external, [{"model": m.model, "score": 7.0} for m in report.models])
        code = run(["correlate", "--report", out / "report.json", "--external", external])
        assert code == 1
        assert "correlation undefined" in capsys.readouterr().err

    def test_pearson_matches_closed_form(self):
        xs = [1.0, 2.0, 3.0, 4.0]
        ys = [1.5, 1.0, 2.5, 3.0]
        mx = math.fsum(xs) / len(xs)
        my = math.fsum(ys) / len(ys)
        sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
        sxx = math.fsum((x - mx) ** 2 for x in xs)
        syy = math.fsum((y - my) ** 2 for y in ys)
        expected = sxy / math.sqrt(sxx * syy)
        assert abs(pearson(xs, ys) - expected) <= 1e-12

    def test_pearson_needs_two_points(self):
        with pytest.raises(ReportError):
            pearson([1.0], [2.0])


class TestReportCommand:
    def test_markdown_and_tsv(self, scored_benchmark, tmp_path, capsys):
        _, out = scored_benchmark
        code = run(["report", "--report", out / "report.json", "--format", "markdown"])
        assert code == 0
        stdout = capsys.readouterr().out
        assert stdout.splitlines()[0] == "| Model | Score | Fluency | Truthfulness | Helpfulness |"

        dest = tmp_path / "board.tsv"
        code = run(["report", "--report", out / "report.json", "--format", "tsv", "--out", dest])
        assert code == 0
        assert dest.read_text(encoding="utf-8").startswith("Model\tScore")

    def test_tied_finals_order_by_name(self, tmp_path):
        from gramscore.formats import ModelReport, ScoreReport, render_leaderboard, write_score_report
        from gramscore.metrics import MetricTriple

        models = (
            ModelReport("bbb", MetricTriple(0.5, 0.5, 0.5), 0, 0, ()),
            ModelReport("aaa", MetricTriple(0.5, 0.5, 0.5), 0, 0, ()),
        )
        path = tmp_path / "r.json"
        write_score_report(path, ScoreReport(models=models, metadata={}))
        report = read_score_report(path)
        lines = render_leaderboard(report, "tsv").splitlines()
        assert [l.split("\t")[0] for l in lines[1:]] == ["aaa", "bbb"]
