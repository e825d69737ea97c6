"""Shared fixtures and oracle helpers for the test suite."""

from __future__ import annotations

import json
import math
import random

import pytest

from gramscore.metrics import discount
from gramscore.ngram import NGramTable
from gramscore.rules import RuleSet, eval_rule
from gramscore.textnorm import IDENTITY_RULE_TABLE, NormalizedText, extract_grams, normalize_text

HIRAGANA = "あいうえおかきくけこさしすせそ"


def nt(s: str) -> NormalizedText:
    """Build a NormalizedText without rewriting (identity table, default classes)."""
    return normalize_text(s, IDENTITY_RULE_TABLE)


def random_text(rng: random.Random, length: int, alphabet: str = HIRAGANA) -> str:
    return "".join(rng.choice(alphabet) for _ in range(length))


def brute_force_truthfulness(text: NormalizedText, table: NGramTable, threshold: float = 0.005) -> float:
    """Independent oracle: recompute the discounted score for every truncation."""
    length = text.length
    grams = extract_grams(text, 3)

    def likelihood(j: int) -> float:
        return table.doc_frequency(grams[j]) if 0 <= j < len(grams) else 0.0

    candidates = [length] if length <= 100 else list(range(100, length + 1))
    scores = []
    for cut in candidates:
        values = []
        for i in range(1, cut + 1):
            if not text.content_mask[i - 1]:
                continue
            best = max(likelihood(i - 1), likelihood(i), likelihood(i + 1))
            values.append(min(best, threshold) / threshold)
        if not values:
            continue
        factor = max(0.0, 1.0 - max(cut - 100, 0) / 50)
        scores.append(factor * (math.fsum(values) / len(values)))
    return max(scores, default=0.0)


def brute_force_helpfulness(text: NormalizedText, rules: RuleSet) -> float:
    """Independent oracle: evaluate the rule set on every truncated prefix."""
    s = text.text
    length = len(s)
    total = math.fsum(c.weight for c in rules.clauses)
    candidates = [length] if length <= 100 else list(range(100, length + 1))
    scores = []
    for cut in candidates:
        prefix = s[:cut]
        satisfied = math.fsum(c.weight for c in rules.clauses if eval_rule(c.expr, prefix))
        factor = max(0.0, 1.0 - max(cut - 100, 0) / 50)
        scores.append(factor * (satisfied / total))
    return max(scores, default=0.0)


QUESTIONS = [
    {
        "question_id": "q001",
        "subject": "sciences",
        "question": "水の沸点は何度ですか。",
        "sample_answer": "水の沸点は標準気圧のもとでおよそ百度であり、温度計の基準として広く用いられています。",
    },
    {
        "question_id": "q002",
        "subject": "social_studies",
        "question": "再生可能エネルギーとは何ですか。",
        "sample_answer": "再生可能エネルギーとは太陽光や風力、水力など自然から得られる枯渇しないエネルギーの総称です。",
    },
    {
        "question_id": "q003",
        "subject": "mathematics",
        "question": "三角形の内角の和は何度ですか。",
        "sample_answer": "三角形の内角の和は平面上では常に百八十度になります。",
    },
]

CANONICAL = {
    "q001": [
        "水の沸点は標準気圧でおよそ百度です。",
        "水は一気圧のもとで百度で沸騰します。",
        "水の沸点はおよそ百度であり、気圧によって変わります。",
        "標準的な気圧では水は百度で沸騰するとされています。",
    ],
    "q002": [
        "再生可能エネルギーとは太陽光や風力など自然から繰り返し得られるエネルギーです。",
        "太陽光、風力、水力などの自然の力から得られる枯渇しないエネルギーを指します。",
        "再生可能エネルギーは自然界から補充され続けるエネルギー源の総称です。",
        "太陽光や風力のように使っても減らないエネルギーを再生可能エネルギーと呼びます。",
    ],
    "q003": [
        "三角形の内角の和は常に百八十度です。",
        "どのような三角形でも内角の和は百八十度になります。",
        "平面上の三角形では内角の和が百八十度であると定められています。",
        "三角形の三つの内角を足すと必ず百八十度になります。",
    ],
}

HALLUCINATED = {
    "q001": ["水の沸点は摂氏五十度くらいだと言われています。"],
    "q002": ["再生可能エネルギーとは石炭や石油のことです。"],
    "q003": ["三角形の内角の和は三百六十度です。"],
}

DROP_RULES = {
    "q001": 'ANY("五十度")\n',
    "q002": 'ANY("石炭", "石油")\n',
    "q003": 'ANY("三百六十")\nNOT("百八十")\n',
}

SCORING_RULES = {
    "q001": '"沸点"\n"百度"\nANY("気圧", "一気圧")\n',
    "q002": '"再生可能"\nANY("太陽光", "風力", "水力")\n2\t"エネルギー"\n',
    "q003": '"内角"\nANY("百八十", "180")\n',
}


def write_jsonl(path, records) -> None:
    path.write_text(
        "\n".join(json.dumps(r, ensure_ascii=False) for r in records) + "\n", encoding="utf-8"
    )


@pytest.fixture
def toy_benchmark(tmp_path):
    """A small three-question benchmark: questions, candidates, rules, config."""
    write_jsonl(tmp_path / "questions.jsonl", QUESTIONS)

    candidates = []
    models = ["gen-a", "gen-b"]
    for qid, sentences in CANONICAL.items():
        for sentence in sentences:
            for k in range(5):  # repeats keep 5-grams off the singleton list
                candidates.append(
                    {"question_id": qid, "model": models[k % 2], "response": sentence}
                )
        for sentence in HALLUCINATED[qid]:
            candidates.append({"question_id": qid, "model": "gen-a", "response": sentence})
    write_jsonl(tmp_path / "candidates.jsonl", candidates)

    drop_dir = tmp_path / "drop"
    drop_dir.mkdir()
    for qid, body in DROP_RULES.items():
        (drop_dir / f"{qid}.drop").write_text(body, encoding="utf-8")

    rules_dir = tmp_path / "rules"
    rules_dir.mkdir()
    for qid, body in SCORING_RULES.items():
        (rules_dir / f"{qid}.rules").write_text(body, encoding="utf-8")

    (tmp_path / "config.txt").write_text("keep = 8\nlength_keep = 20\nseed = 11\n", encoding="utf-8")
    return tmp_path
