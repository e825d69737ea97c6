"""Deterministic, judge-free scoring of open-ended text generation.

Scores model responses against per-question reference answer sets using
character n-gram statistics (fluency, truthfulness) and weighted keyword
rules (helpfulness), and builds those reference sets from raw candidate
corpora via rule, rarity, length, and distribution refinement stages.
"""

__version__ = "0.1.0"

from .errors import (
    CalibrationError,
    ConfigError,
    FormatError,
    GramscoreError,
    ReportError,
    RuleParseError,
)
from .metrics import (
    MetricTriple,
    AggregateResult,
    QuestionAggregate,
    aggregate,
    build_reference_set,
    calibrate_fluency,
    discount,
    fluency,
    fluency_raw,
    helpfulness,
    helpfulness_profile,
    score_response,
    truthfulness,
    truthfulness_profile,
)
from .ngram import NGramTable, ReferenceSet, build_index
from .pipeline import (
    Candidate,
    CandidatePool,
    DistributionVector,
    apply_drop_rules,
    distribution_refine,
    length_refine,
    make_pool,
    mse_distance,
    rare_gram_filter,
)
from .rules import (
    AllOf,
    AnyOf,
    Clause,
    DropRule,
    Not,
    RuleSet,
    Term,
    eval_rule,
    format_expr,
    format_rules,
    load_drop_rules_dir,
    load_rules_dir,
    parse_drop_rules,
    parse_expr,
    parse_rules,
    rule_score,
)
from .textnorm import (
    BOS,
    CONTENT,
    DEFAULT_PUNCTUATION,
    DEFAULT_RULE_TABLE,
    EOS,
    IDENTITY_RULE_TABLE,
    MAX_GRAM_WIDTH,
    PUNCTUATION,
    NormalizedText,
    PunctuationSet,
    RuleTable,
    classify_char,
    extract_grams,
    normalize_text,
)
