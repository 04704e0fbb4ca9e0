"""Per-record feature assembly and the feature-matrix utilities.

Features per QA record: occurrence scores for the prompt (raw model at
n = 1..5, likelihood model at n = 2..5, key-phrase total) and for the
generation (raw at n = 1..2, likelihood at n = 2, verbatim full-sequence
count), plus the two log-probability aggregates ingested from the
serving model. The name list below is frozen: it is the CSV header
contract.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ostd.errors import UndefinedScoreError, ValidationError
from ostd.labeling_eval import auroc
from ostd.ngram_stats import (
    DEFAULT_EPSILON,
    MODE_NONE,
    NO_FILTER,
    ScoreConfig,
    StopwordFilterConfig,
    full_generation_count,
    keyphrase_score,
    s_ng,
    s_raw,
)

FEATURE_NAMES = (
    "pr_raw_1",
    "pr_raw_2",
    "pr_raw_3",
    "pr_raw_4",
    "pr_raw_5",
    "pr_ng_2",
    "pr_ng_3",
    "pr_ng_4",
    "pr_ng_5",
    "pr_keyphrase",
    "gen_raw_1",
    "gen_raw_2",
    "gen_ng_2",
    "gen_full_count",
    "gen_logp",
    "pr_logp",
)

PROMPT_OCCURRENCE_FEATURES = (
    "pr_raw_1",
    "pr_raw_2",
    "pr_raw_3",
    "pr_raw_4",
    "pr_raw_5",
    "pr_ng_2",
    "pr_ng_3",
    "pr_ng_4",
    "pr_ng_5",
    "pr_keyphrase",
)

GENERATION_OCCURRENCE_FEATURES = (
    "gen_raw_1",
    "gen_raw_2",
    "gen_ng_2",
    "gen_full_count",
)


@dataclass
class QARecord:
    """One prompt/generation pair with references and optional extras."""

    id: str
    question: str
    generation: str
    references: list[str]
    question_tokens: list[int] = field(default_factory=list)
    generation_tokens: list[int] = field(default_factory=list)
    gen_token_logprobs: list[float] | None = None
    prompt_token_logprobs: list[float] | None = None
    key_phrases: list[str] | None = None

    def validate(self) -> None:
        if self.gen_token_logprobs is not None:
            if len(self.gen_token_logprobs) != len(self.generation_tokens):
                raise ValidationError(
                    f"record {self.id}: {len(self.gen_token_logprobs)} generation "
                    f"log-probs for {len(self.generation_tokens)} tokens"
                )
            if any(lp > 0 for lp in self.gen_token_logprobs):
                raise ValidationError(f"record {self.id}: positive log-probability")
        if self.prompt_token_logprobs is not None and any(
            lp > 0 for lp in self.prompt_token_logprobs
        ):
            raise ValidationError(f"record {self.id}: positive log-probability")


@dataclass
class FeatureVector:
    values: dict[str, float]
    undefined_flags: set[str] = field(default_factory=set)

    def as_row(self) -> list[float]:
        return [self.values[name] for name in FEATURE_NAMES]


@dataclass
class FeatureConfig:
    """Scoring and filtering knobs for feature assembly.

    By default stopwords are retained everywhere; the two named filters
    can be switched on per feature family.
    """

    epsilon: float = DEFAULT_EPSILON
    prompt_raw_filter: StopwordFilterConfig = field(default_factory=StopwordFilterConfig)
    prompt_ng_filter: StopwordFilterConfig = field(default_factory=StopwordFilterConfig)
    gen_raw_filter: StopwordFilterConfig = field(default_factory=StopwordFilterConfig)
    gen_ng_filter: StopwordFilterConfig = field(default_factory=StopwordFilterConfig)
    require_logprobs: bool = True

    def undefined_default(self, name: str) -> float:
        if name.startswith(("pr_ng", "gen_ng")):
            return math.log(self.epsilon)
        return 0.0


def gen_logprob(gen_token_logprobs) -> float:
    """Average conditional log-probability of the generation tokens."""
    vals = list(gen_token_logprobs)
    if not vals:
        raise ValidationError("generation log-probability list is empty")
    return sum(vals) / len(vals)


def prompt_logprob(prompt_token_logprobs, m: int) -> float:
    """Average log-probability of prompt tokens 2..m (m-1 values)."""
    vals = list(prompt_token_logprobs)
    if m < 2:
        raise ValidationError("prompt log-probability needs at least 2 prompt tokens")
    if len(vals) != m - 1:
        raise ValidationError(f"expected {m - 1} prompt log-probs, got {len(vals)}")
    return sum(vals) / len(vals)


def assemble_features(record: QARecord, indexes, config: FeatureConfig | None = None,
                      tokenizer=None) -> FeatureVector:
    """Compute the full named feature vector for one record.

    Occurrence scores that come back undefined (nothing survived
    filtering, sequence too short, missing key phrases) are replaced by
    the configured default and recorded in ``undefined_flags`` so rows
    stay auditable.
    """
    cfg = config or FeatureConfig()
    record.validate()
    values: dict[str, float] = {}
    flags: set[str] = set()

    def put(name, compute):
        try:
            values[name] = float(compute())
        except UndefinedScoreError:
            values[name] = cfg.undefined_default(name)
            flags.add(name)

    q = record.question_tokens
    g = record.generation_tokens
    score_cfg = ScoreConfig(epsilon=cfg.epsilon)

    for n in range(1, 6):
        put(f"pr_raw_{n}", lambda n=n: s_raw(q, n, indexes, cfg.prompt_raw_filter, tokenizer))
    for n in range(2, 6):
        put(f"pr_ng_{n}", lambda n=n: s_ng(q, n, indexes, score_cfg, cfg.prompt_ng_filter, tokenizer))
    put(
        "pr_keyphrase",
        lambda: keyphrase_score(record.key_phrases, indexes, tokenizer)
        if record.key_phrases
        else _undefined("record has no key phrases"),
    )
    for n in range(1, 3):
        put(f"gen_raw_{n}", lambda n=n: s_raw(g, n, indexes, cfg.gen_raw_filter, tokenizer))
    put("gen_ng_2", lambda: s_ng(g, 2, indexes, score_cfg, cfg.gen_ng_filter, tokenizer))
    put(
        "gen_full_count",
        lambda: full_generation_count(g, indexes) if g else _undefined("empty generation"),
    )

    if record.gen_token_logprobs is None or record.prompt_token_logprobs is None:
        if cfg.require_logprobs:
            raise ValidationError(f"record {record.id}: log-probabilities are required")
        put("gen_logp", lambda: _undefined("missing generation log-probs"))
        put("pr_logp", lambda: _undefined("missing prompt log-probs"))
    else:
        values["gen_logp"] = gen_logprob(record.gen_token_logprobs)
        values["pr_logp"] = prompt_logprob(
            record.prompt_token_logprobs, len(record.prompt_token_logprobs) + 1
        )

    return FeatureVector(values=values, undefined_flags=flags)


def _undefined(reason: str):
    raise UndefinedScoreError(reason)


_DATASET_REQUIRED = ("id", "question", "generation", "references")
_DATASET_OPTIONAL = ("gen_token_logprobs", "prompt_token_logprobs", "key_phrases")


def read_dataset_jsonl(path, tokenizer=None) -> list[QARecord]:
    """Load QA records from JSON-lines; optional fields may be null.

    When a tokenizer is supplied, question and generation token ids are
    filled in during loading.
    """
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            missing = [k for k in _DATASET_REQUIRED if k not in obj]
            if missing:
                raise ValidationError(f"{path}:{lineno}: missing fields {missing}")
            record = QARecord(
                id=str(obj["id"]),
                question=obj["question"],
                generation=obj["generation"],
                references=list(obj["references"]),
                gen_token_logprobs=obj.get("gen_token_logprobs"),
                prompt_token_logprobs=obj.get("prompt_token_logprobs"),
                key_phrases=obj.get("key_phrases"),
            )
            if tokenizer is not None:
                record.question_tokens = tokenizer.encode(record.question)
                record.generation_tokens = tokenizer.encode(record.generation)
            records.append(record)
    return records


def feature_matrix(vectors) -> np.ndarray:
    """Stack feature vectors into an (N, len(FEATURE_NAMES)) float array."""
    return np.array([fv.as_row() for fv in vectors], dtype=np.float64)


def select_best_occurrence_features(matrix: np.ndarray, labels) -> dict[str, str]:
    """Pick the highest-AUROC prompt-side and generation-side features.

    AUROC is computed against the faithful class; exact ties fall back
    to the frozen feature-name order.
    """
    y = np.asarray(labels)
    if matrix.shape[0] < 2 or len(np.unique(y)) < 2:
        raise ValidationError("feature selection needs both classes present")
    name_to_col = {name: i for i, name in enumerate(FEATURE_NAMES)}

    def best(group):
        best_name, best_score = None, -np.inf
        for name in group:
            score = auroc(matrix[:, name_to_col[name]], y)
            if score > best_score:
                best_name, best_score = name, score
        return best_name

    return {
        "prompt_feature_name": best(PROMPT_OCCURRENCE_FEATURES),
        "generation_feature_name": best(GENERATION_OCCURRENCE_FEATURES),
    }


@dataclass
class StandardizationParams:
    mean: np.ndarray
    std: np.ndarray


def fit_standardizer(train_matrix: np.ndarray) -> StandardizationParams:
    """Column-wise mean and population (1/N) standard deviation."""
    x = np.asarray(train_matrix, dtype=np.float64)
    if x.size == 0:
        raise ValidationError("cannot standardize an empty matrix")
    return StandardizationParams(mean=x.mean(axis=0), std=x.std(axis=0))


def apply_standardizer(params: StandardizationParams, matrix: np.ndarray) -> np.ndarray:
    """Z-score with the training statistics; zero-variance columns map to 0."""
    x = np.asarray(matrix, dtype=np.float64)
    std = np.where(params.std > 0, params.std, 1.0)
    out = (x - params.mean) / std
    out[:, params.std == 0] = 0.0
    return out
