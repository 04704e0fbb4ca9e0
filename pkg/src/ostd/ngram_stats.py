"""Occurrence scores over indexed corpora.

Two scoring models over a token sequence z:

* raw-frequency: the mean, over z's n-grams (or its key phrases), of the
  total cross-subset occurrence count.
* count-based likelihood: the mean, over n-gram positions, of
  log((count(gram) + eps) / (count(prefix) + eps)) with the (n-1)-gram
  prefix counted from the same indexes; eps = 1e-8.

Optional stopword filters: drop grams whose stopword fraction exceeds
0.66 (strict), or drop positions whose final token is a stopword.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ostd.errors import UndefinedScoreError, UnknownTokenError, ValidationError
from ostd.stopwords import ENGLISH_STOPWORDS
from ostd.suffix_index import count_across_subsets

DEFAULT_EPSILON = 1e-8
DEFAULT_FRAC_THRESHOLD = 0.66

MODE_NONE = "none"
MODE_RAW_FRAC = "raw_frac"
MODE_FINAL_TOKEN = "final_token"
_MODES = (MODE_NONE, MODE_RAW_FRAC, MODE_FINAL_TOKEN)


@dataclass(frozen=True)
class NGram:
    tokens: tuple
    n: int

    def __post_init__(self):
        if self.n != len(self.tokens):
            raise ValidationError("NGram length field disagrees with its tokens")


@dataclass
class StopwordFilterConfig:
    stopword_set: frozenset = ENGLISH_STOPWORDS
    frac_threshold: float = DEFAULT_FRAC_THRESHOLD
    mode: str = MODE_NONE

    def __post_init__(self):
        if not (0.0 < self.frac_threshold <= 1.0):
            raise ValidationError("frac_threshold must be in (0, 1]")
        if self.mode not in _MODES:
            raise ValidationError(f"unknown filter mode {self.mode!r}")


@dataclass
class ScoreConfig:
    epsilon: float = DEFAULT_EPSILON
    n: int = 2

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")


NO_FILTER = StopwordFilterConfig()


def enumerate_ngrams(tokens, n: int) -> list[NGram]:
    """All stride-1 overlapping n-grams of ``tokens``, in position order."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    toks = tuple(int(t) for t in tokens)
    return [NGram(tokens=toks[i : i + n], n=n) for i in range(len(toks) - n + 1)]


def _is_stopword(token_id: int, cfg: StopwordFilterConfig, tokenizer) -> bool:
    word = tokenizer.decode_token(token_id).strip().lower()
    return word in cfg.stopword_set


def stopword_frac(gram: NGram, cfg: StopwordFilterConfig, tokenizer) -> float:
    """Fraction of the gram's tokens whose decoded text is a stopword."""
    hits = sum(1 for t in gram.tokens if _is_stopword(t, cfg, tokenizer))
    return hits / gram.n


def gram_survives(gram: NGram, cfg: StopwordFilterConfig, tokenizer) -> bool:
    """Apply the configured filter to one gram.

    raw_frac discards grams with stopword fraction strictly above the
    threshold (2/3 stopwords at 0.66 is discarded; exactly 0.66 is
    retained). final_token discards grams ending in a stopword.
    """
    if cfg.mode == MODE_NONE:
        return True
    if cfg.mode == MODE_RAW_FRAC:
        return stopword_frac(gram, cfg, tokenizer) <= cfg.frac_threshold
    return not _is_stopword(gram.tokens[-1], cfg, tokenizer)


def surviving_ngrams(tokens, n, cfg: StopwordFilterConfig = NO_FILTER, tokenizer=None) -> list[NGram]:
    grams = enumerate_ngrams(tokens, n)
    if cfg.mode == MODE_NONE:
        return grams
    if tokenizer is None:
        raise ValidationError("stopword filtering requires a tokenizer to decode ids")
    return [g for g in grams if gram_survives(g, cfg, tokenizer)]


def s_raw(tokens, n: int, indexes, cfg: StopwordFilterConfig = NO_FILTER, tokenizer=None) -> float:
    """Mean cross-subset total count over the surviving n-grams."""
    grams = surviving_ngrams(tokens, n, cfg, tokenizer)
    if not grams:
        raise UndefinedScoreError(f"no surviving {n}-grams")
    total = 0
    for gram in grams:
        total += count_across_subsets(indexes, gram.tokens).total
    return total / len(grams)


def s_raw_phrases(phrase_totals) -> float:
    """Raw-frequency score when the gram set is a list of phrase totals."""
    totals = list(phrase_totals)
    if not totals:
        raise UndefinedScoreError("no phrases to score")
    return sum(totals) / len(totals)


def s_ng(tokens, n: int, indexes, score_cfg: ScoreConfig | None = None,
         filter_cfg: StopwordFilterConfig = NO_FILTER, tokenizer=None) -> float:
    """Count-based n-gram likelihood score (natural log scale).

    Restricted to n >= 2: the (n-1)-gram prefix is degenerate at n = 1.
    """
    if n < 2:
        raise ValidationError("s_ng requires n >= 2 (the prefix is empty at n = 1)")
    eps = (score_cfg.epsilon if score_cfg else DEFAULT_EPSILON)
    toks = tuple(int(t) for t in tokens)
    if len(toks) < n:
        raise UndefinedScoreError(f"sequence of {len(toks)} tokens has no {n}-grams")
    if filter_cfg.mode != MODE_NONE and tokenizer is None:
        raise ValidationError("stopword filtering requires a tokenizer to decode ids")
    terms = []
    for i in range(len(toks) - n + 1):
        gram = NGram(tokens=toks[i : i + n], n=n)
        if filter_cfg.mode != MODE_NONE and not gram_survives(gram, filter_cfg, tokenizer):
            continue
        gram_count = count_across_subsets(indexes, gram.tokens).total
        prefix_count = count_across_subsets(indexes, gram.tokens[:-1]).total
        terms.append(math.log((gram_count + eps) / (prefix_count + eps)))
    if not terms:
        raise UndefinedScoreError(f"no surviving {n}-gram positions")
    return sum(terms) / len(terms)


def expand_phrase_variants(phrase: str) -> list[str]:
    """Capitalization and spacing variants of a key phrase.

    Deduplicated, order-preserving: original, lowercase, title-case, and
    each of those with one leading space.
    """
    if not phrase:
        raise ValidationError("phrase must be non-empty")
    title = " ".join(w.capitalize() for w in phrase.split(" "))
    bases = [phrase, phrase.lower(), title]
    variants = []
    for base in bases + [" " + b for b in bases]:
        if base not in variants:
            variants.append(base)
    return variants


def phrase_total(phrase: str, indexes, tokenizer, expand: bool = True) -> int:
    """Total count of a phrase summed over its variants and all subsets.

    Variants that do not tokenize under a frozen vocabulary cannot occur
    in the corpus and contribute zero.
    """
    texts = expand_phrase_variants(phrase) if expand else [phrase]
    total = 0
    for text in texts:
        try:
            ids = tokenizer.encode(text)
        except UnknownTokenError:
            continue
        if not ids:
            continue
        total += count_across_subsets(indexes, ids).total
    return total


def keyphrase_score(phrases, indexes, tokenizer) -> float:
    """Mean over phrases of the variant-expanded cross-subset total."""
    phrases = list(phrases)
    if not phrases:
        raise UndefinedScoreError("no key phrases")
    return s_raw_phrases(phrase_total(p, indexes, tokenizer) for p in phrases)


def full_generation_count(generation_tokens, indexes) -> int:
    """Cross-subset total of the entire generation as one verbatim pattern."""
    toks = list(generation_tokens)
    if not toks:
        raise ValidationError("generation must contain at least one token")
    return count_across_subsets(indexes, toks).total


@dataclass
class SparsityReport:
    dataset: str
    percent_zero: dict[int, float]
    keyphrase_percent_zero: float | None = None
    zero_examples: dict[int, list[str]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "dataset": self.dataset,
            "percent_zero": {str(n): p for n, p in sorted(self.percent_zero.items())},
            "examples": {str(n): ex for n, ex in sorted(self.zero_examples.items())},
        }
        if self.keyphrase_percent_zero is not None:
            out["key_phrases_percent_zero"] = self.keyphrase_percent_zero
        return out


def sparsity_report(questions, indexes, n_values, key_phrases=None, tokenizer=None,
                    dataset: str = "", max_examples: int = 3) -> SparsityReport:
    """Percentage of question n-grams with zero corpus occurrences.

    Grams are pooled over all questions with multiplicity. When per-
    question key-phrase lists are supplied, a phrase counts as zero when
    its variant-expanded total is zero.
    """
    questions = [list(q) for q in questions]
    if not questions:
        raise ValidationError("at least one question required")
    percent: dict[int, float] = {}
    examples: dict[int, list[str]] = {}
    for n in n_values:
        total = 0
        zeros = 0
        example_rows: list[str] = []
        for q in questions:
            for gram in enumerate_ngrams(q, n):
                total += 1
                if count_across_subsets(indexes, gram.tokens).total == 0:
                    zeros += 1
                    if tokenizer is not None and len(example_rows) < max_examples:
                        example_rows.append(tokenizer.decode(gram.tokens))
        percent[n] = 100.0 * zeros / total if total else 0.0
        examples[n] = example_rows
    kp_percent = None
    if key_phrases is not None:
        if tokenizer is None:
            raise ValidationError("key-phrase sparsity requires a tokenizer")
        flat = [p for phrases in key_phrases for p in phrases]
        if flat:
            kp_zeros = sum(
                1 for p in flat if phrase_total(p, indexes, tokenizer) == 0
            )
            kp_percent = 100.0 * kp_zeros / len(flat)
    return SparsityReport(
        dataset=dataset,
        percent_zero=percent,
        keyphrase_percent_zero=kp_percent,
        zero_examples=examples,
    )
