"""Hallucination labeling, dataset splits, and evaluation statistics.

Labels: a generation is faithful under exact match when its normalized
text equals any normalized reference, and under ROUGE-L when the best
F1 against the references is at least 0.3 (strictly below 0.3 is
hallucinated). Splits are seeded and balanced by downsampling the
majority class. AUROC uses the rank formulation with average ranks so
ties count one half.

All seeded randomness comes from numpy's PCG64 generator; the algorithm
identifier is recorded in reports so splits replicate exactly.
"""

from __future__ import annotations

import math
import re
import string
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

from ostd.errors import ValidationError

HALLUCINATED = 0
FAITHFUL = 1
LABEL_NAMES = {HALLUCINATED: "hallucinated", FAITHFUL: "faithful"}

ROUGE_L_THRESHOLD = 0.3
RNG_ALGORITHM = "numpy-pcg64"

CRITERION_EM = "em"
CRITERION_ROUGE_L = "rougel"


def rng_from(seed, *stream) -> np.random.Generator:
    """Seeded generator; extra ints derive independent per-run streams."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, *stream))))


def _normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().lower())


def exact_match_label(generation: str, references) -> int:
    """Faithful iff the normalized generation equals any normalized reference."""
    refs = list(references)
    if not refs:
        raise ValidationError("exact match labeling needs at least one reference")
    gen = _normalize(generation)
    return FAITHFUL if any(gen == _normalize(r) for r in refs) else HALLUCINATED


def lcs_length(a, b) -> int:
    """Longest common subsequence length between two word sequences."""
    a, b = list(a), list(b)
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, 1):
            if x == y:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_words(text: str) -> list[str]:
    """Lowercase whitespace words with leading/trailing punctuation stripped."""
    words = []
    for w in text.lower().split():
        w = w.strip(string.punctuation)
        if w:
            words.append(w)
    return words


def rouge_l(candidate: str, reference: str) -> float:
    """ROUGE-L F1 between two texts (beta = 1)."""
    cand = rouge_words(candidate)
    ref = rouge_words(reference)
    if not cand or not ref:
        return 0.0
    lcs = lcs_length(cand, ref)
    p = lcs / len(cand)
    r = lcs / len(ref)
    if p + r == 0:
        return 0.0
    return 2 * p * r / (p + r)


def rouge_l_best(generation: str, references) -> float:
    refs = list(references)
    if not refs:
        raise ValidationError("ROUGE-L labeling needs at least one reference")
    return max(rouge_l(generation, r) for r in refs)


def rouge_label(generation: str, references, threshold: float = ROUGE_L_THRESHOLD) -> int:
    """Hallucinated iff the best ROUGE-L is strictly below the threshold."""
    return HALLUCINATED if rouge_l_best(generation, references) < threshold else FAITHFUL


@dataclass
class LabeledRecord:
    """One record's label plus whatever feature payload the caller attached."""

    id: str
    label: int
    features: object = None
    generation_length: int = 2


@dataclass
class LabeledDataset:
    records: list[LabeledRecord]
    split_seed: int
    criterion: str

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.int64)


def balanced_split(records, seed: int, criterion: str = CRITERION_EM) -> LabeledDataset:
    """Equal-sized classes via seeded downsampling of the majority class.

    Records whose generation is shorter than two tokens are excluded
    first (they have no 2-grams). Output order is shuffled
    deterministically.
    """
    kept = [r for r in records if r.generation_length >= 2]
    hall = [r for r in kept if r.label == HALLUCINATED]
    faith = [r for r in kept if r.label == FAITHFUL]
    if not hall or not faith:
        raise ValidationError(
            f"balanced split needs both classes after exclusion: "
            f"{len(hall)} hallucinated, {len(faith)} faithful"
        )
    rng = rng_from(seed, 0)
    k = min(len(hall), len(faith))
    if len(hall) > k:
        hall = [hall[i] for i in rng.choice(len(hall), size=k, replace=False)]
    if len(faith) > k:
        faith = [faith[i] for i in rng.choice(len(faith), size=k, replace=False)]
    merged = hall + faith
    order = rng.permutation(len(merged))
    return LabeledDataset(
        records=[merged[i] for i in order], split_seed=seed, criterion=criterion
    )


def train_test_split(dataset: LabeledDataset, fraction: float = 0.8, seed: int = 0):
    """Deterministic seeded partition; train size is ceil(fraction * N)."""
    n = len(dataset.records)
    if n < 5:
        raise ValidationError(f"need at least 5 records to split, got {n}")
    n_train = math.ceil(fraction * n)
    order = rng_from(seed, 1).permutation(n)
    train_idx = sorted(order[:n_train].tolist())
    test_idx = sorted(order[n_train:].tolist())
    train = [dataset.records[i] for i in train_idx]
    test = [dataset.records[i] for i in test_idx]
    return (
        LabeledDataset(train, dataset.split_seed, dataset.criterion),
        LabeledDataset(test, dataset.split_seed, dataset.criterion),
    )


def auroc(scores, labels) -> float:
    """Probability a random faithful record outscores a random hallucinated
    one, ties counting one half (Mann-Whitney with average ranks).
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise ValidationError("scores and labels must have equal length")
    n_pos = int((y == FAITHFUL).sum())
    n_neg = int((y == HALLUCINATED).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUROC needs both classes present")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=np.float64)
    sorted_scores = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    rank_sum_pos = float(ranks[y == FAITHFUL].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_curve_points(scores, labels):
    """(threshold, FPR, TPR) rows sweeping thresholds from high to low."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    n_pos = int((y == FAITHFUL).sum())
    n_neg = int((y == HALLUCINATED).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("ROC curve needs both classes present")
    points = [(math.inf, 0.0, 0.0)]
    for thr in sorted(set(s.tolist()), reverse=True):
        predicted_pos = s >= thr
        tpr = float((predicted_pos & (y == FAITHFUL)).sum()) / n_pos
        fpr = float((predicted_pos & (y == HALLUCINATED)).sum()) / n_neg
        points.append((thr, fpr, tpr))
    return points


def welch_t_test(sample_a, sample_b):
    """Two-sample unequal-variance t-test.

    Returns (t, df, p) with the Welch-Satterthwaite degrees of freedom
    and a two-sided p-value from the regularized incomplete beta.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValidationError("each sample needs at least 2 values")
    va = a.var(ddof=1)
    vb = b.var(ddof=1)
    if va + vb == 0:
        raise ValidationError("degenerate variance: both samples are constant")
    se_a = va / a.size
    se_b = vb / b.size
    t = (a.mean() - b.mean()) / math.sqrt(se_a + se_b)
    df = (se_a + se_b) ** 2 / (
        se_a**2 / (a.size - 1) + se_b**2 / (b.size - 1)
    )
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return t, df, p


@dataclass
class EvalReport:
    """Aggregated evaluation artifacts emitted as JSON."""

    per_feature_auroc: dict[str, float] = field(default_factory=dict)
    accuracy_rows: list[dict] = field(default_factory=list)
    consistency: float | None = None
    t_test: dict | None = None
    rng_algorithm: str = RNG_ALGORITHM

    def to_dict(self) -> dict:
        out = {
            "rng_algorithm": self.rng_algorithm,
            "per_feature_auroc": self.per_feature_auroc,
            "accuracy": self.accuracy_rows,
        }
        if self.consistency is not None:
            out["consistency"] = self.consistency
        if self.t_test is not None:
            out["t_test"] = self.t_test
        return out
