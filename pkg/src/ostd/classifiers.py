"""Classifiers over feature matrices and the evaluation protocols.

Three model families: a single-feature logistic threshold baseline, CART
decision trees (Gini, exhaustive midpoint threshold search, no pruning,
depth 1..20), and a fixed 32-64-32 ReLU MLP with softmax output trained
by Adam. Everything is deterministic given its seed; no early stopping,
iteration counts are part of the contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ostd.errors import ValidationError
from ostd.features import (
    FEATURE_NAMES,
    apply_standardizer,
    fit_standardizer,
    select_best_occurrence_features,
)
from ostd.labeling_eval import (
    HALLUCINATED,
    LabeledDataset,
    balanced_split,
    rng_from,
    train_test_split,
)

FEATURE_SET_LOGPROB = "logprob_only"
FEATURE_SET_FULL = "full"


# ---------------------------------------------------------------------------
# Threshold (1-D logistic) baseline
# ---------------------------------------------------------------------------

THRESHOLD_LR = 0.1
THRESHOLD_ITERS = 5000
THRESHOLD_GRAD_TOL = 1e-8


@dataclass
class ThresholdModel:
    weight: float
    bias: float

    @property
    def boundary(self) -> float:
        if self.weight == 0:
            raise ValidationError("degenerate threshold model: zero weight")
        return -self.bias / self.weight


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def fit_threshold(x, y) -> ThresholdModel:
    """Full-batch gradient descent on the logistic loss of one feature."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(np.unique(y)) < 2:
        raise ValidationError("threshold fit needs both classes present")
    w = 0.0
    b = 0.0
    n = x.size
    for _ in range(THRESHOLD_ITERS):
        r = _sigmoid(w * x + b) - y
        gw = float(r @ x) / n
        gb = float(r.sum()) / n
        if max(abs(gw), abs(gb)) < THRESHOLD_GRAD_TOL:
            break
        w -= THRESHOLD_LR * gw
        b -= THRESHOLD_LR * gb
    return ThresholdModel(weight=w, bias=b)


def predict_threshold(model: ThresholdModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    return (_sigmoid(model.weight * x + model.bias) >= 0.5).astype(np.int64)


# ---------------------------------------------------------------------------
# CART decision tree
# ---------------------------------------------------------------------------


@dataclass
class TreeNode:
    class_counts: tuple[int, int]
    feature_index: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def prediction(self) -> int:
        # Majority class; exact tie resolves to class 0 (hallucinated).
        h, f = self.class_counts
        return HALLUCINATED if h >= f else 1


@dataclass
class TreeModel:
    root: TreeNode
    max_depth: int
    n_features: int


def best_split(x_col, y):
    """Exhaustive threshold search at midpoints of consecutive distinct
    sorted values; returns (threshold, impurity_num, impurity_den) or None.

    The two-class weighted child Gini is proportional to
    a_l*b_l/n_l + a_r*b_r/n_r, so candidates are compared exactly with
    integer cross-multiplication; lower thresholds win exact ties.
    """
    order = np.argsort(x_col, kind="mergesort")
    xs = x_col[order]
    ys = y[order]
    n = xs.size
    total1 = int(ys.sum())
    total0 = n - total1
    best = None
    left0 = left1 = 0
    for i in range(n - 1):
        if ys[i] == 0:
            left0 += 1
        else:
            left1 += 1
        if xs[i + 1] == xs[i]:
            continue
        n_left = i + 1
        n_right = n - n_left
        right0 = total0 - left0
        right1 = total1 - left1
        num = left0 * left1 * n_right + right0 * right1 * n_left
        den = n_left * n_right
        if best is None or num * best[2] < best[1] * den:
            thr = (float(xs[i]) + float(xs[i + 1])) / 2.0
            best = (thr, num, den)
    return best


def fit_tree(X, y, max_depth: int) -> TreeModel:
    """Grow a CART tree; a node splits only if some threshold strictly
    decreases the weighted Gini impurity. Ties between splits resolve to
    the lowest feature index, then the lowest threshold.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("fit_tree needs a non-empty 2-D matrix")
    if max_depth < 1:
        raise ValidationError("max_depth must be >= 1")

    def grow(rows, depth) -> TreeNode:
        counts = (int((y[rows] == 0).sum()), int((y[rows] == 1).sum()))
        node = TreeNode(class_counts=counts)
        if depth >= max_depth or 0 in counts or rows.size < 2:
            return node
        # Parent impurity on the same scale: a*b/n; a split is taken only
        # if its exact impurity fraction is strictly smaller.
        p_num = counts[0] * counts[1]
        p_den = rows.size
        chosen = None
        for j in range(X.shape[1]):
            cand = best_split(X[rows, j], y[rows])
            if cand is None:
                continue
            thr, num, den = cand
            if num * p_den >= p_num * den:
                continue
            if chosen is None or num * chosen[3] < chosen[2] * den:
                chosen = (j, thr, num, den)
        if chosen is None:
            return node
        j, thr, _, _ = chosen
        mask = X[rows, j] <= thr
        node.feature_index = j
        node.threshold = thr
        node.left = grow(rows[mask], depth + 1)
        node.right = grow(rows[~mask], depth + 1)
        return node

    root = grow(np.arange(X.shape[0]), 0)
    return TreeModel(root=root, max_depth=max_depth, n_features=X.shape[1])


def predict_tree(model: TreeModel, X) -> np.ndarray:
    """Route rows down the tree; a value equal to a threshold goes left."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValidationError(
            f"expected {model.n_features} features, got {X.shape[1] if X.ndim == 2 else 'non-matrix'}"
        )
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = model.root
        while not node.is_leaf:
            node = node.left if X[i, node.feature_index] <= node.threshold else node.right
        out[i] = node.prediction
    return out


def dump_tree(model: TreeModel, feature_names=None) -> str:
    """Indented text rendering with thresholds and class counts."""
    names = list(feature_names) if feature_names else [
        f"feature_{i}" for i in range(model.n_features)
    ]
    lines: list[str] = []

    def walk(node: TreeNode, indent: int):
        pad = "  " * indent
        h, f = node.class_counts
        if node.is_leaf:
            label = "hallucinated" if node.prediction == HALLUCINATED else "faithful"
            lines.append(f"{pad}leaf: predict={label} counts=[hall={h} faith={f}]")
        else:
            lines.append(
                f"{pad}{names[node.feature_index]} <= {node.threshold:.6g} "
                f"counts=[hall={h} faith={f}]"
            )
            walk(node.left, indent + 1)
            walk(node.right, indent + 1)

    walk(model.root, 0)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# MLP (32-64-32, ReLU, softmax) with Adam
# ---------------------------------------------------------------------------

MLP_HIDDEN = (32, 64, 32)
MLP_LR = 1e-4
MLP_BATCH = 20
MLP_EPOCHS = 25
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def init_mlp(n_inputs: int, seed: int) -> MlpModel:
    """He-uniform weights from the seeded generator, zero biases."""
    rng = rng_from(seed, 2)
    sizes = [n_inputs, *MLP_HIDDEN, 2]
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights=weights, biases=biases)


def mlp_forward(model: MlpModel, X):
    """Returns (activations per layer, softmax probabilities)."""
    acts = [np.asarray(X, dtype=np.float64)]
    h = acts[0]
    for i in range(len(MLP_HIDDEN)):
        h = np.maximum(h @ model.weights[i] + model.biases[i], 0.0)
        acts.append(h)
    logits = h @ model.weights[-1] + model.biases[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    return acts, probs


def mlp_loss(model: MlpModel, X, y) -> float:
    """Mean cross-entropy of the batch."""
    _, probs = mlp_forward(model, X)
    y = np.asarray(y, dtype=np.int64)
    eps_clip = 1e-300
    return float(-np.mean(np.log(np.maximum(probs[np.arange(len(y)), y], eps_clip))))


def mlp_gradients(model: MlpModel, X, y):
    """Analytic gradients of the mean cross-entropy wrt all parameters."""
    y = np.asarray(y, dtype=np.int64)
    acts, probs = mlp_forward(model, X)
    n = len(y)
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        grads_w[layer] = acts[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (acts[layer] > 0)
    return grads_w, grads_b


def fit_mlp(X, y, seed: int, loss_history: list | None = None) -> MlpModel:
    """Train with Adam for the fixed epoch/batch schedule; deterministic
    given the seed (fixed init and per-epoch shuffle order).

    When ``loss_history`` is passed, the per-batch training loss is
    appended to it after every update step.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("fit_mlp needs a non-empty 2-D matrix")
    if not np.isfinite(X).all():
        raise ValidationError("fit_mlp requires finite inputs")
    model = init_mlp(X.shape[1], seed)
    shuffle_rng = rng_from(seed, 3)
    params = model.weights + model.biases
    m_t = [np.zeros_like(p) for p in params]
    v_t = [np.zeros_like(p) for p in params]
    step = 0
    for _ in range(MLP_EPOCHS):
        order = shuffle_rng.permutation(X.shape[0])
        for start in range(0, X.shape[0], MLP_BATCH):
            batch = order[start : start + MLP_BATCH]
            gw, gb = mlp_gradients(model, X[batch], y[batch])
            grads = gw + gb
            step += 1
            for p, g, m, v in zip(params, grads, m_t, v_t):
                m *= ADAM_BETA1
                m += (1 - ADAM_BETA1) * g
                v *= ADAM_BETA2
                v += (1 - ADAM_BETA2) * g * g
                m_hat = m / (1 - ADAM_BETA1**step)
                v_hat = v / (1 - ADAM_BETA2**step)
                p -= MLP_LR * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
            if loss_history is not None:
                loss_history.append(mlp_loss(model, X[batch], y[batch]))
    return model


def predict_mlp(model: MlpModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.weights[0].shape[0]:
        raise ValidationError("feature arity does not match the trained model")
    _, probs = mlp_forward(model, X)
    return probs.argmax(axis=1).astype(np.int64)


# ---------------------------------------------------------------------------
# Protocol: balanced split -> 80/20 -> standardize -> fit -> test accuracy
# ---------------------------------------------------------------------------


@dataclass
class ModelSpec:
    kind: str  # "threshold" | "tree" | "nn"
    depth: int = 3


@dataclass
class SeedRunResult:
    seed_index: int
    test_accuracy: float
    train_accuracy: float
    selected_features: list[str]


@dataclass
class ProtocolResult:
    feature_set: str
    model: ModelSpec
    mean_accuracy: float
    std_accuracy: float
    runs: list[SeedRunResult] = field(default_factory=list)

    def to_row(self) -> dict:
        return {
            "feature_set": self.feature_set,
            "model": self.model.kind,
            "depth": self.model.depth if self.model.kind == "tree" else None,
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
        }


def _fit_predict(spec: ModelSpec, X_train, y_train, X_test, seed: int):
    if spec.kind == "threshold":
        if X_train.shape[1] != 1:
            raise ValidationError("threshold model is single-feature only")
        model = fit_threshold(X_train[:, 0], y_train)
        return predict_threshold(model, X_train[:, 0]), predict_threshold(model, X_test[:, 0])
    if spec.kind == "tree":
        model = fit_tree(X_train, y_train, spec.depth)
        return predict_tree(model, X_train), predict_tree(model, X_test)
    if spec.kind == "nn":
        model = fit_mlp(X_train, y_train, seed)
        return predict_mlp(model, X_train), predict_mlp(model, X_test)
    raise ValidationError(f"unknown model kind {spec.kind!r}")


def select_feature_columns(matrix, labels, feature_set: str) -> list[str]:
    """Resolve a feature-set name to concrete feature names.

    The full set is the two log-probability features plus the best
    prompt-side and generation-side occurrence features by AUROC.
    """
    if feature_set == FEATURE_SET_LOGPROB:
        return ["gen_logp"]
    if feature_set == FEATURE_SET_FULL:
        best = select_best_occurrence_features(matrix, labels)
        return [
            "gen_logp",
            "pr_logp",
            best["prompt_feature_name"],
            best["generation_feature_name"],
        ]
    raise ValidationError(f"unknown feature set {feature_set!r}")


def run_protocol(records, feature_set: str, model_spec: ModelSpec,
                 seeds: int = 5, master_seed: int = 0, criterion: str = "em") -> ProtocolResult:
    """Mean and sample std of test accuracy over seeded runs.

    ``records`` are LabeledRecords whose ``features`` payload is a
    FeatureVector. Per seed: balanced split, 80/20 partition, feature
    selection and standardization on the training side only, fit,
    evaluate on the held-out side.
    """
    name_to_col = {name: i for i, name in enumerate(FEATURE_NAMES)}
    runs = []
    for s in range(seeds):
        run_seed = (master_seed, s)
        balanced = balanced_split(records, seed=hash_seed(*run_seed), criterion=criterion)
        train, test = train_test_split(balanced, 0.8, seed=hash_seed(*run_seed))
        X_train_full = np.array([r.features.as_row() for r in train.records])
        X_test_full = np.array([r.features.as_row() for r in test.records])
        y_train = train.labels()
        y_test = test.labels()
        names = select_feature_columns(X_train_full, y_train, feature_set)
        cols = [name_to_col[n] for n in names]
        params = fit_standardizer(X_train_full[:, cols])
        X_train = apply_standardizer(params, X_train_full[:, cols])
        X_test = apply_standardizer(params, X_test_full[:, cols])
        pred_train, pred_test = _fit_predict(
            spec=model_spec, X_train=X_train, y_train=y_train, X_test=X_test,
            seed=hash_seed(*run_seed),
        )
        runs.append(
            SeedRunResult(
                seed_index=s,
                test_accuracy=float((pred_test == y_test).mean()),
                train_accuracy=float((pred_train == y_train).mean()),
                selected_features=names,
            )
        )
    accs = np.array([r.test_accuracy for r in runs])
    std = float(accs.std(ddof=1)) if seeds > 1 else 0.0
    return ProtocolResult(
        feature_set=feature_set,
        model=model_spec,
        mean_accuracy=float(accs.mean()),
        std_accuracy=std,
        runs=runs,
    )


def hash_seed(master_seed: int, run_index: int) -> int:
    """Stable per-run seed derived from (master seed, run index)."""
    return (master_seed * 1_000_003 + run_index) & 0x7FFFFFFF


def bootstrap_consistency(X_train, y_train, X_test, runs: int = 200, depth: int = 3,
                          seed: int = 0):
    """Fraction of test rows predicted identically by all resampled trees.

    Each run resamples the training rows with replacement (same size),
    fits a depth-limited tree, and predicts the test rows. Returns the
    consistent fraction and the per-row count of the majority prediction.
    """
    X_train = np.asarray(X_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    X_test = np.asarray(X_test, dtype=np.float64)
    if X_train.shape[0] == 0 or X_test.shape[0] == 0:
        raise ValidationError("bootstrap consistency needs non-empty train and test")
    preds = np.empty((runs, X_test.shape[0]), dtype=np.int64)
    n = X_train.shape[0]
    for r in range(runs):
        idx = rng_from(seed, 4, r).integers(0, n, size=n)
        model = fit_tree(X_train[idx], y_train[idx], depth)
        preds[r] = predict_tree(model, X_test)
    agreement = np.maximum(preds.sum(axis=0), runs - preds.sum(axis=0))
    consistent = float((agreement == runs).mean())
    return consistent, agreement
