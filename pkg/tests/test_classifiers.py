import itertools
from fractions import Fraction

import numpy as np
import pytest

from ostd.classifiers import (
    MLP_EPOCHS,
    ModelSpec,
    bootstrap_consistency,
    best_split,
    dump_tree,
    fit_mlp,
    fit_threshold,
    fit_tree,
    init_mlp,
    mlp_forward,
    mlp_gradients,
    mlp_loss,
    predict_mlp,
    predict_threshold,
    predict_tree,
    run_protocol,
)
from ostd.errors import ValidationError
from ostd.features import FEATURE_NAMES, FeatureVector
from ostd.labeling_eval import FAITHFUL, HALLUCINATED, LabeledRecord


def weighted_gini(y_left, y_right):
    """Exact weighted Gini of a split, straight from the definition."""

    def gini(y):
        n = len(y)
        if n == 0:
            return Fraction(0)
        c1 = int(np.sum(y))
        p1 = Fraction(c1, n)
        p0 = 1 - p1
        return 1 - p0 * p0 - p1 * p1

    n = len(y_left) + len(y_right)
    return (len(y_left) * gini(y_left) + len(y_right) * gini(y_right)) / n


def exhaustive_best_split(x, y):
    """Oracle: evaluate every midpoint threshold with exact rational Gini;
    the lowest threshold wins ties.
    """
    xs = np.sort(np.unique(x))
    best = None
    for lo, hi in zip(xs[:-1], xs[1:]):
        thr = (lo + hi) / 2.0
        mask = x <= thr
        g = weighted_gini(y[mask], y[~mask])
        if best is None or g < best[1]:
            best = (thr, g)
    return best


class TestThreshold:
    def test_separable(self):
        x = np.array([0.0, 1.0, 2.0, 3.0])
        y = np.array([0, 0, 1, 1])
        model = fit_threshold(x, y)
        assert 1.0 < model.boundary < 2.0
        assert (predict_threshold(model, x) == y).all()

    def test_constant_labels_rejected(self):
        with pytest.raises(ValidationError):
            fit_threshold([1.0, 2.0], [1, 1])

    def test_label_flip_flips_weight_sign(self):
        x = np.array([0.0, 0.5, 1.5, 2.0, 3.0])
        y = np.array([0, 0, 1, 1, 1])
        m1 = fit_threshold(x, y)
        m2 = fit_threshold(x, 1 - y)
        assert m2.weight == pytest.approx(-m1.weight, rel=1e-12)
        assert m2.bias == pytest.approx(-m1.bias, rel=1e-12)


class TestTree:
    def test_single_leaf_for_constant_labels(self):
        model = fit_tree(np.array([[1.0], [2.0]]), np.array([0, 0]), max_depth=3)
        assert model.root.is_leaf
        assert (predict_tree(model, np.array([[5.0]])) == 0).all()

    def test_depth1_worked_example(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0, 0, 1, 1])
        model = fit_tree(X, y, max_depth=1)
        assert model.root.threshold == 1.5
        assert (predict_tree(model, X) == y).all()

    def test_depth1_matches_exhaustive_oracle(self):
        # every label pattern on 1-feature datasets with up to 8 rows
        for n in range(2, 9):
            x = np.arange(n, dtype=float)
            for bits in itertools.product([0, 1], repeat=n):
                y = np.array(bits)
                oracle = exhaustive_best_split(x, y)
                model = fit_tree(x.reshape(-1, 1), y, max_depth=1)
                parent_gini = weighted_gini(y, np.empty(0))
                if oracle is None or oracle[1] >= parent_gini:
                    assert model.root.is_leaf
                else:
                    assert model.root.threshold == oracle[0]
                    mask = x <= model.root.threshold
                    assert weighted_gini(y[mask], y[~mask]) == oracle[1]

    def test_training_accuracy_non_decreasing_in_depth(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(60, 3))
        y = rng.integers(0, 2, size=60)
        prev = 0.0
        for depth in range(1, 8):
            model = fit_tree(X, y, max_depth=depth)
            acc = float((predict_tree(model, X) == y).mean())
            assert acc >= prev - 1e-12
            prev = acc

    def test_memorizes_unique_rows_at_full_depth(self):
        rng = np.random.default_rng(1)
        X = rng.permutation(40).reshape(-1, 1).astype(float)
        y = rng.integers(0, 2, size=40)
        model = fit_tree(X, y, max_depth=20)
        assert (predict_tree(model, X) == y).all()

    def test_children_counts_sum_to_parent(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(50, 2))
        y = rng.integers(0, 2, size=50)
        model = fit_tree(X, y, max_depth=4)

        def check(node):
            if node.is_leaf:
                return
            lh, lf = node.left.class_counts
            rh, rf = node.right.class_counts
            assert (lh + rh, lf + rf) == node.class_counts
            check(node.left)
            check(node.right)

        check(model.root)

    def test_split_strictly_decreases_gini(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(50, 2))
        y = rng.integers(0, 2, size=50)
        model = fit_tree(X, y, max_depth=6)

        def gini_of(counts):
            h, f = counts
            n = h + f
            return 1.0 - (h / n) ** 2 - (f / n) ** 2

        def check(node):
            if node.is_leaf:
                return
            n_l = sum(node.left.class_counts)
            n_r = sum(node.right.class_counts)
            child = (
                n_l * gini_of(node.left.class_counts)
                + n_r * gini_of(node.right.class_counts)
            ) / (n_l + n_r)
            assert child < gini_of(node.class_counts)
            check(node.left)
            check(node.right)

        check(model.root)

    def test_value_at_threshold_goes_left(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0, 0, 1, 1])
        model = fit_tree(X, y, max_depth=1)
        assert model.root.threshold == 1.5
        # a row exactly at the threshold follows the left branch
        left_pred = model.root.left.prediction
        assert predict_tree(model, np.array([[1.5]]))[0] == left_pred

    def test_invariant_under_monotone_feature_transform(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(40, 2))
        y = rng.integers(0, 2, size=40)
        X_test = rng.normal(size=(15, 2))
        p1 = predict_tree(fit_tree(X, y, 3), X_test)
        f = lambda a: np.exp(a) + a  # strictly increasing
        p2 = predict_tree(fit_tree(f(X), y, 3), f(X_test))
        assert (p1 == p2).all()

    def test_arity_mismatch_rejected(self):
        model = fit_tree(np.zeros((4, 2)), np.array([0, 1, 0, 1]), 2)
        with pytest.raises(ValidationError):
            predict_tree(model, np.zeros((3, 5)))

    def test_dump_renders_names_and_counts(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0, 0, 1, 1])
        model = fit_tree(X, y, max_depth=1)
        text = dump_tree(model, feature_names=["gen_logp"])
        assert "gen_logp <= 1.5" in text
        assert "hall=2 faith=2" in text
        assert "leaf" in text


class TestMlp:
    def test_softmax_sums_to_one(self):
        rng = np.random.default_rng(5)
        model = init_mlp(4, seed=0)
        _, probs = mlp_forward(model, rng.normal(size=(10, 4)))
        assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-6

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(10, 4))
        y = rng.integers(0, 2, size=10)
        model = init_mlp(4, seed=1)
        grads_w, grads_b = mlp_gradients(model, X, y)
        h = 1e-5
        for params, grads in ((model.weights, grads_w), (model.biases, grads_b)):
            for p, g in zip(params, grads):
                flat_p = p.ravel()
                flat_g = g.ravel()
                for i in range(flat_p.size):
                    orig = flat_p[i]
                    flat_p[i] = orig + h
                    up = mlp_loss(model, X, y)
                    flat_p[i] = orig - h
                    down = mlp_loss(model, X, y)
                    flat_p[i] = orig
                    numeric = (up - down) / (2 * h)
                    denom = max(abs(numeric), abs(flat_g[i]), 1e-8)
                    assert abs(numeric - flat_g[i]) / denom < 1e-4

    def test_seeded_training_bit_deterministic(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(40, 3))
        y = rng.integers(0, 2, size=40)
        m1 = fit_mlp(X, y, seed=11)
        m2 = fit_mlp(X, y, seed=11)
        for a, b in zip(m1.weights + m1.biases, m2.weights + m2.biases):
            assert np.array_equal(a, b)
        m3 = fit_mlp(X, y, seed=12)
        assert any(
            not np.array_equal(a, b)
            for a, b in zip(m1.weights + m1.biases, m3.weights + m3.biases)
        )

    def test_loss_finite_every_step_and_decreases(self):
        rng = np.random.default_rng(8)
        n = 60
        X = np.vstack([rng.normal(-2, 1, size=(n // 2, 2)), rng.normal(2, 1, size=(n // 2, 2))])
        y = np.array([0] * (n // 2) + [1] * (n // 2))
        initial = mlp_loss(init_mlp(2, seed=3), X, y)
        history = []
        final_model = fit_mlp(X, y, seed=3, loss_history=history)
        assert len(history) == MLP_EPOCHS * ((n + 19) // 20)
        assert all(np.isfinite(l) for l in history)
        final = mlp_loss(final_model, X, y)
        assert np.isfinite(final)
        assert final <= initial

    def test_non_finite_inputs_rejected(self):
        X = np.array([[np.nan, 1.0]] * 20)
        with pytest.raises(ValidationError):
            fit_mlp(X, np.zeros(20, dtype=int), seed=0)


def feature_vector_from_array(row):
    return FeatureVector(values=dict(zip(FEATURE_NAMES, row)))


def make_labeled_records(X_col, y, logp=None):
    """Records whose gen_logp column is `logp` (or X_col) and gen_raw_1 is X_col."""
    records = []
    for i, (x, label) in enumerate(zip(X_col, y)):
        row = [0.0] * len(FEATURE_NAMES)
        row[FEATURE_NAMES.index("gen_raw_1")] = float(x)
        row[FEATURE_NAMES.index("gen_logp")] = float(logp[i] if logp is not None else x)
        records.append(
            LabeledRecord(
                id=f"r{i}",
                label=int(label),
                features=feature_vector_from_array(row),
                generation_length=3,
            )
        )
    return records


class TestProtocol:
    def test_separable_threshold_is_perfect(self):
        # logprob column itself separates: every seed yields accuracy 1.0
        x = np.concatenate([np.linspace(-5, -4, 12), np.linspace(1, 2, 12)])
        y = np.array([HALLUCINATED] * 12 + [FAITHFUL] * 12)
        records = make_labeled_records(x, y)
        result = run_protocol(
            records, "logprob_only", ModelSpec(kind="threshold"), seeds=5, master_seed=0
        )
        assert result.mean_accuracy == 1.0
        assert result.std_accuracy == 0.0

    def test_std_zero_on_deterministic_fixture(self):
        x = np.concatenate([np.zeros(10), np.ones(10)])
        y = np.array([0] * 10 + [1] * 10)
        records = make_labeled_records(x, y)
        result = run_protocol(
            records, "logprob_only", ModelSpec(kind="tree", depth=2), seeds=5, master_seed=1
        )
        assert result.std_accuracy == 0.0
        assert result.mean_accuracy == 1.0

    def test_table_row_layout(self):
        x = np.concatenate([np.zeros(10), np.ones(10)])
        y = np.array([0] * 10 + [1] * 10)
        records = make_labeled_records(x, y)
        result = run_protocol(records, "full", ModelSpec(kind="tree", depth=3), seeds=2, master_seed=0)
        row = result.to_row()
        assert set(row) == {"feature_set", "model", "depth", "mean_accuracy", "std_accuracy"}
        assert row["model"] == "tree" and row["depth"] == 3

    def test_nn_runs_end_to_end(self):
        rng = np.random.default_rng(9)
        x = np.concatenate([rng.normal(-3, 0.5, 15), rng.normal(3, 0.5, 15)])
        y = np.array([0] * 15 + [1] * 15)
        records = make_labeled_records(x, y)
        result = run_protocol(records, "logprob_only", ModelSpec(kind="nn"), seeds=2, master_seed=0)
        assert 0.5 <= result.mean_accuracy <= 1.0


class TestBootstrap:
    def test_wide_margin_fully_consistent(self):
        x_train = np.concatenate([np.linspace(0, 0.2, 20), np.linspace(0.8, 1.0, 20)])
        y_train = np.array([0] * 20 + [1] * 20)
        x_test = np.array([0.05, 0.1, 0.15, 0.9, 0.95])
        consistent, agreement = bootstrap_consistency(
            x_train.reshape(-1, 1), y_train, x_test.reshape(-1, 1), runs=200, depth=3, seed=0
        )
        assert consistent == 1.0
        assert (agreement == 200).all()

    def test_single_run_vacuously_consistent(self):
        x = np.array([[0.0], [1.0]])
        y = np.array([0, 1])
        consistent, _ = bootstrap_consistency(x, y, x, runs=1, depth=3, seed=0)
        assert consistent == 1.0

    def test_label_noise_reduces_consistency(self):
        rng = np.random.default_rng(10)
        n = 40
        x_train = np.linspace(0, 1, n)
        x_test = np.linspace(0.3, 0.7, 15)

        def consistency_at(noise_count):
            y = (x_train > 0.5).astype(int)
            # flip the labels nearest the boundary first (nested noise sets)
            order = np.argsort(np.abs(x_train - 0.5))
            y[order[:noise_count]] = 1 - y[order[:noise_count]]
            c, _ = bootstrap_consistency(
                x_train.reshape(-1, 1), y, x_test.reshape(-1, 1), runs=200, depth=3, seed=5
            )
            return c

        c0 = consistency_at(0)
        c1 = consistency_at(4)
        c2 = consistency_at(10)
        assert c1 < 1.0
        assert c2 <= c1 <= c0
