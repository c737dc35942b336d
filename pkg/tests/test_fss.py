import numpy as np
import pytest

from islandga.core import Genome
from islandga.fss import (
    Attribute,
    Dataset,
    DatasetError,
    WrapperFitness,
    accuracy,
    build_tree,
    crossing_folding_fitness,
    entropy,
    exhaustive_best_subset,
    fold_accuracies,
    fss_operator_suite,
    load_dataset,
    make_synthetic_dataset,
    project,
    split_train_test,
    write_dataset,
)

from conftest import brute_force_threshold

YESNO = Attribute("class", ("yes", "no"))


def nominal_dataset(rows, names=None):
    """Rows of nominal strings; last column is the class."""
    width = len(rows[0]) - 1
    names = names or [f"x{j}" for j in range(width)]
    attrs = [Attribute(names[j], tuple(dict.fromkeys(r[j] for r in rows))) for j in range(width)]
    cls = Attribute("class", tuple(dict.fromkeys(r[-1] for r in rows)))
    return Dataset.from_rows(attrs, cls, rows)


class TestLoad:
    def test_schema(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("colour,size,label\nred,1.5,a\nblue,2.0,b\nred,2,a\n")
        d = load_dataset(p)
        assert [a.kind for a in d.attributes] == ["nominal", "numeric"]
        assert d.attributes[0].values == ("red", "blue")
        assert d.class_attribute.values == ("a", "b")
        assert d.instances == [("red", 1.5, "a"), ("blue", 2.0, "b"), ("red", 2.0, "a")]

    def test_missing_field_names_line(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b,c\n1,2,x\n3,,y\n")
        with pytest.raises(DatasetError) as err:
            load_dataset(p)
        assert err.value.line == 3

    def test_arity_names_line(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b,c\n1,2,x\n3,4\n")
        with pytest.raises(DatasetError, match="line 3"):
            load_dataset(p)

    def test_empty(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b,c\n")
        with pytest.raises(DatasetError):
            load_dataset(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="nope.csv"):
            load_dataset(tmp_path / "nope.csv")

    def test_round_trip(self, tmp_path):
        d = make_synthetic_dataset(40, seed=3)
        write_dataset(tmp_path / "s.csv", d)
        back = load_dataset(tmp_path / "s.csv")
        assert back.instances == d.instances
        assert [a.kind for a in back.attributes] == [a.kind for a in d.attributes]


class TestSplitProject:
    d10 = nominal_dataset([("a", "yes")] * 10)

    def test_sixty_forty(self):
        train, test = split_train_test(self.d10, 0.6)
        assert (len(train), len(test)) == (6, 4)

    def test_ceiling(self):
        train, test = split_train_test(nominal_dataset([("a", "yes")] * 5), 0.6)
        assert (len(train), len(test)) == (3, 2)

    def test_empty_side(self):
        with pytest.raises(DatasetError):
            split_train_test(nominal_dataset([("a", "yes")] * 2), 0.99)

    def test_positional(self):
        d = nominal_dataset([(str(i), "yes") for i in range(10)])
        train, test = split_train_test(d, 0.6)
        assert [r[0] for r in test.instances] == ["6", "7", "8", "9"]

    def test_project(self):
        d = nominal_dataset([("p", "q", "yes"), ("r", "s", "no")])
        assert project(d, (1, 1)).instances == d.instances
        assert project(d, (0, 0)).instances == [("yes",), ("no",)]
        assert project(d, Genome((1, 0))).instances == [("p", "yes"), ("r", "no")]


class TestTree:
    def test_separable(self):
        d = nominal_dataset([("u", "v", "yes"), ("w", "v", "no"), ("u", "w", "yes"), ("w", "w", "no")])
        tree = build_tree(d)
        assert tree.root.attribute == 0 and tree.depth() == 1
        assert accuracy(tree, d) == 1.0

    def test_majority_leaf(self):
        cls = Attribute("c", ("yes", "no"))
        d = Dataset.from_rows([], cls, [("yes",)] * 7 + [("no",)] * 3)
        tree = build_tree(d)
        assert tree.root.is_leaf and tree.predict(d) == ["yes"] * 10
        assert accuracy(tree, d) == 0.7

    def test_majority_tie_goes_to_declared_first(self):
        cls = Attribute("c", ("no", "yes"))
        d = Dataset.from_rows([], cls, [("yes",), ("no",)])
        assert build_tree(d).predict(d) == ["no", "no"]

    def test_threshold_matches_brute_force(self):
        xs, labels = [1.0, 2.0, 3.0, 4.0], ["a", "a", "b", "b"]
        d = Dataset.from_rows([Attribute("x")], Attribute("c", ("a", "b")), [(x, l) for x, l in zip(xs, labels)])
        tree = build_tree(d)
        assert tree.root.threshold == brute_force_threshold(xs, labels) == 2.5

    def test_threshold_random_vs_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            xs = [float(v) for v in rng.integers(0, 8, size=12)]
            labels = [str(v) for v in rng.integers(0, 2, size=12)]
            if len(set(labels)) < 2 or len(set(xs)) < 2:
                continue
            cls = Attribute("c", tuple(dict.fromkeys(labels)))
            d = Dataset.from_rows([Attribute("x")], cls, list(zip(xs, labels)))
            tree = build_tree(d)
            expected = brute_force_threshold(xs, labels)
            parent_gain_positive = not tree.root.is_leaf
            if parent_gain_positive:
                assert tree.root.threshold == expected

    def test_gain_ratio_positive_at_every_split(self):
        d = make_synthetic_dataset(120, seed=2)
        tree = build_tree(d)

        def walk(node, rows):
            if node.is_leaf:
                return
            col = d.X[rows, node.attribute]
            counts = np.bincount(d.y[rows], minlength=d.num_classes)
            if node.threshold is not None:
                parts = [rows[col <= node.threshold], rows[col > node.threshold]]
            else:
                parts = [rows[col == v] for v in range(len(node.children))]
            child = sum(len(p) / len(rows) * entropy(np.bincount(d.y[p], minlength=d.num_classes))
                        for p in parts if len(p))
            assert entropy(counts) - child > 0
            for n, p in zip(node.children, parts):
                walk(n, p)

        walk(tree.root, np.arange(len(d)))

    def test_pure_tree_fits_training_data(self):
        d = make_synthetic_dataset(150, seed=4)
        assert accuracy(build_tree(d), d) == 1.0

    def test_unseen_nominal_falls_back(self):
        train = nominal_dataset([("a", "yes"), ("a", "yes"), ("b", "no")])
        attrs = (Attribute("x0", ("a", "b", "c")),)
        wide = Dataset(attrs, train.class_attribute, np.array([[2.0]]), np.array([0]))
        tree = build_tree(Dataset(attrs, train.class_attribute, train.X, train.y))
        assert tree.predict(wide) == ["yes"]

    def test_empty(self):
        with pytest.raises(DatasetError):
            build_tree(Dataset.from_rows([], YESNO, []))

    def test_accuracy_errors(self):
        d = nominal_dataset([("a", "yes"), ("b", "no")])
        tree = build_tree(d)
        with pytest.raises(DatasetError):
            accuracy(tree, d.take(slice(0, 0)))
        with pytest.raises(DatasetError):
            accuracy(tree, project(d, (0,)))


# fold 0 -> 1/3, fold 1 -> 2/3, fold 2 -> 1/3, worked out by hand:
#   fold 0: train rows 3..8, no split has gain, leaf "yes"; rows 0,1,2 = yes,no,no
#   fold 1: train rows 0,1,2,6,7,8 both branches 50/50, leaf "yes"; rows 3,4,5 = yes,no,yes
#   fold 2: train rows 0..5 split a->yes, b->no; rows 6,7,8 = (a,no),(b,yes),(a,yes)
NINE = [("a", "yes"), ("a", "no"), ("b", "no"), ("a", "yes"), ("b", "no"), ("b", "yes"),
        ("a", "no"), ("b", "yes"), ("a", "yes")]


class TestCrossingFolding:
    def test_nine_instances(self):
        d = nominal_dataset(NINE)
        assert fold_accuracies(d, (1,), 3) == [1 / 3, 2 / 3, 1 / 3]
        assert crossing_folding_fitness(d, (1,), 3) == 2 / 3

    def test_both_halves_learnable(self):
        d = nominal_dataset([("u", "yes"), ("w", "no")] * 4)
        assert crossing_folding_fitness(d, (1,), 2) == 1.0

    @pytest.mark.parametrize("k", [2, 3, 5])
    @pytest.mark.parametrize("mask", [(0, 0), (1, 0), (1, 1)])
    def test_constant_class(self, k, mask):
        d = nominal_dataset([("p", "q", "yes"), ("r", "s", "yes")] * 5)
        assert crossing_folding_fitness(d, mask, k) == 1.0

    def test_too_many_folds(self):
        with pytest.raises(DatasetError):
            crossing_folding_fitness(nominal_dataset(NINE), (1,), 10)

    def test_fold_max_monotone(self):
        d = nominal_dataset(NINE)
        scores = fold_accuracies(d, (1,), 3)
        assert max(scores[:2]) <= max(scores)


class TestExhaustive:
    def test_no_attributes(self):
        cls = Attribute("c", ("yes", "no"))
        d = Dataset.from_rows([], cls, [("yes",)] * 6 + [("no",)] * 4)
        mask, f = exhaustive_best_subset(d, k=2)
        assert mask == () and f == crossing_folding_fitness(d, (), 2)

    def test_informative_attribute_dominates(self):
        rng = np.random.default_rng(1)
        rows = []
        for _ in range(60):
            a0 = "p" if rng.random() < 0.5 else "q"
            noise = [str(v) for v in rng.integers(0, 3, size=3)]
            rows.append((a0, *noise, "yes" if a0 == "p" else "no"))
        mask, f = exhaustive_best_subset(nominal_dataset(rows), k=5)
        assert mask == (1, 0, 0, 0) and f == 1.0

    def test_smaller_mask_wins_ties(self):
        d = nominal_dataset([("p", "p", "yes"), ("q", "q", "no")] * 5)
        scores = {(0, 0): 0.5, (0, 1): 1.0, (1, 0): 1.0, (1, 1): 1.0}
        assert exhaustive_best_subset(d, fitness=scores.__getitem__) == ((0, 1), 1.0)

    def test_limit(self):
        with pytest.raises(ValueError):
            exhaustive_best_subset(make_synthetic_dataset(20, noise_attributes=12), m_limit=12)


class TestSuite:
    def test_delegates(self):
        d = make_synthetic_dataset(60, seed=5)
        suite = fss_operator_suite(d, k=3)
        ones = Genome((1,) * len(d.attributes))
        assert suite.fitness_evaluator(ones) == crossing_folding_fitness(d, ones, 3)

    def test_no_target_never_stops(self):
        from conftest import ind
        suite = fss_operator_suite(make_synthetic_dataset(30), k=2)
        assert not suite.termination_criterion(ind("1", 1.0))

    def test_cache(self):
        d = make_synthetic_dataset(60, seed=5)
        f = WrapperFitness(d, 3)
        g = Genome((1, 0) * 5)
        assert f(g) == f(g) and f.evaluations == 1
