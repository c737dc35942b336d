"""Feature subset selection with a gain-ratio decision tree as the wrapped classifier.

An individual's genome is an attribute mask over the ``m`` non-class
attributes. Its fitness is the best held-out accuracy over ``k`` contiguous
folds of the training set, each fold scored by a tree grown on the others.
"""

from __future__ import annotations

import itertools
import math
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import ContractViolation, Genome, OperatorSuite
from .operators import standard_suite

_DECIMAL = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_MIN_GAIN = 1e-12


class DatasetError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Attribute:
    name: str
    # declared nominal values in order; None for a numeric attribute
    values: Optional[tuple[str, ...]] = None

    @property
    def numeric(self) -> bool:
        return self.values is None

    @property
    def kind(self) -> str:
        return "numeric" if self.numeric else "nominal"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Instances stored column-wise: ``X[:, j]`` holds attribute ``j`` (nominal as value codes)."""

    attributes: tuple[Attribute, ...]
    class_attribute: Attribute
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.class_attribute.numeric:
            raise DatasetError("class attribute must be nominal")
        X = np.asarray(self.X, dtype=float).reshape(len(self.y), len(self.attributes))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", np.asarray(self.y, dtype=np.int64))

    @classmethod
    def from_rows(cls, attributes: Sequence[Attribute], class_attribute: Attribute,
                  rows: Sequence[Sequence]) -> Dataset:
        """Build from value tuples whose last element is the class label."""
        X = np.empty((len(rows), len(attributes)))
        y = np.empty(len(rows), dtype=np.int64)
        codes = [None if a.numeric else {v: i for i, v in enumerate(a.values)} for a in attributes]
        cls_codes = {v: i for i, v in enumerate(class_attribute.values)}
        for r, row in enumerate(rows):
            if len(row) != len(attributes) + 1:
                raise DatasetError(f"instance {r} has {len(row)} values, expected {len(attributes) + 1}")
            for j, v in enumerate(row[:-1]):
                if codes[j] is None:
                    X[r, j] = float(v)
                elif v in codes[j]:
                    X[r, j] = codes[j][v]
                else:
                    raise DatasetError(f"instance {r}: {v!r} not a value of {attributes[j].name}")
            if row[-1] not in cls_codes:
                raise DatasetError(f"instance {r}: unknown class {row[-1]!r}")
            y[r] = cls_codes[row[-1]]
        return cls(tuple(attributes), class_attribute, X, y)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def num_classes(self) -> int:
        return len(self.class_attribute.values)

    @property
    def instances(self) -> list[tuple]:
        out = []
        for r in range(len(self)):
            row = []
            for j, a in enumerate(self.attributes):
                v = self.X[r, j]
                row.append(float(v) if a.numeric else a.values[int(v)])
            row.append(self.class_attribute.values[int(self.y[r])])
            out.append(tuple(row))
        return out

    def take(self, rows) -> Dataset:
        return Dataset(self.attributes, self.class_attribute, self.X[rows], self.y[rows])

    def select(self, columns: Sequence[int]) -> Dataset:
        cols = list(columns)
        return Dataset(tuple(self.attributes[c] for c in cols), self.class_attribute,
                       self.X[:, cols], self.y)

    def schema(self) -> tuple:
        return (self.attributes, self.class_attribute)


def load_dataset(path: Union[str, Path]) -> Dataset:
    """Read the CSV profile: header row, comma separated, class in the last column.

    A column is numeric iff every value parses as a decimal number; the class
    column is always nominal. Nominal values are declared in order of first
    appearance.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DatasetError(f"dataset file not found: {path}") from None
    lines = [(n, ln.rstrip("\r")) for n, ln in enumerate(text.split("\n"), start=1)]
    lines = [(n, ln) for n, ln in lines if ln.strip()]
    if not lines:
        raise DatasetError(f"{path}: empty file")
    header_line, header = lines[0]
    names = [h.strip() for h in header.split(",")]
    if len(names) < 1 or any(not n for n in names):
        raise DatasetError("empty attribute name in header", header_line)
    width = len(names)
    rows: list[list[str]] = []
    for n, ln in lines[1:]:
        fields = [f.strip() for f in ln.split(",")]
        if len(fields) != width:
            raise DatasetError(f"expected {width} fields, got {len(fields)}", n)
        for j, f in enumerate(fields):
            if f == "":
                raise DatasetError(f"missing value for {names[j]!r}", n)
        rows.append(fields)
    if not rows:
        raise DatasetError(f"{path}: no instances")

    attributes = []
    for j, name in enumerate(names[:-1]):
        column = [row[j] for row in rows]
        if all(_DECIMAL.match(v) for v in column):
            attributes.append(Attribute(name))
        else:
            attributes.append(Attribute(name, tuple(dict.fromkeys(column))))
    class_attr = Attribute(names[-1], tuple(dict.fromkeys(row[-1] for row in rows)))
    return Dataset.from_rows(attributes, class_attr, rows)


def write_dataset(path: Union[str, Path], dataset: Dataset) -> None:
    names = [a.name for a in dataset.attributes] + [dataset.class_attribute.name]
    lines = [",".join(names)]
    for row in dataset.instances:
        lines.append(",".join(repr(v) if isinstance(v, float) else v for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def split_train_test(dataset: Dataset, ratio: float = 0.6) -> tuple[Dataset, Dataset]:
    """First ``ceil(n * ratio)`` instances train, the rest test. No shuffling."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    n = len(dataset)
    cut = math.ceil(round(n * ratio, 9))
    if cut == 0 or cut == n:
        raise DatasetError(f"split of {n} instances at ratio {ratio} leaves one side empty")
    return dataset.take(slice(0, cut)), dataset.take(slice(cut, n))


def mask_bits(mask) -> tuple[int, ...]:
    return mask.bits if isinstance(mask, Genome) else tuple(int(b) for b in mask)


def project(dataset: Dataset, mask) -> Dataset:
    """Keep the attributes whose mask bit is 1 (the class is always kept)."""
    bits = mask_bits(mask)
    if len(bits) != len(dataset.attributes):
        raise ContractViolation(f"mask length {len(bits)} != {len(dataset.attributes)} attributes")
    return dataset.select([j for j, b in enumerate(bits) if b])


# --- decision tree -------------------------------------------------------------


@dataclass
class Node:
    prediction: int
    attribute: Optional[int] = None
    threshold: Optional[float] = None
    children: list[Node] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return self.attribute is None


@dataclass
class DecisionTree:
    root: Node
    attributes: tuple[Attribute, ...]
    class_attribute: Attribute

    def predict_codes(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X), dtype=np.int64)
        _predict(self.root, self.attributes, X, np.arange(len(X)), out)
        return out

    def predict(self, dataset: Dataset) -> list[str]:
        self._check_schema(dataset)
        return [self.class_attribute.values[c] for c in self.predict_codes(dataset.X)]

    def _check_schema(self, dataset: Dataset) -> None:
        if dataset.schema() != (self.attributes, self.class_attribute):
            raise DatasetError("dataset schema differs from the tree's training schema")

    def depth(self) -> int:
        def d(node: Node) -> int:
            return 0 if node.is_leaf else 1 + max(d(c) for c in node.children)
        return d(self.root)


def _predict(node: Node, attributes, X, idx, out) -> None:
    if node.is_leaf or len(idx) == 0:
        out[idx] = node.prediction
        return
    col = X[idx, node.attribute]
    if attributes[node.attribute].numeric:
        le = col <= node.threshold
        _predict(node.children[0], attributes, X, idx[le], out)
        _predict(node.children[1], attributes, X, idx[~le], out)
        return
    codes = col.astype(np.int64)
    known = np.zeros(len(idx), dtype=bool)
    for v, child in enumerate(node.children):
        hit = codes == v
        known |= hit
        _predict(child, attributes, X, idx[hit], out)
    out[idx[~known]] = node.prediction


def entropy(counts: np.ndarray) -> np.ndarray:
    """Shannon entropy in bits along the last axis of a count array."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(total > 0, counts / total, 0.0)
        terms = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=-1)


@dataclass(frozen=True)
class Split:
    attribute: int
    gain: float
    gain_ratio: float
    threshold: Optional[float] = None


def best_numeric_split(values: np.ndarray, labels: np.ndarray, num_classes: int) -> Optional[tuple[float, float, float]]:
    """Best binary threshold by gain ratio: ``(threshold, gain, gain_ratio)`` or None.

    Candidates are midpoints between consecutive distinct sorted values.
    """
    n = len(values)
    order = np.argsort(values, kind="stable")
    v = values[order]
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), labels[order]] = 1.0
    cum = np.cumsum(onehot, axis=0)
    cut = np.flatnonzero(v[:-1] != v[1:])
    if len(cut) == 0:
        return None
    left = cum[cut]
    right = cum[-1] - left
    n_left = (cut + 1).astype(float)
    parent = entropy(cum[-1])
    gain = parent - (n_left * entropy(left) + (n - n_left) * entropy(right)) / n
    split_info = entropy(np.stack([n_left, n - n_left], axis=-1))
    ratio = np.where(gain > _MIN_GAIN, gain / split_info, -np.inf)
    best = int(np.argmax(ratio))
    if not np.isfinite(ratio[best]):
        return None
    threshold = (v[cut[best]] + v[cut[best] + 1]) / 2.0
    return float(threshold), float(gain[best]), float(ratio[best])


def nominal_split(codes: np.ndarray, labels: np.ndarray, num_values: int,
                  num_classes: int) -> Optional[tuple[float, float]]:
    """``(gain, gain_ratio)`` of a multiway split, or None when fewer than two branches are non-empty."""
    joint = np.bincount(codes * num_classes + labels, minlength=num_values * num_classes)
    joint = joint.reshape(num_values, num_classes)
    sizes = joint.sum(axis=1)
    if np.count_nonzero(sizes) < 2:
        return None
    n = float(sizes.sum())
    gain = float(entropy(joint.sum(axis=0)) - (sizes * entropy(joint)).sum() / n)
    if gain <= _MIN_GAIN:
        return None
    return gain, gain / float(entropy(sizes))


def choose_split(dataset: Dataset, rows: np.ndarray) -> Optional[Split]:
    y = dataset.y[rows]
    best: Optional[Split] = None
    for j, attr in enumerate(dataset.attributes):
        col = dataset.X[rows, j]
        if attr.numeric:
            found = best_numeric_split(col, y, dataset.num_classes)
            if found is None:
                continue
            threshold, gain, ratio = found
            cand = Split(j, gain, ratio, threshold)
        else:
            found = nominal_split(col.astype(np.int64), y, len(attr.values), dataset.num_classes)
            if found is None:
                continue
            cand = Split(j, found[0], found[1])
        if best is None or cand.gain_ratio > best.gain_ratio:
            best = cand
    return best


def build_tree(train: Dataset) -> DecisionTree:
    """Grow an unpruned tree top-down, splitting on the maximum gain ratio.

    A node becomes a leaf when it is pure, holds fewer than two instances, or no
    split has positive information gain. Leaves predict the majority class,
    ties going to the class declared first.
    """
    if len(train) == 0:
        raise DatasetError("cannot build a tree from an empty training set")
    return DecisionTree(_grow(train, np.arange(len(train))), train.attributes, train.class_attribute)


def _grow(data: Dataset, rows: np.ndarray) -> Node:
    counts = np.bincount(data.y[rows], minlength=data.num_classes)
    node = Node(prediction=int(np.argmax(counts)))
    if len(rows) < 2 or counts.max() == len(rows):
        return node
    split = choose_split(data, rows)
    if split is None:
        return node
    col = data.X[rows, split.attribute]
    node.attribute = split.attribute
    if split.threshold is not None:
        node.threshold = split.threshold
        le = col <= split.threshold
        node.children = [_grow(data, rows[le]), _grow(data, rows[~le])]
    else:
        codes = col.astype(np.int64)
        for v in range(len(data.attributes[split.attribute].values)):
            sub = rows[codes == v]
            node.children.append(_grow(data, sub) if len(sub) else Node(node.prediction))
    return node


def accuracy(tree: DecisionTree, dataset: Dataset) -> float:
    """Correct classifications divided by total classifications."""
    if len(dataset) == 0:
        raise DatasetError("accuracy of an empty dataset is undefined")
    tree._check_schema(dataset)
    correct = int(np.count_nonzero(tree.predict_codes(dataset.X) == dataset.y))
    return correct / len(dataset)


TreeBuilder = Callable[[Dataset], DecisionTree]


def fold_accuracies(train: Dataset, mask, k: int = 5, builder: TreeBuilder = build_tree) -> list[float]:
    data = project(train, mask)
    n = len(data)
    if k < 2:
        raise ValueError("need at least 2 folds")
    if k > n:
        raise DatasetError(f"{k} folds exceed {n} instances")
    folds = np.array_split(np.arange(n), k)
    scores = []
    for i, held_out in enumerate(folds):
        rest = np.concatenate([f for j, f in enumerate(folds) if j != i])
        tree = builder(data.take(rest))
        scores.append(accuracy(tree, data.take(held_out)))
    return scores


def crossing_folding_fitness(train: Dataset, mask, k: int = 5, builder: TreeBuilder = build_tree) -> float:
    """Best accuracy over ``k`` contiguous folds, each scored by a tree trained on the others."""
    return max(fold_accuracies(train, mask, k, builder))


def exhaustive_best_subset(train: Dataset, k: int = 5, m_limit: int = 12,
                           fitness: Optional[Callable[[tuple[int, ...]], float]] = None
                           ) -> tuple[tuple[int, ...], float]:
    """Score all ``2**m`` masks; best fitness wins, then fewer attributes, then lexicographic mask."""
    m = len(train.attributes)
    if m > m_limit:
        raise ValueError(f"{m} attributes exceed the exhaustive search limit of {m_limit}")
    score = fitness or (lambda bits: crossing_folding_fitness(train, bits, k))
    best_key, best = None, None
    for bits in itertools.product((0, 1), repeat=m):
        f = score(bits)
        key = (-f, sum(bits), bits)
        if best_key is None or key < best_key:
            best_key, best = key, (bits, f)
    return best


class WrapperFitness:
    """Memoised crossing-folding fitness for genomes over one training set. Thread safe."""

    def __init__(self, train: Dataset, k: int = 5, builder: TreeBuilder = build_tree):
        self.train = train
        self.k = k
        self.builder = builder
        self._cache: dict[tuple[int, ...], float] = {}
        self._lock = threading.Lock()

    def __call__(self, genome) -> float:
        bits = mask_bits(genome)
        with self._lock:
            if bits in self._cache:
                return self._cache[bits]
        value = crossing_folding_fitness(self.train, bits, self.k, self.builder)
        with self._lock:
            self._cache.setdefault(bits, value)
        return value

    @property
    def evaluations(self) -> int:
        return len(self._cache)


def fss_operator_suite(train: Dataset, k: int = 5, accuracy_target: Optional[float] = None) -> OperatorSuite:
    suite = standard_suite(WrapperFitness(train, k), accuracy_target)
    suite.extras["train"] = train
    return suite


def make_synthetic_dataset(n: int = 300, noise_attributes: int = 8, seed: int = 0) -> Dataset:
    """Two informative attributes plus noise.

    ``a0`` is numeric on [0, 1), ``a3`` is nominal over red/green/blue, and the
    class is ``yes`` iff ``a0 > 0.5`` and ``a3 != red``. The remaining
    attributes alternate numeric/nominal and are independent of the class.
    """
    rng = np.random.default_rng(seed)
    m = noise_attributes + 2
    colours = ("red", "green", "blue")
    letters = ("p", "q", "r", "s")
    attributes = []
    for j in range(m):
        if j == 0:
            attributes.append(Attribute("a0"))
        elif j == 3:
            attributes.append(Attribute("a3", colours))
        elif j % 2:
            attributes.append(Attribute(f"a{j}", letters))
        else:
            attributes.append(Attribute(f"a{j}"))
    rows = []
    for _ in range(n):
        row = []
        for attr in attributes:
            if attr.numeric:
                row.append(round(float(rng.random()), 3))
            else:
                row.append(attr.values[int(rng.integers(len(attr.values)))])
        label = "yes" if row[0] > 0.5 and row[3] != "red" else "no"
        rows.append(row + [label])
    class_attr = Attribute("class", tuple(dict.fromkeys(r[-1] for r in rows)))
    return Dataset.from_rows(attributes, class_attr, rows)
