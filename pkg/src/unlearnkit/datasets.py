"""Dataset generation, CSV ingestion, and the class-forgetting partition.

Features are standardized per column to zero mean / unit variance using
statistics computed on the training split only, so the test split never
leaks into the scaling.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LabeledDataset",
    "ForgetSplit",
    "CountingSplit",
    "make_blobs",
    "load_csv",
    "forget_split",
]

# Row-hash test-split assignment for CSV files is keyed by this constant so
# that the same file always splits the same way.
_CSV_SPLIT_SEED = 77003917
_TEST_FRACTION = 0.2


@dataclass
class LabeledDataset:
    """Train/test split with integer labels in [0, n_classes)."""

    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    n_classes: int

    @property
    def feature_dim(self):
        return self.X_train.shape[1]


@dataclass
class ForgetSplit:
    """Partition of a dataset by the class to be forgotten.

    Train examples of ``forget_class`` form the forget set, the rest the
    retain set; the test split is partitioned the same way.
    """

    forget_class: int
    n_classes: int
    X_forget: np.ndarray
    y_forget: np.ndarray
    X_retain: np.ndarray
    y_retain: np.ndarray
    X_forget_test: np.ndarray
    y_forget_test: np.ndarray
    X_retain_test: np.ndarray
    y_retain_test: np.ndarray


class CountingSplit:
    """Proxy around a ForgetSplit that counts reads of each data partition.

    Unlearning methods receive their split through this wrapper in the
    experiment harness, which then asserts that each method touched only
    the partitions it is allowed to see.
    """

    COUNTED = (
        "X_forget", "y_forget", "X_retain", "y_retain",
        "X_forget_test", "y_forget_test", "X_retain_test", "y_retain_test",
    )

    def __init__(self, split):
        self._split = split
        self.counts = {name: 0 for name in self.COUNTED}

    def __getattr__(self, name):
        if name in self.COUNTED:
            self.counts[name] += 1
        return getattr(self._split, name)

    def assert_only_read(self, allowed):
        """Raise if any partition outside ``allowed`` was accessed."""
        touched = {name for name, c in self.counts.items() if c > 0}
        forbidden = touched - set(allowed)
        if forbidden:
            raise AssertionError(
                f"partitions {sorted(forbidden)} were read but only "
                f"{sorted(allowed)} are permitted"
            )


def make_blobs(n_classes=10, per_class=200, n_features=2, spread=0.5, seed=0):
    """Gaussian clusters with a deterministic 80/20 per-class train/test split.

    In 2D the class centers sit on a circle; in higher dimensions they are
    placed along random near-orthogonal directions. Features are standardized
    with train-split statistics.
    """
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    if per_class < 2:
        raise ValueError(f"need at least 2 examples per class, got {per_class}")
    if n_features < 1:
        raise ValueError(f"need at least 1 feature, got {n_features}")
    if not spread > 0:
        raise ValueError(f"spread must be positive, got {spread}")

    center_seq, sample_seq = np.random.SeedSequence(seed).spawn(2)
    radius = 4.0
    if n_features == 2:
        angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
        centers = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    else:
        rng = np.random.default_rng(center_seq)
        directions = rng.normal(size=(n_classes, n_features))
        if n_features >= n_classes:
            # orthonormalize for clean separation when the space allows it
            q, _ = np.linalg.qr(directions.T)
            directions = q.T[:n_classes]
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        centers = radius * directions

    rng = np.random.default_rng(sample_seq)
    n_test = max(1, per_class // 5)
    n_train = per_class - n_test
    train_parts, test_parts = [], []
    train_labels, test_labels = [], []
    for k in range(n_classes):
        points = centers[k] + spread * rng.normal(size=(per_class, n_features))
        train_parts.append(points[:n_train])
        test_parts.append(points[n_train:])
        train_labels.append(np.full(n_train, k, dtype=np.int64))
        test_labels.append(np.full(n_test, k, dtype=np.int64))

    X_train = np.concatenate(train_parts)
    X_test = np.concatenate(test_parts)
    y_train = np.concatenate(train_labels)
    y_test = np.concatenate(test_labels)
    X_train, X_test = _standardize(X_train, X_test)
    return LabeledDataset(X_train, y_train, X_test, y_test, n_classes)


def load_csv(path, n_classes, n_features, header=False, standardize=True):
    """Load `f1,...,fd,label` rows into a LabeledDataset.

    Rows are assigned to the test split by a content hash, so the split is
    deterministic and independent of row order elsewhere in the file.
    Malformed rows raise ValueError naming the 1-based line number.
    """
    features, labels, is_test = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if header and lineno == 1:
                continue
            line = raw.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != n_features + 1:
                raise ValueError(
                    f"{path}: line {lineno}: expected {n_features + 1} "
                    f"comma-separated fields, got {len(fields)}"
                )
            try:
                row = [float(v) for v in fields[:-1]]
            except ValueError:
                raise ValueError(
                    f"{path}: line {lineno}: non-numeric feature value"
                ) from None
            try:
                label = int(fields[-1])
            except ValueError:
                raise ValueError(
                    f"{path}: line {lineno}: label must be an integer"
                ) from None
            if not 0 <= label < n_classes:
                raise ValueError(
                    f"{path}: line {lineno}: label {label} out of range "
                    f"[0, {n_classes})"
                )
            features.append(row)
            labels.append(label)
            is_test.append(_hash_fraction(line) < _TEST_FRACTION)

    if not features:
        raise ValueError(f"{path}: no data rows")
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    test_mask = np.asarray(is_test, dtype=bool)
    X_train, y_train = X[~test_mask], y[~test_mask]
    X_test, y_test = X[test_mask], y[test_mask]
    if X_train.shape[0] == 0:
        raise ValueError(f"{path}: train split is empty")
    if standardize:
        X_train, X_test = _standardize(X_train, X_test)
    return LabeledDataset(X_train, y_train, X_test, y_test, n_classes)


def forget_split(ds, forget_class):
    """Partition train and test sets by whether the label equals the target.

    Order within each partition follows the original dataset order.
    """
    if not 0 <= forget_class < ds.n_classes:
        raise ValueError(
            f"forget_class {forget_class} out of range [0, {ds.n_classes})"
        )
    f_train = ds.y_train == forget_class
    f_test = ds.y_test == forget_class
    return ForgetSplit(
        forget_class=forget_class,
        n_classes=ds.n_classes,
        X_forget=ds.X_train[f_train],
        y_forget=ds.y_train[f_train],
        X_retain=ds.X_train[~f_train],
        y_retain=ds.y_train[~f_train],
        X_forget_test=ds.X_test[f_test],
        y_forget_test=ds.y_test[f_test],
        X_retain_test=ds.X_test[~f_test],
        y_retain_test=ds.y_test[~f_test],
    )


def _standardize(X_train, X_test):
    """Zero-mean unit-variance scaling with train-split statistics."""
    mean = X_train.mean(axis=0)
    std = X_train.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    return (X_train - mean) / std, (X_test - mean) / std


def _hash_fraction(line):
    """Map a row's text content to a stable fraction in [0, 1)."""
    digest = hashlib.sha256(f"{_CSV_SPLIT_SEED}:{line}".encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2.0 ** 64
