"""Synthetic Gaussian-blob datasets, CSV ingestion, and split bookkeeping.

Splits are disjoint index ranges over one seeded shuffle: source (for
backbone pretraining), train, val, test. Labels are one-hot float rows
throughout.
"""

import numpy as np

from . import serialize

STD_FLOOR = 1e-12


class DatasetSpec:
    """Recipe for a dataset.

    source is "synthetic-blobs" or "csv". Split sizes are n_source, n_train,
    n_val, n_test; n_source may be 0 when no pretraining split is needed.
    For blobs: separation scales the distance between cluster centers in
    units of cluster_std, and clusters_per_class > 1 makes classes
    multimodal (harder for low-capacity models). For csv: path plus the
    label column name.
    """

    def __init__(
        self,
        source="synthetic-blobs",
        n_classes=2,
        n_features=2,
        n_source=0,
        n_train=100,
        n_val=50,
        n_test=0,
        seed=0,
        separation=5.0,
        cluster_std=1.0,
        clusters_per_class=1,
        path=None,
        label_col=None,
    ):
        if source not in ("synthetic-blobs", "csv"):
            raise ValueError("unknown dataset source %r" % source)
        if n_classes < 2:
            raise ValueError("need at least two classes")
        if n_features < 1:
            raise ValueError("need at least one feature")
        for name, v in (("n_train", n_train), ("n_val", n_val)):
            if v < 1:
                raise ValueError("%s must be >= 1" % name)
        if n_source < 0 or n_test < 0:
            raise ValueError("split sizes must be >= 0")
        if clusters_per_class < 1:
            raise ValueError("clusters_per_class must be >= 1")
        if source == "csv" and (path is None or label_col is None):
            raise ValueError("csv source needs path and label_col")
        self.source = source
        self.n_classes = int(n_classes)
        self.n_features = int(n_features)
        self.n_source = int(n_source)
        self.n_train = int(n_train)
        self.n_val = int(n_val)
        self.n_test = int(n_test)
        self.seed = int(seed)
        self.separation = float(separation)
        self.cluster_std = float(cluster_std)
        self.clusters_per_class = int(clusters_per_class)
        self.path = path
        self.label_col = label_col

    @property
    def n_total(self):
        return self.n_source + self.n_train + self.n_val + self.n_test

    def to_dict(self):
        return {
            "source": self.source,
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "n_source": self.n_source,
            "n_train": self.n_train,
            "n_val": self.n_val,
            "n_test": self.n_test,
            "seed": self.seed,
            "separation": self.separation,
            "cluster_std": self.cluster_std,
            "clusters_per_class": self.clusters_per_class,
            "path": self.path,
            "label_col": self.label_col,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class Dataset:
    """Feature matrix x (n, d), one-hot labels y (n, K), and split indices."""

    SPLIT_NAMES = ("source", "train", "val", "test")

    def __init__(self, x, y, splits):
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError("feature/label row mismatch")
        seen = set()
        for name, idx in splits.items():
            if name not in self.SPLIT_NAMES:
                raise ValueError("unknown split %r" % name)
            overlap = seen.intersection(idx.tolist())
            if overlap:
                raise ValueError("splits overlap at indices %r" % sorted(overlap)[:5])
            seen.update(idx.tolist())
        self.splits = {name: np.asarray(idx, dtype=np.int64) for name, idx in splits.items()}

    def split(self, name):
        """(x, y) arrays for one split, in split order."""
        idx = self.splits[name]
        return self.x[idx], self.y[idx]

    @property
    def n_classes(self):
        return self.y.shape[1]

    @property
    def n_features(self):
        return self.x.shape[1]


def _partition(n_total, spec, rng):
    perm = rng.permutation(n_total)
    splits = {}
    start = 0
    for name, size in (
        ("source", spec.n_source),
        ("train", spec.n_train),
        ("val", spec.n_val),
        ("test", spec.n_test),
    ):
        if size > 0:
            splits[name] = perm[start : start + size]
        start += size
    return splits


def one_hot(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("label outside 0..%d" % (n_classes - 1))
    y = np.zeros((len(labels), n_classes))
    y[np.arange(len(labels)), labels] = 1.0
    return y


def generate_blobs(spec):
    """Gaussian class clusters; deterministic per spec.seed.

    Cluster centers are random unit directions scaled by
    separation * cluster_std, one per (class, cluster) pair; samples are
    assigned to splits by one shuffled partition.
    """
    if spec.source != "synthetic-blobs":
        raise ValueError("spec source is %r, not synthetic-blobs" % spec.source)
    rng = np.random.default_rng(spec.seed)
    n = spec.n_total
    k = spec.n_classes
    m = spec.clusters_per_class
    dirs = rng.normal(size=(k * m, spec.n_features))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    centers = dirs * spec.separation * spec.cluster_std

    labels = rng.integers(0, k, size=n)
    which_cluster = rng.integers(0, m, size=n)
    noise = rng.normal(scale=spec.cluster_std, size=(n, spec.n_features))
    x = centers[labels * m + which_cluster] + noise
    y = one_hot(labels, k)
    return Dataset(x, y, _partition(n, spec, rng))


def standardize(dataset):
    """Zero-mean/unit-variance features using train-split statistics only."""
    x_train, _ = dataset.split("train")
    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)
    std = np.where(std < STD_FLOOR, 1.0, std)  # constant columns map to zero
    x = (dataset.x - mean) / std
    return Dataset(x, dataset.y, dataset.splits)


def load_csv(path, label_col, spec=None, standardize_features=True):
    """Load a rectangular numeric CSV with a categorical label column.

    Splits come from spec (sizes + seed); without a spec everything lands in
    train. Classes are the sorted distinct train-split labels; a val/test
    label unseen in train is an error. Features are standardized with
    train-split statistics unless standardize_features=False.
    """
    header, rows = serialize.read_csv(path)
    if label_col not in header:
        raise ValueError("label column %r not in header %r" % (label_col, header))
    label_idx = header.index(label_col)
    feat_idx = [i for i in range(len(header)) if i != label_idx]
    try:
        x = np.array([[float(row[i]) for i in feat_idx] for row in rows])
    except ValueError as exc:
        raise ValueError("non-numeric feature cell: %s" % exc) from None
    raw_labels = [row[label_idx] for row in rows]
    n = len(rows)

    if spec is None:
        splits = {"train": np.arange(n, dtype=np.int64)}
    else:
        if spec.n_total != n:
            raise ValueError("spec expects %d rows, file has %d" % (spec.n_total, n))
        splits = _partition(n, spec, np.random.default_rng(spec.seed))

    train_labels = sorted({raw_labels[i] for i in splits["train"]})
    class_of = {lab: c for c, lab in enumerate(train_labels)}
    labels = np.empty(n, dtype=np.int64)
    for i, lab in enumerate(raw_labels):
        if lab not in class_of:
            raise ValueError("label %r in val/test never occurs in train" % lab)
        labels[i] = class_of[lab]
    dataset = Dataset(x, one_hot(labels, len(train_labels)), splits)
    if standardize_features:
        dataset = standardize(dataset)
    return dataset


def export_csv(dataset, path):
    """Write features + integer label column; inverse of load_csv on values."""
    header = ["f%d" % i for i in range(dataset.n_features)] + ["label"]
    labels = dataset.y.argmax(axis=1)
    rows = [tuple(dataset.x[i]) + (int(labels[i]),) for i in range(len(dataset.x))]
    serialize.write_csv(path, header, rows)
