"""Stream construction: ingestion, normalization, density-based
source/target splitting, prequential batching, and drift generators.

A dataset is an ordered sample sequence (order is temporal).  Each
evaluation round takes a contiguous slab of it and splits the slab into
several labelled source streams plus one unlabelled target stream by
input density, so sources and target share a feature space but differ
in marginal distribution.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from streamadapt.errors import DataError, DimensionError, ValidationError


@dataclass
class Dataset:
    """Ordered samples with dense integer labels.

    ``class_names`` maps a label index back to the raw label value, in
    first-appearance order.
    """

    X: np.ndarray
    y: np.ndarray
    class_names: list[str]

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 2:
            raise DimensionError(f"features must be 2-d, got shape {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise DimensionError(
                f"label count {self.y.shape} does not match {self.X.shape[0]} rows"
            )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


@dataclass
class LabeledBatch:
    """One source stream's slice of a round: features plus labels."""

    X: np.ndarray
    y: np.ndarray


@dataclass
class UnlabeledBatch:
    """The target stream's slice of a round.

    Ground-truth labels are quarantined: training code receives this
    object and must use only ``X``; scoring code calls
    :meth:`labels_for_evaluation`.  A batch built without labels
    evaluates to missing metrics rather than failing.
    """

    X: np.ndarray
    _y_hidden: np.ndarray | None = field(default=None, repr=False)

    def labels_for_evaluation(self) -> np.ndarray | None:
        return self._y_hidden

    def without_labels(self) -> "UnlabeledBatch":
        return UnlabeledBatch(X=self.X)


@dataclass
class StreamSet:
    """All streams of one evaluation round."""

    sources: list[LabeledBatch]
    target: UnlabeledBatch
    round_index: int


@dataclass
class Rounds:
    """The full prequential schedule plus dataset-level dimensions."""

    items: list[StreamSet]
    n_features: int
    n_classes: int


def load_csv(path: str, label_col: int = -1, has_header: bool = True) -> Dataset:
    """Read a delimited numeric dataset, one sample per row, in file order.

    The label column may hold arbitrary values; they are mapped to dense
    indices in first-appearance order.
    """
    rows_X: list[list[float]] = []
    labels: list[int] = []
    class_names: list[str] = []
    index_of: dict[str, int] = {}
    n_cols = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for i, row in enumerate(reader):
            if i == 0 and has_header:
                n_cols = len(row)
                continue
            if not row:
                continue
            if n_cols is None:
                n_cols = len(row)
            if len(row) != n_cols:
                raise DataError(
                    f"line {reader.line_num}: expected {n_cols} columns, got {len(row)}"
                )
            if not -n_cols <= label_col < n_cols:
                raise DataError(
                    f"label column {label_col} out of range for {n_cols} columns"
                )
            lc = label_col % n_cols
            feats = []
            for j, cell in enumerate(row):
                if j == lc:
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"line {reader.line_num}: non-numeric value {cell!r} "
                        f"in column {j}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(
                        f"line {reader.line_num}: non-finite value {cell!r} "
                        f"in column {j}"
                    )
                feats.append(v)
            raw = row[lc].strip()
            if raw not in index_of:
                index_of[raw] = len(class_names)
                class_names.append(raw)
            labels.append(index_of[raw])
            rows_X.append(feats)
    if not rows_X:
        raise DataError(f"{path}: no data rows")
    return Dataset(X=np.array(rows_X), y=np.array(labels), class_names=class_names)


def save_csv(ds: Dataset, path: str) -> None:
    """Write a dataset back out: feature columns, then the label column.

    Floats are written with full round-trip precision so load/save
    cycles are exact.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{j + 1}" for j in range(ds.n_features)] + ["label"])
        for x, yi in zip(ds.X, ds.y):
            writer.writerow([repr(float(v)) for v in x] + [ds.class_names[yi]])


def normalize(ds: Dataset) -> Dataset:
    """Min-max scale each feature to [0,1] over the whole dataset;
    constant features map to 0.5."""
    if ds.n == 0:
        raise ValidationError("cannot normalize an empty dataset")
    lo = ds.X.min(axis=0)
    hi = ds.X.max(axis=0)
    span = hi - lo
    out = np.empty_like(ds.X)
    flat = span == 0
    out[:, flat] = 0.5
    out[:, ~flat] = (ds.X[:, ~flat] - lo[~flat]) / span[~flat]
    return Dataset(X=out, y=ds.y, class_names=ds.class_names)


def density_scores(X: np.ndarray) -> np.ndarray:
    """Diagonal-Gaussian log density of each row under the batch's own
    per-feature fit (population convention); constant features are skipped."""
    X = np.asarray(X, dtype=float)
    mu = X.mean(axis=0)
    var = X.var(axis=0)
    ok = var > 0
    if not np.any(ok):
        return np.zeros(X.shape[0])
    return -np.sum((X[:, ok] - mu[ok]) ** 2 / (2.0 * var[ok]), axis=1)


def gaussian_split(X: np.ndarray, y: np.ndarray, n_sources: int,
                   round_index: int = 0) -> StreamSet:
    """Split one round's samples into source streams and a target stream.

    Samples are ranked by density under the batch's own Gaussian fit;
    the densest samples feed the sources (labels kept) and the sparsest
    become the target (labels quarantined), which manufactures the
    covariate shift between streams.  Equal chunk sizes; the integer
    remainder joins the target.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if n_sources < 1:
        raise ValidationError(f"need at least one source stream, got {n_sources}")
    n = X.shape[0]
    chunk = n // (n_sources + 1)
    if chunk < 1:
        raise ValidationError(
            f"round of {n} samples cannot feed {n_sources} sources plus a target"
        )
    order = np.argsort(-density_scores(X), kind="stable")
    sources = []
    for i in range(n_sources):
        idx = order[i * chunk:(i + 1) * chunk]
        sources.append(LabeledBatch(X=X[idx], y=y[idx]))
    idx = order[n_sources * chunk:]
    target = UnlabeledBatch(X=X[idx], _y_hidden=y[idx])
    return StreamSet(sources=sources, target=target, round_index=round_index)


def batchify(X: np.ndarray, y: np.ndarray, rounds: int):
    """Cut the sample sequence into ``rounds`` contiguous slabs, in
    order; the last slab absorbs the remainder."""
    n = X.shape[0]
    if rounds < 1:
        raise ValidationError(f"round count must be positive, got {rounds}")
    if rounds > n:
        raise ValidationError(f"cannot cut {n} samples into {rounds} rounds")
    size = n // rounds
    out = []
    for k in range(rounds):
        start = k * size
        stop = (k + 1) * size if k < rounds - 1 else n
        out.append((X[start:stop], y[start:stop]))
    return out


def build_rounds(ds: Dataset, n_sources: int, rounds: int) -> Rounds:
    """Full pipeline: normalize, slab into rounds, split each slab into
    streams (the density fit is redone per round)."""
    norm = normalize(ds)
    items = []
    for k, (Xr, yr) in enumerate(batchify(norm.X, norm.y, rounds)):
        items.append(gaussian_split(Xr, yr, n_sources, round_index=k + 1))
    return Rounds(items=items, n_features=ds.n_features, n_classes=ds.n_classes)


def _densify(raw_labels: list[str]) -> tuple[np.ndarray, list[str]]:
    index_of: dict[str, int] = {}
    names: list[str] = []
    out = np.empty(len(raw_labels), dtype=int)
    for i, lab in enumerate(raw_labels):
        if lab not in index_of:
            index_of[lab] = len(names)
            names.append(lab)
        out[i] = index_of[lab]
    return out, names


def default_sea_schedule(n: int) -> list[tuple[int, float]]:
    """Four equal segments alternating the decision threshold low/high."""
    return [(0, 4.0), (n // 4, 7.0), (n // 2, 4.0), (3 * n // 4, 7.0)]


def gen_sea(n: int, theta_schedule=None, noise_fraction: float = 0.0,
            rng: np.random.Generator | None = None) -> Dataset:
    """Three uniform features on [0,10]; the class is whether the first
    two sum past a threshold that jumps abruptly on the given schedule.
    ``noise_fraction`` of labels are flipped."""
    if n < 1:
        raise ValidationError(f"sample count must be positive, got {n}")
    if not 0.0 <= noise_fraction < 1.0:
        raise ValidationError(f"noise fraction must lie in [0,1), got {noise_fraction}")
    if rng is None:
        rng = np.random.default_rng()
    schedule = sorted(theta_schedule or default_sea_schedule(n))
    if schedule[0][0] != 0:
        raise ValidationError("threshold schedule must start at index 0")
    X = rng.random((n, 3)) * 10.0
    starts = np.array([s for s, _ in schedule])
    thetas = np.array([t for _, t in schedule])
    theta = thetas[np.searchsorted(starts, np.arange(n), side="right") - 1]
    is_one = X[:, 0] + X[:, 1] >= theta
    if noise_fraction > 0.0:
        is_one ^= rng.random(n) < noise_fraction
    y, names = _densify(["1" if v else "2" for v in is_one])
    return Dataset(X=X, y=y, class_names=names)


def gen_hyperplane(n: int, d: int = 4, drift: tuple[int, int] | None = None,
                   rng: np.random.Generator | None = None) -> Dataset:
    """Uniform features on [0,1]^d labelled by the side of a hyperplane
    whose normal glides linearly from one random vector to another
    across the drift window (gradual drift)."""
    if n < 1:
        raise ValidationError(f"sample count must be positive, got {n}")
    if d < 2:
        raise ValidationError(f"need at least 2 dimensions, got {d}")
    if rng is None:
        rng = np.random.default_rng()
    if drift is None:
        drift = (n // 4, 3 * n // 4)
    start, end = drift
    w1 = rng.random(d)
    w2 = rng.random(d)
    X = rng.random((n, d))
    i = np.arange(n)
    if end > start:
        lam = np.clip((i - start) / (end - start), 0.0, 1.0)
    else:
        lam = (i >= start).astype(float)
    W = np.outer(1.0 - lam, w1) + np.outer(lam, w2)
    margin = np.sum(W * X, axis=1) - 0.5 * W.sum(axis=1)
    y, names = _densify(["1" if v else "2" for v in margin > 0])
    return Dataset(X=X, y=y, class_names=names)
