"""CSV dataset ingestion, standardization and empirical statistics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Literal, Optional, Sequence, Union

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split

from .errors import (
    ConstantFeature,
    ConstantLabel,
    DimensionMismatch,
    InsufficientSamples,
    ParseError,
    SchemaError,
)

if TYPE_CHECKING:
    from .net import MlpModel

logger = logging.getLogger(__name__)

ClassFilter = Literal["all", "negative_only"]


@dataclass(frozen=True)
class Dataset:
    """Binary-labelled tabular data; class 0 is the target (negative) class."""

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels).astype(np.int64)
        if features.ndim != 2:
            raise SchemaError(f"features must be a matrix, got shape {features.shape}")
        if features.shape[0] < 2:
            raise InsufficientSamples(f"a dataset needs at least 2 samples, got {features.shape[0]}")
        if labels.shape != (features.shape[0],):
            raise SchemaError("label count does not match sample count")
        if not np.all(np.isin(labels, (0, 1))):
            raise SchemaError("labels must be 0 or 1")
        if len(self.feature_names) != features.shape[1]:
            raise SchemaError("feature name count does not match feature count")
        if not np.all(np.isfinite(features)):
            raise ParseError("features contain non-finite values")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> "Dataset":
        return Dataset(self.features[index], self.labels[index], self.feature_names)

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.labels, self.feature_names)


@dataclass(frozen=True)
class StandardizationStats:
    """Per-feature mean and population standard deviation."""

    mean: np.ndarray
    std: np.ndarray
    feature_names: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape:
            raise SchemaError("mean and std lengths differ")
        if np.any(std <= 0):
            raise ConstantFeature(int(np.argmax(std <= 0)))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def apply(self, d: Dataset) -> Dataset:
        if d.d != self.mean.shape[0]:
            raise DimensionMismatch(self.mean.shape[0], d.d, "standardization")
        return d.with_features((d.features - self.mean) / self.std)

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "StandardizationStats":
        return cls(
            mean=np.asarray(payload["mean"], dtype=np.float64),
            std=np.asarray(payload["std"], dtype=np.float64),
            feature_names=tuple(payload.get("feature_names", ())),
        )


# ── Loading ──────────────────────────────────────────────────────────────


def load_csv(
    path: Union[str, Path],
    label_column: str,
    drop_columns: Sequence[str] = (),
) -> Dataset:
    """
    Load a comma-separated file with a header row.

    Parameters
    ----------
    path : str or Path
        UTF-8 CSV file.
    label_column : str
        Name of the binary label column.
    drop_columns : sequence of str
        Columns to discard (e.g. non-ordinal categorical features).

    Returns
    -------
    Dataset
        Features in file column order, excluding the label and dropped columns.

    Raises
    ------
    ParseError
        Malformed line or non-numeric cell.
    SchemaError
        Missing label column, unknown dropped column or non-binary label.
    """
    try:
        frame = pd.read_csv(path, encoding="utf-8", skipinitialspace=True)
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise ParseError(f"Could not parse {path}: {e}") from e
    except pd.errors.EmptyDataError as e:
        raise ParseError(f"{path} is empty") from e

    if label_column not in frame.columns:
        raise SchemaError(
            f"Label column '{label_column}' not found in {path}",
            suggestion=f"Available columns: {', '.join(map(str, frame.columns))}",
        )
    missing = [c for c in drop_columns if c not in frame.columns]
    if missing:
        raise SchemaError(f"Columns to drop not found: {', '.join(missing)}")

    frame = frame.drop(columns=list(drop_columns))
    try:
        numeric = frame.apply(pd.to_numeric, errors="raise")
    except (ValueError, TypeError) as e:
        raise ParseError(f"Non-numeric cell in {path}: {e}") from e
    if numeric.isna().any().any():
        raise ParseError(f"{path} has empty cells or ragged lines")

    labels = numeric.pop(label_column).to_numpy()
    if not np.all(np.isin(labels, (0, 1))):
        bad = sorted(set(labels.tolist()) - {0, 1})
        raise SchemaError(f"Label column holds non-binary values: {bad[:5]}")

    logger.debug("Loaded %d rows x %d features from %s", len(numeric), numeric.shape[1], path)
    return Dataset(
        features=numeric.to_numpy(dtype=np.float64),
        labels=labels.astype(np.int64),
        feature_names=tuple(str(c) for c in numeric.columns),
    )


def save_csv(d: Dataset, path: Union[str, Path], label_column: str = "label") -> None:
    frame = pd.DataFrame(d.features, columns=list(d.feature_names))
    frame[label_column] = d.labels
    frame.to_csv(path, index=False, float_format="%.17g")


def split_dataset(d: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified train/test split."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    train_idx, test_idx = train_test_split(
        np.arange(d.n),
        test_size=test_fraction,
        random_state=seed,
        stratify=d.labels,
    )
    return d.subset(np.sort(train_idx)), d.subset(np.sort(test_idx))


# ── Statistics ───────────────────────────────────────────────────────────


def fit_standardization(d: Dataset) -> StandardizationStats:
    std = d.features.std(axis=0)
    for i, s in enumerate(std):
        if s <= 0:
            raise ConstantFeature(i, d.feature_names[i])
    return StandardizationStats(d.features.mean(axis=0), std, d.feature_names)


def standardize(d: Dataset) -> tuple[Dataset, StandardizationStats]:
    """Zero mean, unit population standard deviation per feature."""
    stats = fit_standardization(d)
    return stats.apply(d), stats


def covariance(d: Dataset, class_filter: ClassFilter = "all") -> np.ndarray:
    """
    Population covariance of the selected rows.

    ``class_filter="negative_only"`` restricts to the target class 0.
    """
    if class_filter == "all":
        rows = d.features
    elif class_filter == "negative_only":
        rows = d.features[d.labels == 0]
    else:
        raise ValueError(f"Unknown class filter: {class_filter}")
    if rows.shape[0] < 2:
        raise InsufficientSamples(
            f"Covariance needs at least 2 samples, {rows.shape[0]} selected ({class_filter})"
        )
    cov = np.cov(rows, rowvar=False, bias=True)
    cov = np.atleast_2d(cov)
    return 0.5 * (cov + cov.T)


def pearson_importance(d: Dataset) -> np.ndarray:
    """``|corr(feature_i, label)|`` for every feature."""
    y = d.labels.astype(np.float64)
    if np.std(y) == 0:
        raise ConstantLabel("All samples share one label; correlation is undefined")
    x_std = d.features.std(axis=0)
    for i, s in enumerate(x_std):
        if s == 0:
            raise ConstantFeature(i, d.feature_names[i])
    xc = d.features - d.features.mean(axis=0)
    yc = y - y.mean()
    corr = (xc * yc[:, None]).mean(axis=0) / (x_std * yc.std())
    return np.clip(np.abs(corr), 0.0, 1.0)


def positive_score(model: "MlpModel", x: np.ndarray) -> np.ndarray:
    """Positive-class score: logit of class 1 minus logit of class 0."""
    from .net import forward

    logits, _ = forward(model, x)
    return logits[..., 1] - logits[..., 0]


def shapley_importance(
    model: "MlpModel",
    d: Dataset,
    permutations: int,
    seed: int,
    max_samples: int = 200,
) -> np.ndarray:
    """
    Monte-Carlo permutation Shapley importance.

    For each sampled input, features are switched from the background mean to
    the input value in random order; the change in the positive-class score at
    each switch is that feature's marginal contribution. Importance is the mean
    absolute Shapley value over the sampled inputs.

    Parameters
    ----------
    model : MlpModel
        Binary classifier whose positive-class score is explained.
    d : Dataset
        Inputs to explain; its feature mean is the baseline.
    permutations : int
        Feature orderings drawn per input.
    seed : int
        Seed for input sampling and orderings.
    max_samples : int
        Number of inputs explained (all when the dataset is smaller).
    """
    if permutations < 1:
        raise ValueError("permutations must be at least 1")
    if model.layer_dims[0] != d.d:
        raise DimensionMismatch(model.layer_dims[0], d.d, "shapley input")

    rng = np.random.default_rng(seed)
    baseline = d.features.mean(axis=0)
    n_explain = min(max_samples, d.n)
    rows = np.sort(rng.choice(d.n, size=n_explain, replace=False))
    dim = d.d
    totals = np.zeros(dim)

    for r in rows:
        x = d.features[r]
        orders = np.argsort(rng.random((permutations, dim)), axis=1)
        # coalition k holds the first k features of the ordering at x, rest at baseline
        switched = np.zeros((permutations, dim + 1, dim), dtype=bool)
        for k in range(1, dim + 1):
            switched[np.arange(permutations), k:, orders[:, k - 1]] = True
        inputs = np.where(switched, x, baseline).reshape(-1, dim)
        scores = positive_score(model, inputs).reshape(permutations, dim + 1)
        gains = np.diff(scores, axis=1)
        phi = np.zeros((permutations, dim))
        np.put_along_axis(phi, orders, gains, axis=1)
        totals += np.abs(phi.mean(axis=0))

    return totals / n_explain


# ── Importance files ─────────────────────────────────────────────────────


def save_importance(names: Sequence[str], importance: np.ndarray, path: Union[str, Path]) -> None:
    pd.DataFrame({"feature_name": list(names), "importance": np.asarray(importance)}).to_csv(
        path, index=False, float_format="%.17g"
    )


def load_importance(path: Union[str, Path], feature_names: Optional[Sequence[str]] = None) -> np.ndarray:
    """Read a ``feature_name,importance`` CSV, reordered to ``feature_names`` when given."""
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(f"Could not parse importance file {path}: {e}") from e
    if list(frame.columns[:2]) != ["feature_name", "importance"]:
        raise SchemaError("Importance file needs columns feature_name,importance")
    values = pd.to_numeric(frame["importance"], errors="coerce")
    if values.isna().any():
        raise ParseError(f"Non-numeric importance in {path}")
    if feature_names is None:
        return values.to_numpy(dtype=np.float64)
    lookup = dict(zip(frame["feature_name"].astype(str), values))
    missing = [n for n in feature_names if n not in lookup]
    if missing:
        raise SchemaError(f"Importance file lacks features: {', '.join(missing)}")
    return np.array([lookup[n] for n in feature_names], dtype=np.float64)
