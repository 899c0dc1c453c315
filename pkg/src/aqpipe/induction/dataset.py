from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from ..core import year_of


@dataclass
class Dataset:
    """Numeric feature matrix with class labels.

    ``X`` holds NaN for absent features; ``y`` holds indices into ``classes``
    (-1 for unlabeled rows).  ``at`` optionally keeps the sample timestamp of
    each row for chronological splits.
    """

    features: tuple
    X: np.ndarray
    y: np.ndarray
    classes: tuple
    class_name: str = "class"
    at: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.features = tuple(self.features)
        self.classes = tuple(self.classes)
        self.X = np.asarray(self.X, dtype=np.float64).reshape(-1, len(self.features))
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if len(self.y) != len(self.X):
            raise ValueError("X and y lengths differ")
        if len(set(self.features)) != len(self.features):
            raise ValueError("duplicate feature names")
        if len(self.y) and (self.y.max() >= len(self.classes)):
            raise ValueError("label index outside class list")
        if self.at is not None:
            self.at = np.asarray(self.at, dtype=np.int64)

    @classmethod
    def from_rows(cls, features: Sequence[str], rows: Sequence[Mapping], labels: Sequence[str],
                  classes: Sequence[str], class_name: str = "class", at=None) -> "Dataset":
        index = {c: i for i, c in enumerate(classes)}
        X = [[np.nan if r.get(f) is None else float(r[f]) for f in features] for r in rows]
        y = [index[lab] if lab is not None else -1 for lab in labels]
        return cls(tuple(features), np.array(X, dtype=np.float64).reshape(-1, len(features)),
                   np.array(y, dtype=np.int64), tuple(classes), class_name, at)

    @property
    def n_rows(self) -> int:
        return len(self.y)

    @property
    def w(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(self.n_rows)
        return self.weights

    def feature_index(self, name: str) -> int:
        try:
            return self.features.index(name)
        except ValueError:
            raise KeyError(f"unknown feature {name!r}") from None

    def row(self, i: int) -> dict:
        return {f: (None if np.isnan(v) else float(v)) for f, v in zip(self.features, self.X[i])}

    def label(self, i: int) -> Optional[str]:
        return None if self.y[i] < 0 else self.classes[self.y[i]]

    def subset(self, mask) -> "Dataset":
        return Dataset(self.features, self.X[mask], self.y[mask], self.classes, self.class_name,
                       None if self.at is None else self.at[mask],
                       None if self.weights is None else self.weights[mask])

    def class_counts(self) -> dict:
        counts = np.bincount(self.y[self.y >= 0], minlength=len(self.classes))
        return dict(zip(self.classes, counts.tolist()))

    def split_fraction(self, fraction: float) -> tuple["Dataset", "Dataset"]:
        """Chronological split: the first ``fraction`` of the time span trains."""
        if not 0.0 < fraction < 1.0:
            raise ValueError("split fraction must lie in (0, 1)")
        if self.at is None or self.n_rows == 0:
            cut = int(round(self.n_rows * fraction))
            mask = np.arange(self.n_rows) < cut
        else:
            t0, t1 = int(self.at.min()), int(self.at.max())
            mask = self.at < t0 + (t1 - t0) * fraction
        return self.subset(mask), self.subset(~mask)

    def split_year(self) -> tuple["Dataset", "Dataset"]:
        """First calendar year trains, everything after it tests."""
        if self.at is None:
            raise ValueError("year split needs row timestamps")
        if self.n_rows == 0:
            raise ValueError("split produces empty test set")
        years = np.array([year_of(int(t)) for t in self.at])
        first = years.min()
        train = years == first
        if train.all():
            raise ValueError("split produces empty test set")
        return self.subset(train), self.subset(~train)
