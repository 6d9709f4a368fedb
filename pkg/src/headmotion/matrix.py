"""Named feature matrix shared by the selection, model, and evaluation layers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError, SchemaMismatchError


@dataclass(frozen=True)
class FeatureMatrix:
    """A dense (n_rows, n_columns) matrix with unique column names and row ids."""

    ids: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        ids = tuple(str(i) for i in self.ids)
        columns = tuple(str(c) for c in self.columns)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise InvalidInputError("feature values must be a 2-D array")
        if values.shape != (len(ids), len(columns)):
            raise InvalidInputError(
                f"values shape {values.shape} does not match "
                f"{len(ids)} ids x {len(columns)} columns"
            )
        if len(set(columns)) != len(columns):
            raise InvalidInputError("column names must be unique")
        if len(set(ids)) != len(ids):
            raise InvalidInputError("row ids must be unique")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("feature values must be finite")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "values", values)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise SchemaMismatchError(f"unknown feature column {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_index(name)]

    def select_columns(self, names: Iterable[str]) -> "FeatureMatrix":
        names = tuple(names)
        idx = [self.column_index(n) for n in names]
        return FeatureMatrix(
            ids=self.ids, columns=names, values=self.values[:, idx]
        )

    def take_rows(self, index: Sequence[int] | np.ndarray) -> "FeatureMatrix":
        idx = np.asarray(index)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return FeatureMatrix(
            ids=tuple(self.ids[int(i)] for i in idx),
            columns=self.columns,
            values=self.values[idx, :],
        )

    @staticmethod
    def from_rows(
        ids: Sequence[str],
        columns: Sequence[str],
        rows: Sequence[np.ndarray],
    ) -> "FeatureMatrix":
        if len(rows) != len(ids):
            raise InvalidInputError("one row vector required per id")
        values = (
            np.vstack([np.asarray(r, dtype=np.float64) for r in rows])
            if rows
            else np.empty((0, len(columns)))
        )
        return FeatureMatrix(ids=tuple(ids), columns=tuple(columns), values=values)
