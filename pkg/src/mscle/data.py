"""Dataset container and CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataValidationError
from .families import Family, MultiLogistic

__all__ = ["Dataset", "load_csv_dataset"]


@dataclass(frozen=True)
class Dataset:
    """Immutable covariate matrix plus response vector.

    ``x`` is N x d with an explicit all-ones first column when an intercept
    is wanted; ``y`` holds 0/1 indicators, nonnegative counts, or class
    labels in 0..K-1 depending on the family it is used with.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=float)
        y = np.ascontiguousarray(self.y, dtype=float).ravel()
        if x.ndim != 2:
            raise DataValidationError("covariate matrix must be 2-D")
        if x.shape[0] < 1 or x.shape[1] < 1:
            raise DataValidationError("dataset needs at least one row and one column")
        if x.shape[0] != y.shape[0]:
            raise DataValidationError(
                f"{x.shape[0]} covariate rows but {y.shape[0]} responses"
            )
        if not np.all(np.isfinite(x)):
            raise DataValidationError("covariates contain NaN or infinite entries")
        if not np.all(np.isfinite(y)):
            raise DataValidationError("responses contain NaN or infinite entries")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.x[indices], self.y[indices])

    def validate_for(self, model: Family) -> None:
        model.validate_response(self.y)


def _parse_cell(raw: str, row: int, column: str) -> float:
    text = raw.strip()
    if text == "":
        raise DataValidationError(f"blank cell at row {row}, column {column!r}")
    try:
        return float(text)
    except ValueError:
        raise DataValidationError(
            f"non-numeric value {raw!r} at row {row}, column {column!r}"
        ) from None


def load_csv_dataset(
    path: str | Path,
    response_column: str,
    model: Family | None = None,
    add_intercept: bool = True,
) -> tuple[Dataset, dict]:
    """Read a headered CSV into a Dataset.

    Prepends an all-ones column unless ``add_intercept`` is false.  For a
    multinomial model the response values are remapped to 0..K-1 (sorted by
    original value) and the mapping is reported in the returned metadata.
    Row numbers in diagnostics count the header as row 1.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if response_column not in header:
            raise DataValidationError(
                f"{path}: response column {response_column!r} not found; "
                f"columns are {header}"
            )
        y_col = header.index(response_column)
        x_cols = [j for j in range(len(header)) if j != y_col]

        x_rows: list[list[float]] = []
        y_vals: list[float] = []
        for row_number, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataValidationError(
                    f"{path}: row {row_number} has {len(row)} cells, expected {len(header)}"
                )
            x_rows.append([_parse_cell(row[j], row_number, header[j]) for j in x_cols])
            y_vals.append(_parse_cell(row[y_col], row_number, header[y_col]))

    if not x_rows:
        raise DataValidationError(f"{path}: no data rows")

    x = np.asarray(x_rows, dtype=float)
    y = np.asarray(y_vals, dtype=float)
    if add_intercept:
        x = np.hstack([np.ones((x.shape[0], 1)), x])

    metadata: dict = {
        "path": str(path),
        "response_column": response_column,
        "covariate_columns": [header[j] for j in x_cols],
        "intercept_added": bool(add_intercept),
        "n_rows": int(x.shape[0]),
        "n_features": int(x.shape[1]),
    }

    if isinstance(model, MultiLogistic):
        levels = np.unique(y)
        if levels.shape[0] != model.n_classes:
            raise DataValidationError(
                f"{path}: found {levels.shape[0]} distinct response values, "
                f"model expects {model.n_classes} classes"
            )
        remap = {v: k for k, v in enumerate(levels)}
        y = np.asarray([remap[v] for v in y], dtype=float)
        metadata["class_labels"] = [float(v) for v in levels]

    dataset = Dataset(x, y)
    if model is not None:
        dataset.validate_for(model)
    return dataset, metadata
