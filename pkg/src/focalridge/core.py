"""Domain types and focal-function evaluation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import (
    ConstantFocalError,
    DegenerateDesignError,
    DimensionMismatchError,
    MissingColumnError,
    MissingValueError,
    NonBinaryTreatmentError,
    NoTreatmentsError,
    RowCountMismatchError,
)

__all__ = [
    "ColumnRoles",
    "Dataset",
    "FocalSpec",
    "ResidualizedDesign",
    "apply_focal",
    "validate_dataset",
]


class FocalSpec(str, enum.Enum):
    """How sub-treatments are aggregated into the single focal treatment column.

    ``MAX`` is 1 for a unit exposed to any sub-treatment; ``SUM`` counts the
    active sub-treatments.
    """

    MAX = "max"
    SUM = "sum"

    @classmethod
    def parse(cls, value: "str | FocalSpec") -> "FocalSpec":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown focal kind {value!r}; expected 'max' or 'sum'") from None


def apply_focal(treatments: np.ndarray, spec: FocalSpec | str = FocalSpec.MAX) -> np.ndarray:
    """Map an ``(n, K)`` binary treatment matrix to the focal column.

    >>> apply_focal(np.array([[1, 0], [0, 1], [1, 1], [0, 0]]), "max")
    array([1., 1., 1., 0.])
    >>> apply_focal(np.array([[1, 0], [0, 1], [1, 1], [0, 0]]), "sum")
    array([1., 1., 2., 0.])
    """
    spec = FocalSpec.parse(spec)
    t = np.asarray(treatments, dtype=float)
    if t.ndim != 2:
        raise DimensionMismatchError(f"treatments must be 2-D, got shape {t.shape}")
    if t.shape[1] == 0:
        return np.zeros(t.shape[0])
    if spec is FocalSpec.MAX:
        return t.max(axis=1)
    return t.sum(axis=1)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Raw observations: outcome, covariates and binary sub-treatments.

    Use :func:`validate_dataset` (tables) or :meth:`from_arrays` (arrays);
    both enforce the invariants. Arrays are stored read-only.
    """

    outcome: np.ndarray
    covariates: np.ndarray
    treatments: np.ndarray
    treatment_names: tuple[str, ...]
    covariate_names: tuple[str, ...] = ()
    prevalence: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    @property
    def n(self) -> int:
        return self.outcome.shape[0]

    @property
    def k(self) -> int:
        return self.treatments.shape[1]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    def focal(self, spec: FocalSpec | str = FocalSpec.MAX) -> np.ndarray:
        return apply_focal(self.treatments, spec)

    @classmethod
    def from_arrays(
        cls,
        outcome,
        treatments,
        covariates=None,
        treatment_names: Sequence[str] | None = None,
        covariate_names: Sequence[str] | None = None,
        focal: FocalSpec | str = FocalSpec.MAX,
    ) -> "Dataset":
        y = np.asarray(outcome, dtype=float)
        t = np.asarray(treatments, dtype=float)
        if t.ndim == 1:
            t = t[:, None]
        n = y.shape[0]
        x = np.empty((n, 0)) if covariates is None else np.asarray(covariates, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if treatment_names is None:
            treatment_names = [f"D{j + 1}" for j in range(t.shape[1] if t.ndim == 2 else 0)]
        if covariate_names is None:
            covariate_names = [f"X{j + 1}" for j in range(x.shape[1])]
        _check_arrays(y, x, t, focal)
        return cls(
            outcome=_readonly(y),
            covariates=_readonly(x),
            treatments=_readonly(t),
            treatment_names=tuple(treatment_names),
            covariate_names=tuple(covariate_names),
            prevalence=_readonly(t.mean(axis=0)),
        )

    def summary(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "K": self.k,
            "d": self.d,
            "prevalence": {name: float(p) for name, p in zip(self.treatment_names, self.prevalence)},
        }


def _check_arrays(y: np.ndarray, x: np.ndarray, t: np.ndarray, focal) -> None:
    if y.ndim != 1:
        raise DimensionMismatchError(f"outcome must be 1-D, got shape {y.shape}")
    if t.ndim != 2 or t.shape[1] == 0:
        raise NoTreatmentsError("at least one sub-treatment column is required (K >= 1)")
    if t.shape[0] != y.shape[0] or x.shape[0] != y.shape[0]:
        raise RowCountMismatchError(
            f"row counts disagree: outcome {y.shape[0]}, treatments {t.shape[0]}, covariates {x.shape[0]}"
        )
    if y.shape[0] < 2:
        raise RowCountMismatchError(f"need at least 2 rows, got {y.shape[0]}")
    for name, a in (("outcome", y), ("covariates", x), ("treatments", t)):
        bad = ~np.isfinite(a)
        if bad.any():
            row = int(np.argwhere(bad)[0][0])
            raise MissingValueError(f"missing or non-finite value in {name} at row {row}")
    nonbin = (t != 0) & (t != 1)
    if nonbin.any():
        row, col = (int(v) for v in np.argwhere(nonbin)[0])
        raise NonBinaryTreatmentError(
            f"non-binary treatment value {t[row, col]!r} at row {row}, treatment column {col}"
        )
    d_focal = apply_focal(t, focal)
    if np.all(d_focal == d_focal[0]):
        state = "every" if d_focal[0] > 0 else "no"
        raise ConstantFocalError(f"constant focal column: {state} row is treated")


@dataclass(frozen=True)
class ColumnRoles:
    """Which table columns play which role. Never inferred from names."""

    outcome: str
    treatments: tuple[str, ...]
    covariates: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "treatments", tuple(self.treatments))
        object.__setattr__(self, "covariates", tuple(self.covariates))


_MISSING_TOKENS = {"", "na", "nan", "null", "none"}


def _parse_column(values, column: str, integer: bool = False) -> np.ndarray:
    out = np.empty(len(values), dtype=float)
    for i, v in enumerate(values):
        if isinstance(v, str):
            s = v.strip()
            if s.lower() in _MISSING_TOKENS:
                raise MissingValueError(f"missing value in column {column!r} at row {i}")
            try:
                out[i] = int(s) if integer else float(s)
            except ValueError:
                if integer:
                    raise NonBinaryTreatmentError(
                        f"non-binary treatment {s!r} in column {column!r} at row {i}"
                    ) from None
                raise MissingValueError(f"unparseable value {s!r} in column {column!r} at row {i}") from None
        else:
            if v is None or (isinstance(v, float) and math.isnan(v)):
                raise MissingValueError(f"missing value in column {column!r} at row {i}")
            out[i] = float(v)
    if not np.all(np.isfinite(out)):
        row = int(np.argwhere(~np.isfinite(out))[0][0])
        raise MissingValueError(f"non-finite value in column {column!r} at row {row}")
    if integer:
        bad = (out != 0) & (out != 1)
        if bad.any():
            row = int(np.argwhere(bad)[0][0])
            raise NonBinaryTreatmentError(
                f"non-binary treatment {out[row]:g} in column {column!r} at row {row}"
            )
    return out


def validate_dataset(
    table: Mapping[str, Sequence[Any]],
    roles: ColumnRoles,
    focal: FocalSpec | str = FocalSpec.MAX,
) -> Dataset:
    """Build a :class:`Dataset` from a column table, checking every invariant.

    Parameters
    ----------
    table : mapping
        Column name to a sequence of values (strings as read from CSV, or
        numbers). A pandas DataFrame works as well.
    roles : ColumnRoles
        Outcome, ordered treatment, and covariate column names.
    focal : FocalSpec
        Focal kind, used for the constant-focal check.

    Raises
    ------
    MissingColumnError, NoTreatmentsError, MissingValueError,
    NonBinaryTreatmentError, RowCountMismatchError, ConstantFocalError
    """
    if not roles.treatments:
        raise NoTreatmentsError("at least one sub-treatment column is required (K >= 1)")
    columns = set(table.keys())
    for col in (roles.outcome, *roles.treatments, *roles.covariates):
        if col not in columns:
            raise MissingColumnError(f"column {col!r} not found in input (available: {sorted(columns)})")
    lengths = {col: len(table[col]) for col in (roles.outcome, *roles.treatments, *roles.covariates)}
    if len(set(lengths.values())) != 1:
        raise RowCountMismatchError(f"columns have different row counts: {lengths}")

    y = _parse_column(list(table[roles.outcome]), roles.outcome)
    t = np.column_stack([_parse_column(list(table[c]), c, integer=True) for c in roles.treatments])
    if roles.covariates:
        x = np.column_stack([_parse_column(list(table[c]), c) for c in roles.covariates])
    else:
        x = np.empty((y.shape[0], 0))
    return Dataset.from_arrays(
        y, t, x, treatment_names=roles.treatments, covariate_names=roles.covariates, focal=focal
    )


@dataclass(frozen=True)
class ResidualizedDesign:
    """Outcome, focal and sub-treatment columns after partialling out covariates.

    ``learner`` records which nuisance learner produced the design; ``"raw"``
    means the columns were used untouched.
    """

    y_tilde: np.ndarray
    focal_tilde: np.ndarray
    treat_tilde: np.ndarray
    treatment_names: tuple[str, ...]
    learner: str = "mean"
    provenance: str = ""

    def __post_init__(self):
        y = _readonly(self.y_tilde)
        f = _readonly(self.focal_tilde)
        t = np.asarray(self.treat_tilde, dtype=float)
        if t.ndim == 1:
            t = t[:, None]
        t = _readonly(t)
        if y.ndim != 1 or f.shape != y.shape or t.shape[0] != y.shape[0]:
            raise DimensionMismatchError(
                f"design lengths disagree: y {y.shape}, focal {f.shape}, treatments {t.shape}"
            )
        if len(self.treatment_names) != t.shape[1]:
            raise DimensionMismatchError("treatment_names length does not match treatment columns")
        if not float(f @ f) > 0.0:
            raise DegenerateDesignError("residualized focal column has zero second moment")
        object.__setattr__(self, "y_tilde", y)
        object.__setattr__(self, "focal_tilde", f)
        object.__setattr__(self, "treat_tilde", t)
        object.__setattr__(self, "treatment_names", tuple(self.treatment_names))

    @property
    def n(self) -> int:
        return self.y_tilde.shape[0]

    @property
    def k(self) -> int:
        return self.treat_tilde.shape[1]

    @property
    def X(self) -> np.ndarray:
        """Stacked regressors: focal column first, then sub-treatments."""
        return np.column_stack([self.focal_tilde, self.treat_tilde])

    @classmethod
    def from_raw(cls, data: Dataset, focal: FocalSpec | str = FocalSpec.MAX) -> "ResidualizedDesign":
        """Use the raw (unresidualized, uncentered) columns as the design."""
        return cls(
            y_tilde=data.outcome,
            focal_tilde=data.focal(focal),
            treat_tilde=data.treatments,
            treatment_names=data.treatment_names,
            learner="raw",
            provenance=f"raw columns, focal={FocalSpec.parse(focal).value}",
        )

    def subset(self, rows: np.ndarray) -> "ResidualizedDesign":
        return ResidualizedDesign(
            self.y_tilde[rows],
            self.focal_tilde[rows],
            self.treat_tilde[rows],
            self.treatment_names,
            self.learner,
            self.provenance,
        )
