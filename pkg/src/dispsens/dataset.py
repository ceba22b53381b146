"""Data ingestion and variable-role encoding.

Maps a tabular file onto the variable roles used everywhere downstream:
a categorical group column (reference level first), one mediator, one
outcome, intermediate confounders, baseline covariates, and optionally a
known confounder column for oracle runs. Group membership is dummy-coded
with one indicator per non-reference level so regression coefficients read
directly as group contrasts.

Missing values are handled by listwise deletion with an explicit count on
the returned dataset (never silently). Non-numeric confounder/covariate
columns are dummy-expanded here so the regression layer only ever sees
numeric matrices.
"""

import csv
import json
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import NameLookupError, ParseError, SchemaError

_MISSING_TOKENS = {"", "na", "nan", "null", "none"}


@dataclass(frozen=True)
class Schema:
    """Column-to-role mapping for a tabular input file."""

    group_column: str
    reference_level: str
    mediator_column: str
    outcome_column: str
    confounder_columns: tuple = ()
    covariate_columns: tuple = ()
    unobserved_column: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "confounder_columns", tuple(self.confounder_columns))
        object.__setattr__(self, "covariate_columns", tuple(self.covariate_columns))
        named = [self.group_column, self.mediator_column, self.outcome_column]
        named += list(self.confounder_columns) + list(self.covariate_columns)
        if self.unobserved_column is not None:
            named.append(self.unobserved_column)
        dupes = {c for c in named if named.count(c) > 1}
        if dupes:
            raise SchemaError(f"columns assigned to more than one role: {sorted(dupes)}")

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(
            group_column=raw["group"],
            reference_level=raw["reference"],
            mediator_column=raw["mediator"],
            outcome_column=raw["outcome"],
            confounder_columns=tuple(raw.get("confounders", ())),
            covariate_columns=tuple(raw.get("covariates", ())),
            unobserved_column=raw.get("unobserved"),
        )

    def to_dict(self):
        out = {
            "group": self.group_column,
            "reference": self.reference_level,
            "mediator": self.mediator_column,
            "outcome": self.outcome_column,
            "confounders": list(self.confounder_columns),
            "covariates": list(self.covariate_columns),
        }
        if self.unobserved_column is not None:
            out["unobserved"] = self.unobserved_column
        return out


@dataclass(frozen=True)
class Finding:
    """One validation finding (advisory, never fatal)."""

    kind: str
    subject: str
    message: str


@dataclass(frozen=True)
class EncodedDataset:
    """Numeric, role-encoded observations.

    `group_levels` is ordered with the reference level first; `indicators`
    holds one 0/1 column per non-reference level, in that order. All
    matrices are float64 and frozen after construction.
    """

    n: int
    group_levels: tuple
    group_labels: np.ndarray
    indicators: np.ndarray
    mediator: np.ndarray
    outcome: np.ndarray
    confounders: np.ndarray
    covariates: np.ndarray
    confounder_names: tuple
    covariate_names: tuple
    unobserved: np.ndarray | None = None
    n_dropped: int = 0
    mediator_name: str = "m"
    outcome_name: str = "y"
    group_name: str = "group"
    unobserved_name: str = "u"

    def __post_init__(self):
        for arr in (self.indicators, self.mediator, self.outcome,
                    self.confounders, self.covariates, self.unobserved):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def comparison_levels(self):
        return self.group_levels[1:]

    @property
    def reference_level(self):
        return self.group_levels[0]

    def take(self, idx):
        """Row-subset (or resample) preserving the level order."""
        idx = np.asarray(idx)
        labels = self.group_labels[idx]
        return replace(
            self,
            n=len(idx),
            group_labels=labels,
            indicators=_indicator_matrix(labels, self.group_levels),
            mediator=self.mediator[idx].copy(),
            outcome=self.outcome[idx].copy(),
            confounders=self.confounders[idx].copy(),
            covariates=self.covariates[idx].copy(),
            unobserved=None if self.unobserved is None else self.unobserved[idx].copy(),
        )

    def with_reference(self, level):
        """Re-encode with `level` as the reference group."""
        if level not in self.group_levels:
            raise NameLookupError(f"unknown group level {level!r}; have {list(self.group_levels)}")
        levels = (level,) + tuple(g for g in self.group_levels if g != level)
        return replace(
            self,
            group_levels=levels,
            indicators=_indicator_matrix(self.group_labels, levels),
        )

    def decode_groups(self):
        """Recover per-row group labels from the indicator matrix."""
        out = np.full(self.n, self.group_levels[0], dtype=object)
        for j, level in enumerate(self.group_levels[1:]):
            out[self.indicators[:, j] == 1.0] = level
        return out


def _indicator_matrix(labels, levels):
    ind = np.zeros((len(labels), len(levels) - 1), dtype=np.float64)
    for j, level in enumerate(levels[1:]):
        ind[:, j] = labels == level
    return ind


def _is_missing(cell):
    return cell.strip().lower() in _MISSING_TOKENS


def _try_float(cell):
    try:
        return float(cell)
    except ValueError:
        return None


def encode(group_labels, mediator, outcome, confounders, covariates,
           reference_level, confounder_names=(), covariate_names=(),
           unobserved=None, n_dropped=0, column_names=None):
    """Assemble an EncodedDataset from already-numeric columns.

    Group levels are discovered from the data and ordered reference-first,
    remaining levels in order of first appearance.
    """
    labels = np.asarray(group_labels, dtype=object)
    n = len(labels)
    seen = []
    for g in labels:
        if g not in seen:
            seen.append(g)
    if reference_level not in seen:
        raise SchemaError(f"reference level {reference_level!r} not present in group column")
    levels = (reference_level,) + tuple(g for g in seen if g != reference_level)

    confounders = np.asarray(confounders, dtype=np.float64).reshape(n, -1)
    covariates = np.asarray(covariates, dtype=np.float64).reshape(n, -1)
    if not confounder_names:
        confounder_names = tuple(f"x{j + 1}" for j in range(confounders.shape[1]))
    if not covariate_names:
        covariate_names = tuple(f"c{j + 1}" for j in range(covariates.shape[1]))

    p_outcome = 1 + (len(levels) - 1) + confounders.shape[1] + 1 + covariates.shape[1]
    if n <= p_outcome:
        raise SchemaError(
            f"{n} rows cannot identify an outcome model with {p_outcome} parameters"
        )

    names = column_names or {}
    return EncodedDataset(
        n=n,
        group_levels=levels,
        group_labels=labels,
        indicators=_indicator_matrix(labels, levels),
        mediator=np.asarray(mediator, dtype=np.float64).copy(),
        outcome=np.asarray(outcome, dtype=np.float64).copy(),
        confounders=confounders.copy(),
        covariates=covariates.copy(),
        confounder_names=tuple(confounder_names),
        covariate_names=tuple(covariate_names),
        unobserved=None if unobserved is None else np.asarray(unobserved, dtype=np.float64).copy(),
        n_dropped=n_dropped,
        mediator_name=names.get("mediator", "m"),
        outcome_name=names.get("outcome", "y"),
        group_name=names.get("group", "group"),
        unobserved_name=names.get("unobserved", "u"),
    )


def _parse_numeric_column(rows, col_idx, col_name):
    """Parse one column as float64; any unparseable non-missing cell is an error."""
    out = np.empty(len(rows))
    for i, row in enumerate(rows):
        val = _try_float(row[col_idx])
        if val is None:
            raise ParseError(
                f"column {col_name!r} has unparseable numeric value "
                f"{row[col_idx]!r} at data row {i + 1}",
                row=i + 1,
                column=col_name,
            )
        out[i] = val
    return out


def _expand_column(rows, col_idx, col_name):
    """Parse a confounder/covariate column; dummy-expand if categorical.

    A column is numeric if every cell parses as float, categorical if none
    does. A mixed column is ambiguous and rejected.
    """
    cells = [row[col_idx] for row in rows]
    parsed = [_try_float(c) for c in cells]
    n_numeric = sum(v is not None for v in parsed)
    if n_numeric == len(cells):
        return [np.array(parsed, dtype=np.float64)], [col_name]
    if n_numeric > 0:
        bad = next(i for i, v in enumerate(parsed) if v is None)
        raise ParseError(
            f"column {col_name!r} mixes numeric and non-numeric values "
            f"(first non-numeric {cells[bad]!r} at data row {bad + 1})",
            row=bad + 1,
            column=col_name,
        )
    levels = sorted(set(cells))
    if len(levels) < 2:
        # constant categorical: emit a zero column so validate() can flag it
        return [np.zeros(len(cells))], [f"{col_name}={levels[0]}"]
    cols, names = [], []
    for level in levels[1:]:
        cols.append(np.array([1.0 if c == level else 0.0 for c in cells]))
        names.append(f"{col_name}={level}")
    return cols, names


def load_csv(path, schema):
    """Load an RFC-4180 CSV (header required) under a Schema.

    Rows with any missing value in a schema column are dropped; the count is
    recorded on the dataset and surfaced as a warning. Numeric columns are
    parsed as float64; categorical confounders/covariates are dummy-expanded
    (first level in sorted order is the baseline).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected a header row") from None
        raw_rows = [row for row in reader if row]

    header = [h.strip() for h in header]
    col_of = {name: i for i, name in enumerate(header)}
    needed = [schema.group_column, schema.mediator_column, schema.outcome_column]
    needed += list(schema.confounder_columns) + list(schema.covariate_columns)
    if schema.unobserved_column is not None:
        needed.append(schema.unobserved_column)
    missing = [c for c in needed if c not in col_of]
    if missing:
        raise SchemaError(f"{path}: missing required columns {missing}")

    for i, row in enumerate(raw_rows):
        if len(row) != len(header):
            raise ParseError(
                f"{path}: data row {i + 1} has {len(row)} fields, header has {len(header)}",
                row=i + 1,
            )

    used_idx = [col_of[c] for c in needed]
    kept, dropped = [], 0
    for row in raw_rows:
        if any(_is_missing(row[i]) for i in used_idx):
            dropped += 1
        else:
            kept.append(row)
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} rows with missing values (of {len(raw_rows)})")
    if not kept:
        raise SchemaError(f"{path}: no complete rows after listwise deletion")

    groups = np.array([row[col_of[schema.group_column]].strip() for row in kept], dtype=object)
    mediator = _parse_numeric_column(kept, col_of[schema.mediator_column], schema.mediator_column)
    outcome = _parse_numeric_column(kept, col_of[schema.outcome_column], schema.outcome_column)

    conf_cols, conf_names = [], []
    for c in schema.confounder_columns:
        cols, names = _expand_column(kept, col_of[c], c)
        conf_cols += cols
        conf_names += names
    cov_cols, cov_names = [], []
    for c in schema.covariate_columns:
        cols, names = _expand_column(kept, col_of[c], c)
        cov_cols += cols
        cov_names += names

    unobserved = None
    if schema.unobserved_column is not None:
        unobserved = _parse_numeric_column(kept, col_of[schema.unobserved_column],
                                           schema.unobserved_column)

    n = len(kept)
    return encode(
        groups,
        mediator,
        outcome,
        np.column_stack(conf_cols) if conf_cols else np.empty((n, 0)),
        np.column_stack(cov_cols) if cov_cols else np.empty((n, 0)),
        schema.reference_level,
        confounder_names=conf_names,
        covariate_names=cov_names,
        unobserved=unobserved,
        n_dropped=dropped,
        column_names={
            "mediator": schema.mediator_column,
            "outcome": schema.outcome_column,
            "group": schema.group_column,
            "unobserved": schema.unobserved_column or "u",
        },
    )


def write_csv(data, path, include_unobserved=True):
    """Write an EncodedDataset back to CSV (full float precision).

    Inverse of load_csv for datasets whose confounders/covariates are
    already numeric; used for round-trip checks and simulated exports.
    """
    header = [data.group_name, data.mediator_name, data.outcome_name]
    header += list(data.confounder_names) + list(data.covariate_names)
    write_u = include_unobserved and data.unobserved is not None
    if write_u:
        header.append(data.unobserved_name)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n):
            row = [data.group_labels[i], repr(float(data.mediator[i])), repr(float(data.outcome[i]))]
            row += [repr(float(v)) for v in data.confounders[i]]
            row += [repr(float(v)) for v in data.covariates[i]]
            if write_u:
                row.append(repr(float(data.unobserved[i])))
            writer.writerow(row)


def schema_for(data):
    """Schema matching a write_csv export of this dataset."""
    return Schema(
        group_column=data.group_name,
        reference_level=data.reference_level,
        mediator_column=data.mediator_name,
        outcome_column=data.outcome_name,
        confounder_columns=data.confounder_names,
        covariate_columns=data.covariate_names,
        unobserved_column=data.unobserved_name if data.unobserved is not None else None,
    )


def validate(data):
    """Advisory checks: sparse groups, constant columns, no mediator variation.

    Returns a list of Findings; an empty list means nothing suspicious.
    """
    findings = []
    for level in data.group_levels:
        mask = data.group_labels == level
        count = int(mask.sum())
        if count < 2:
            findings.append(Finding(
                "sparse_group", str(level),
                f"group {level!r} has only {count} row(s)",
            ))
            continue
        med = data.mediator[mask]
        if np.ptp(med) == 0.0:
            findings.append(Finding(
                "no_mediator_variation", str(level),
                f"group {level!r} has a constant mediator ({med[0]!r}); "
                f"equalizing its mediator distribution is not informative",
            ))

    def check_constant(matrix, names, role):
        for j, name in enumerate(names):
            col = matrix[:, j]
            if col.size and np.ptp(col) == 0.0:
                findings.append(Finding(
                    "constant_column", name,
                    f"{role} column {name!r} is constant and will make designs singular",
                ))

    check_constant(data.confounders, data.confounder_names, "confounder")
    check_constant(data.covariates, data.covariate_names, "covariate")
    if np.ptp(data.mediator) == 0.0:
        findings.append(Finding("constant_column", data.mediator_name,
                                "mediator column is constant"))
    if np.ptp(data.outcome) == 0.0:
        findings.append(Finding("constant_column", data.outcome_name,
                                "outcome column is constant"))
    return findings
