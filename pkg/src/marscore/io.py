"""CSV ingestion, run configuration, and report serialization.

Input files are UTF-8, comma-delimited, with a mandatory header row. A blank
or ``NA`` outcome cell marks the row's outcome as missing; covariate cells
must always be present and numeric. The constant intercept column is
synthesized here, never read from the file. JSON reports carry a top-level
``schema_version``.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .basis import BasisTerm, intercept, product, raw, square
from .data import Dataset
from .exceptions import (
    EmptyDataset,
    InvalidAlpha,
    IoFailure,
    MissingColumn,
    MissingCovariate,
    NonNumericCell,
)
from .model import GaussianOutcomeFamily, fit_location, fit_outcome_parametric, fit_propensity_null
from .score import (
    ScoreTestResult,
    score_statistic_s1,
    score_statistic_s2,
    test_report,
    variance_s1,
    variance_s2,
)

SCHEMA_VERSION = 1

_NA_STRINGS = {"", "na"}


def parse_term(term: str, covariate_names) -> BasisTerm:
    """Parse a basis term over covariate names: ``1``, ``name``, ``name^2``
    or ``a*b``. Column indices account for the synthesized intercept."""
    names = list(covariate_names)

    def index_of(name: str) -> int:
        name = name.strip()
        if name not in names:
            raise ValueError(f"basis term references undeclared covariate {name!r}")
        return 1 + names.index(name)

    term = term.strip()
    if term == "1":
        return intercept()
    if "*" in term:
        left, _, right = term.partition("*")
        return product(index_of(left), index_of(right))
    if term.endswith("^2"):
        return square(index_of(term[:-2]))
    return raw(index_of(term))


@dataclass(frozen=True)
class ColumnSpec:
    """Names the outcome, covariates, and model terms for one analysis run.

    ``propensity_columns`` defaults to every covariate; the basis specs
    default to an intercept plus each raw covariate for the mean and an
    intercept-only log variance.
    """

    outcome_column: str
    covariate_columns: tuple
    propensity_columns: tuple | None = None
    mean_basis_spec: tuple | None = None
    logvar_basis_spec: tuple = ("1",)

    def __post_init__(self):
        covs = tuple(self.covariate_columns)
        object.__setattr__(self, "covariate_columns", covs)
        if self.outcome_column in covs:
            raise ValueError(f"outcome column {self.outcome_column!r} is also a covariate")
        if len(set(covs)) != len(covs):
            raise ValueError("covariate columns must be distinct")
        if self.propensity_columns is not None:
            prop = tuple(self.propensity_columns)
            unknown = [c for c in prop if c not in covs]
            if unknown:
                raise ValueError(f"propensity columns {unknown} are not declared covariates")
            object.__setattr__(self, "propensity_columns", prop)
        if self.mean_basis_spec is not None:
            object.__setattr__(self, "mean_basis_spec", tuple(self.mean_basis_spec))
        object.__setattr__(self, "logvar_basis_spec", tuple(self.logvar_basis_spec))
        # fail fast on malformed terms
        self.mean_basis()
        self.logvar_basis()

    def effective_mean_spec(self) -> tuple:
        if self.mean_basis_spec is not None:
            return self.mean_basis_spec
        return ("1",) + self.covariate_columns

    def mean_basis(self) -> tuple:
        return tuple(parse_term(t, self.covariate_columns) for t in self.effective_mean_spec())

    def logvar_basis(self) -> tuple:
        return tuple(parse_term(t, self.covariate_columns) for t in self.logvar_basis_spec)

    def family(self) -> GaussianOutcomeFamily:
        return GaussianOutcomeFamily(mean_basis=self.mean_basis(), logvar_basis=self.logvar_basis())

    def propensity_column_indices(self) -> tuple:
        """Covariate-matrix column indices of the propensity design
        (intercept always included)."""
        if self.propensity_columns is None:
            return tuple(range(1 + len(self.covariate_columns)))
        names = list(self.covariate_columns)
        return (0,) + tuple(1 + names.index(c) for c in self.propensity_columns)


@dataclass(frozen=True)
class RunConfig:
    """Everything a data-analysis run needs besides the dataset itself."""

    columns: ColumnSpec
    variants: tuple = ("S1", "S2")
    alpha: float = 0.05
    group_by: str | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidAlpha(f"alpha must be in (0, 1), got {self.alpha}")
        variants = tuple(v.upper() for v in self.variants)
        if not variants or any(v not in ("S1", "S2") for v in variants):
            raise ValueError(f"variants must be a nonempty subset of S1/S2, got {self.variants}")
        object.__setattr__(self, "variants", variants)


def read_csv(path, spec: ColumnSpec, keep_columns=()) -> Dataset:
    """Read a dataset; blank/NA outcome cells become missing rows.

    ``keep_columns`` names string columns (e.g. a grouping variable) carried
    through verbatim in ``Dataset.labels``.
    """
    keep_columns = tuple(keep_columns)
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot open {path}: {exc}") from exc
    with handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        needed = [spec.outcome_column, *spec.covariate_columns, *keep_columns]
        for col in needed:
            if col not in header:
                raise MissingColumn(f"column {col!r} not found in {path} (header: {header})")
        d_list: list[int] = []
        y_list: list[float] = []
        x_rows: list[list[float]] = []
        labels: dict[str, list] = {c: [] for c in keep_columns}
        for line_no, row in enumerate(reader, start=2):
            cell = row.get(spec.outcome_column)
            cell = "" if cell is None else cell.strip()
            if cell.lower() in _NA_STRINGS:
                d_list.append(0)
            else:
                try:
                    y_list.append(float(cell))
                except ValueError:
                    raise NonNumericCell(
                        f"row {line_no}, column {spec.outcome_column!r}: "
                        f"cannot parse {cell!r} as a number"
                    ) from None
                d_list.append(1)
            x_row = [1.0]
            for col in spec.covariate_columns:
                cell = row.get(col)
                cell = "" if cell is None else cell.strip()
                if cell.lower() in _NA_STRINGS:
                    raise MissingCovariate(
                        f"row {line_no}, column {col!r}: covariates may never be missing"
                    )
                try:
                    x_row.append(float(cell))
                except ValueError:
                    raise NonNumericCell(
                        f"row {line_no}, column {col!r}: cannot parse {cell!r} as a number"
                    ) from None
            x_rows.append(x_row)
            for col in keep_columns:
                value = row.get(col)
                labels[col].append("" if value is None else value.strip())
        if not x_rows:
            raise EmptyDataset(f"{path} contains no data rows")
    return Dataset(
        x=np.array(x_rows, dtype=float),
        d=np.array(d_list, dtype=np.int8),
        y_complete=np.array(y_list, dtype=float),
        labels={c: tuple(v) for c, v in labels.items()},
    )


def write_dataset_csv(data: Dataset, path, outcome_column: str, covariate_columns) -> None:
    """Write a dataset back to CSV (intercept column omitted, full precision).

    Missing outcomes become empty cells, so a round trip through
    :func:`read_csv` reproduces the dataset exactly.
    """
    covariate_columns = tuple(covariate_columns)
    if len(covariate_columns) != data.p - 1:
        raise ValueError(
            f"need {data.p - 1} covariate names for this dataset, got {len(covariate_columns)}"
        )
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow([*covariate_columns, outcome_column, *data.labels.keys()])
            y_iter = iter(data.y_complete)
            for i in range(data.n):
                cells = [repr(float(v)) for v in data.x[i, 1:]]
                cells.append(repr(float(next(y_iter))) if data.d[i] == 1 else "")
                cells.extend(str(data.labels[c][i]) for c in data.labels)
                writer.writerow(cells)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def group_by(data: Dataset, group_column: str) -> list[tuple[str, Dataset]]:
    """Partition rows by a label column, preserving row order within groups.

    Groups appear in order of first appearance.
    """
    if group_column not in data.labels:
        raise MissingColumn(
            f"group column {group_column!r} was not kept at ingestion "
            f"(available: {sorted(data.labels)})"
        )
    values = data.labels[group_column]
    order: list[str] = []
    members: dict[str, list[int]] = {}
    for i, v in enumerate(values):
        if v not in members:
            members[v] = []
            order.append(v)
        members[v].append(i)
    return [(label, data.subset(np.array(members[label]))) for label in order]


@dataclass(frozen=True)
class GroupTestRecord:
    """One test result on one (group, variant) cell, ready to serialize."""

    group: str | None
    result: ScoreTestResult
    missing_fraction: float
    diagnostics: dict

    def to_dict(self) -> dict:
        out = {"group": self.group, "missing_fraction": self.missing_fraction}
        out.update(self.result.to_dict())
        out["diagnostics"] = self.diagnostics
        return out

    def report_rows(self) -> list[dict]:
        return [
            {
                "group": "" if self.group is None else self.group,
                "variant": self.result.variant,
                "n": self.result.n,
                "missing_fraction": self.missing_fraction,
                "statistic": self.result.statistic,
                "sigma_sq_hat": self.result.sigma_sq_hat,
                "z": self.result.z,
                "p_value": self.result.p_value,
            }
        ]


def run_configured_tests(data: Dataset, config: RunConfig) -> list[GroupTestRecord]:
    """Run the configured score tests, per group when grouping is requested."""
    spec = config.columns
    if config.group_by is not None:
        groups = group_by(data, config.group_by)
    else:
        groups = [(None, data)]
    records = []
    for label, subset in groups:
        pf = fit_propensity_null(subset, columns=spec.propensity_column_indices())
        diagnostics = {
            "propensity_converged": pf.converged,
            "propensity_iterations": pf.iterations,
            "beta_hat": pf.beta_hat.tolist(),
        }
        if "S1" in config.variants:
            of = fit_outcome_parametric(subset, spec.family())
            diag = dict(diagnostics)
            diag.update(
                {"outcome_converged": of.converged, "outcome_iterations": of.iterations,
                 "xi_hat": of.xi_hat.tolist()}
            )
            result = test_report(
                score_statistic_s1(subset, pf, of), variance_s1(subset, pf, of), subset.n
            )
            records.append(
                GroupTestRecord(label, result, subset.missing_fraction, diag)
            )
        if "S2" in config.variants:
            lf = fit_location(subset, spec.mean_basis())
            diag = dict(diagnostics)
            diag["theta_hat"] = lf.theta_hat.tolist()
            result = test_report(
                score_statistic_s2(subset, pf, lf), variance_s2(subset, pf, lf), subset.n
            )
            records.append(
                GroupTestRecord(label, result, subset.missing_fraction, diag)
            )
    return records


def write_report(results, path, format: str = "json") -> None:
    """Serialize result records to JSON or CSV (write-then-rename)."""
    results = list(results)
    if not results:
        raise ValueError("no results to write")
    if format not in ("json", "csv"):
        raise ValueError(f"format must be 'json' or 'csv', got {format!r}")
    tmp = f"{path}.tmp"
    try:
        if format == "json":
            payload = {"schema_version": SCHEMA_VERSION, "results": [r.to_dict() for r in results]}
            with open(tmp, "w", encoding="utf-8") as handle:
                json.dump(payload, handle, indent=2)
                handle.write("\n")
        else:
            rows = [row for r in results for row in r.report_rows()]
            fields: list[str] = []
            for row in rows:
                for key in row:
                    if key not in fields:
                        fields.append(key)
            with open(tmp, "w", newline="", encoding="utf-8") as handle:
                writer = csv.DictWriter(handle, fieldnames=fields, restval="")
                writer.writeheader()
                for row in rows:
                    writer.writerow({k: _format_cell(v) for k, v in row.items()})
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _format_cell(value):
    if isinstance(value, float):
        return repr(value)
    return value
