"""CSV ingestion with row-level validation, and table emission.

Input schema: a header row with columns ``w`` (float), ``delta`` (0/1),
optional ``eta`` (0/1), and covariate columns named ``z_*`` (floats).
UTF-8, comma-separated, ``.`` decimal. Unknown columns are ignored and
reported. Lines starting with ``#`` are comments; every file written
here carries such a comment identifying the run.

Floats are emitted with ``repr``, so a write/read round trip reproduces
the values bit for bit.
"""

from __future__ import annotations

import csv
import datetime as _dt
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .errors import (
    MissingColumnError,
    NegativeTimeError,
    NonBinaryIndicatorError,
    ValidationError,
)

_AVERAGE_MONTH_DAYS = 30.4375


@dataclass
class IngestReport:
    """What happened while reading one CSV file."""

    path: str
    n_read: int = 0
    n_rejected: int = 0
    rejections: list = field(default_factory=list)
    ignored_columns: tuple = ()

    def summary(self) -> str:
        head = f"{self.path}: {self.n_read} rows read, {self.n_rejected} rejected"
        if self.ignored_columns:
            head += f", ignored columns {list(self.ignored_columns)}"
        return head


def _parse_indicator(raw, row_num, column):
    value = float(raw)
    if value not in (0.0, 1.0):
        raise NonBinaryIndicatorError(f"data row {row_num}: {column}={raw!r} is not 0 or 1")
    return value


def read_dataset_csv(
    path,
    covariate_columns: Optional[Sequence[str]] = None,
    require_judgments: bool = False,
    skip_bad: bool = False,
) -> tuple[Dataset, IngestReport]:
    """Read and validate a dataset; reject bad rows or abort on the first batch.

    Without ``skip_bad`` any rejected row aborts the run (the raised error
    matches the first rejection and its message lists the reasons).
    """
    path = str(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for required in ("w", "delta"):
            if required not in header:
                raise MissingColumnError(f"{path}: required column {required!r} is missing")
        has_eta = "eta" in header
        if require_judgments and not has_eta:
            raise MissingColumnError(f"{path}: judgment column 'eta' is required but missing")
        if covariate_columns is None:
            covariate_columns = [h for h in header if h.startswith("z_")]
        missing = [c for c in covariate_columns if c not in header]
        if missing:
            raise MissingColumnError(f"{path}: covariate columns {missing} are missing")
        if not covariate_columns:
            raise MissingColumnError(f"{path}: no covariate columns (z_*) found")
        known = {"w", "delta"} | ({"eta"} if has_eta else set()) | set(covariate_columns)
        ignored = tuple(h for h in header if h not in known)
        index = {name: header.index(name) for name in known}

        w_out, delta_out, eta_out, z_out = [], [], [], []
        rejections = []
        row_num = 0
        for row in reader:
            row_num += 1
            try:
                if len(row) < len(header):
                    raise ValidationError(
                        f"data row {row_num}: {len(row)} fields, expected {len(header)}"
                    )
                w = float(row[index["w"]])
                if not np.isfinite(w) or w < 0:
                    raise NegativeTimeError(f"data row {row_num}: w={row[index['w']]!r}")
                delta = _parse_indicator(row[index["delta"]], row_num, "delta")
                eta = _parse_indicator(row[index["eta"]], row_num, "eta") if has_eta else None
                if eta is not None and eta > delta:
                    raise ValidationError(
                        f"data row {row_num}: eta=1 with delta=0 asserts an unrecorded event"
                    )
                z = [float(row[index[c]]) for c in covariate_columns]
                if not all(np.isfinite(v) for v in z):
                    raise ValidationError(f"data row {row_num}: non-finite covariate")
            except (ValidationError, ValueError) as exc:
                if isinstance(exc, ValueError) and not isinstance(exc, ValidationError):
                    exc = ValidationError(f"data row {row_num}: {exc}")
                rejections.append((row_num, exc))
                continue
            w_out.append(w)
            delta_out.append(delta)
            if has_eta:
                eta_out.append(eta)
            z_out.append(z)

    report = IngestReport(
        path=path,
        n_read=row_num,
        n_rejected=len(rejections),
        rejections=[(i, str(e)) for i, e in rejections],
        ignored_columns=ignored,
    )
    if rejections and not skip_bad:
        first = rejections[0][1]
        detail = "; ".join(str(e) for _, e in rejections[:5])
        raise type(first)(f"{path}: {len(rejections)} rejected rows ({detail})")
    if not w_out:
        raise ValidationError(f"{path}: no valid rows")
    dataset = Dataset(
        w=np.asarray(w_out),
        event=np.asarray(delta_out),
        covariates=np.asarray(z_out),
        judgments=np.asarray(eta_out) if has_eta else None,
        covariate_names=tuple(covariate_columns),
        provenance=path,
    )
    return dataset, report


def _format(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table_csv(path, header: Sequence[str], rows, comments: Sequence[str] = ()):
    """Write a rectangular table; ``rows`` is a 2-d array or list of lists."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for comment in comments:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in np.atleast_2d(np.asarray(rows, dtype=object)) if len(rows) else []:
            writer.writerow([_format(v) for v in row])


def write_records_csv(path, fieldnames: Sequence[str], records, comments: Sequence[str] = ()):
    """Write dict records in a fixed field order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for comment in comments:
            fh.write(f"# {comment}\n")
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames))
        writer.writeheader()
        for record in records:
            writer.writerow({k: _format(v) for k, v in record.items()})


def write_dataset_csv(
    dataset: Dataset, path, comments: Sequence[str] = (), latents: Optional[dict] = None
):
    """Emit a dataset in the ingestion schema (plus optional latent columns)."""
    header = ["w", "delta"]
    if dataset.judgments is not None:
        header.append("eta")
    header.extend(dataset.covariate_names)
    latents = latents or {}
    header.extend(latents.keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for comment in comments:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(dataset.n):
            row = [repr(float(dataset.w[i])), _format(int(dataset.event[i]))]
            if dataset.judgments is not None:
                row.append(_format(int(dataset.judgments[i])))
            row.extend(repr(float(v)) for v in dataset.covariates[i])
            row.extend(repr(float(arr[i])) for arr in latents.values())
            writer.writerow(row)


def _as_date(value) -> _dt.date:
    if isinstance(value, _dt.date):
        return value
    return _dt.date.fromisoformat(str(value))


def loan_duration(issue_date, cutoff_date, default_date=None, last_payment_date=None):
    """Map loan dates to (months_active, default indicator).

    The episode runs from the issue date to the default date when one
    exists at or before the cutoff, otherwise to the last payment date
    capped at the cutoff (or the cutoff itself for still-active loans).
    Months are day counts divided by the average month length 30.4375.
    """
    issue = _as_date(issue_date)
    cutoff = _as_date(cutoff_date)
    default = _as_date(default_date) if default_date is not None else None
    last = _as_date(last_payment_date) if last_payment_date is not None else None
    if default is not None and default <= cutoff:
        end, indicator = default, 1
    else:
        end, indicator = min(last or cutoff, cutoff), 0
    if end < issue:
        raise ValidationError("loan episode ends before it starts")
    months = (end - issue).days / _AVERAGE_MONTH_DAYS
    return months, indicator
