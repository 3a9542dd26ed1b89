"""COUGHVID metadata: parsing, null accounting, filtering and expert annotations.

Categorical values are kept as the raw strings found in the CSV (``"True"``,
``"male"``, ``"COVID-19"`` ...); only the quality scores and the numeric
demographic columns are converted.
"""

from __future__ import annotations

import csv
import io
import os
from collections import Counter
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DomainError, EmptyInputError, InsufficientClassError, ParseError, SchemaError

UNKNOWN = "unknown"

BASE_COLUMNS = [
    "uuid",
    "datetime",
    "cough_detected",
    "SNR",
    "latitude",
    "longitude",
    "age",
    "gender",
    "respiratory_condition",
    "fever_muscle_pain",
    "status",
]
EXPERT_FIELDS = [
    "quality",
    "cough_type",
    "dyspnea",
    "wheezing",
    "stridor",
    "choking",
    "congestion",
    "nothing",
    "diagnosis",
    "severity",
]
N_EXPERTS = 4
COLUMNS = BASE_COLUMNS + [f"{name}_{k}" for k in range(1, N_EXPERTS + 1) for name in EXPERT_FIELDS]
PHYSICIANS = ["P01", "P02", "P03", "P04"]

STATUSES = ("COVID-19", "healthy", "symptomatic")

_CATEGORICAL = ("gender", "respiratory_condition", "fever_muscle_pain", "status")
_ATTR = {"SNR": "snr"}

# status -> diagnoses accepted as a match
_DIAGNOSIS_MATCH = {
    "healthy": {"healthy_cough"},
    "symptomatic": {"lower_infection", "upper_infection", "obstructive_disease"},
    "COVID-19": {"COVID-19"},
    UNKNOWN: {UNKNOWN},
}


@dataclass(frozen=True)
class ExpertAnnotation:
    quality: Optional[str] = None
    cough_type: Optional[str] = None
    dyspnea: Optional[str] = None
    wheezing: Optional[str] = None
    stridor: Optional[str] = None
    choking: Optional[str] = None
    congestion: Optional[str] = None
    nothing: Optional[str] = None
    diagnosis: Optional[str] = None
    severity: Optional[str] = None

    def filled(self) -> "ExpertAnnotation":
        return ExpertAnnotation(**{f.name: UNKNOWN if getattr(self, f.name) is None else getattr(self, f.name)
                                   for f in fields(self)})


@dataclass(frozen=True)
class MetadataRecord:
    uuid: str
    datetime: str
    cough_detected: float
    snr: float
    latitude: Optional[float] = None
    longitude: Optional[float] = None
    age: Optional[int] = None
    gender: Optional[str] = None
    respiratory_condition: Optional[str] = None
    fever_muscle_pain: Optional[str] = None
    status: Optional[str] = None
    expert: tuple = field(default=(None, None, None, None))

    def get(self, column: str):
        """Value of a source CSV column, or None when it was empty."""
        if column in BASE_COLUMNS:
            return getattr(self, _ATTR.get(column, column))
        name, _, k = column.rpartition("_")
        ann = self.expert[int(k) - 1]
        return None if ann is None else getattr(ann, name)


@dataclass(frozen=True)
class PhysicianRow:
    record: MetadataRecord
    annotation: ExpertAnnotation
    physician: str

    def get(self, column: str):
        if column == "physician":
            return self.physician
        if column in EXPERT_FIELDS:
            return getattr(self.annotation, column)
        return self.record.get(column)


def _opt_float(text: str) -> Optional[float]:
    return float(text) if text != "" else None


def _opt_str(text: str) -> Optional[str]:
    return text if text != "" else None


def _opt_int(text: str) -> Optional[int]:
    return int(float(text)) if text != "" else None


def parse_metadata(data: bytes | str) -> list[MetadataRecord]:
    """Parse ``metadata_compiled.csv`` content into records.

    The first column of the COUGHVID file is sometimes an unnamed pandas index;
    columns are located by header name so extra columns are tolerated.
    """
    text = data.decode("utf-8-sig") if isinstance(data, (bytes, bytearray)) else data
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("metadata is empty: no header row") from None
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"metadata header is missing columns: {', '.join(missing)}")
    index = {name: header.index(name) for name in COLUMNS}

    records = []
    for row in reader:
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(
                f"line {reader.line_num}: expected {len(header)} columns, found {len(row)}"
            )
        cell = {name: row[i].strip() for name, i in index.items()}
        try:
            experts = []
            for k in range(1, N_EXPERTS + 1):
                if cell[f"quality_{k}"] == "":
                    experts.append(None)
                    continue
                experts.append(ExpertAnnotation(**{n: _opt_str(cell[f"{n}_{k}"]) for n in EXPERT_FIELDS}))
            rec = MetadataRecord(
                uuid=cell["uuid"],
                datetime=cell["datetime"],
                cough_detected=float(cell["cough_detected"]),
                snr=float(cell["SNR"]),
                latitude=_opt_float(cell["latitude"]),
                longitude=_opt_float(cell["longitude"]),
                age=_opt_int(cell["age"]),
                gender=_opt_str(cell["gender"]),
                respiratory_condition=_opt_str(cell["respiratory_condition"]),
                fever_muscle_pain=_opt_str(cell["fever_muscle_pain"]),
                status=_opt_str(cell["status"]),
                expert=tuple(experts),
            )
        except ValueError as exc:
            raise ParseError(f"line {reader.line_num}: {exc}") from None
        records.append(rec)
    return records


def load_metadata(path: str | os.PathLike) -> list[MetadataRecord]:
    with open(path, "rb") as fh:
        return parse_metadata(fh.read())


def null_report(records: Sequence[MetadataRecord]) -> dict[str, float]:
    """Percentage of empty cells per source column."""
    if not records:
        raise EmptyInputError("null_report needs at least one record")
    total = len(records)
    return {c: 100.0 * sum(r.get(c) is None for r in records) / total for c in COLUMNS}


def fill_unknown(records: Iterable[MetadataRecord]) -> list[MetadataRecord]:
    """Replace absent categorical values with ``"unknown"``.

    Latitude, longitude and age stay absent so they remain numeric.
    """
    out = []
    for r in records:
        updates = {c: UNKNOWN for c in _CATEGORICAL if getattr(r, c) is None}
        out.append(replace(r, **updates) if updates else r)
    return out


def quality_filter(records: Iterable[MetadataRecord], p_min: float = 0.5,
                   snr_min: float = 5.0) -> list[MetadataRecord]:
    return [r for r in records if r.cough_detected > p_min and r.snr > snr_min]


def split_by_physicians(records: Sequence[MetadataRecord]) -> list[PhysicianRow]:
    """One row per (record, annotating physician), grouped P01..P04."""
    rows = []
    for k, physician in enumerate(PHYSICIANS):
        for r in records:
            ann = r.expert[k]
            if ann is not None:
                rows.append(PhysicianRow(r, ann.filled(), physician))
    return rows


def diagnosis_match(status: str, diagnosis: str) -> bool:
    try:
        return diagnosis in _DIAGNOSIS_MATCH[status]
    except KeyError:
        raise DomainError(f"unrecognized status {status!r}") from None


def class_index(status: str) -> int:
    """GAN label for a status: statuses sorted ascending (COVID-19, healthy, symptomatic)."""
    try:
        return STATUSES.index(status)
    except ValueError:
        raise DomainError(f"no class index for status {status!r}") from None


def balanced_sample(records: Sequence[MetadataRecord], seed: int) -> list[MetadataRecord]:
    """Keep every COVID-19 row and draw as many rows from each other status.

    Classes are visited in sorted order; each non-COVID class is sampled
    without replacement by ``numpy.random.default_rng(seed)`` (PCG64) and the
    kept rows retain their input order.
    """
    by_status: dict[str, list[MetadataRecord]] = {}
    for r in records:
        if r.status is None or r.status == UNKNOWN:
            continue
        by_status.setdefault(r.status, []).append(r)
    class_size = len(by_status.get("COVID-19", []))
    if class_size == 0:
        raise InsufficientClassError("no COVID-19 rows to anchor the class size")

    rng = np.random.default_rng(seed)
    out = []
    for status in sorted(by_status):
        rows = by_status[status]
        if len(rows) < class_size:
            raise InsufficientClassError(
                f"class {status!r} has {len(rows)} rows, fewer than class size {class_size}"
            )
        if status == "COVID-19":
            out.extend(rows)
        else:
            keep = np.sort(rng.choice(len(rows), size=class_size, replace=False))
            out.extend(rows[i] for i in keep)
    return out


# ---------------------------------------------------------------- reports

def status_counts(records: Iterable[MetadataRecord]) -> dict[str, int]:
    counts = Counter(r.status if r.status is not None else UNKNOWN for r in records)
    return dict(sorted(counts.items()))


def physician_counts(rows: Iterable[PhysicianRow]) -> dict[tuple[str, str], int]:
    """Annotation count per (physician, patient status)."""
    counts = Counter((row.physician, row.record.status or UNKNOWN) for row in rows)
    return dict(sorted(counts.items()))


def diagnosis_match_counts(rows: Iterable[PhysicianRow]) -> dict[tuple[str, bool], int]:
    counts = Counter()
    for row in rows:
        status = row.record.status or UNKNOWN
        counts[(status, diagnosis_match(status, row.annotation.diagnosis or UNKNOWN))] += 1
    return dict(sorted(counts.items()))


def write_reports(records: Sequence[MetadataRecord], out_dir: str | os.PathLike) -> list[str]:
    """Write the EDA tables as CSV files and return their paths.

    The status and physician tables are computed on the filled, quality
    filtered records, following the order the analysis was carried out in.
    """
    os.makedirs(out_dir, exist_ok=True)
    filled = fill_unknown(records)
    rows = split_by_physicians(quality_filter(filled))
    paths = []

    def emit(name, header, body):
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(body)
        paths.append(path)

    emit("null_report.csv", ["column", "null_percent"],
         [(c, f"{p:.6f}") for c, p in null_report(records).items()])
    emit("status_counts.csv", ["status", "count"], status_counts(filled).items())
    emit("physician_counts.csv", ["physician", "status", "count"],
         [(p, s, n) for (p, s), n in physician_counts(rows).items()])
    emit("diagnosis_match.csv", ["status", "diagnosis_match", "count"],
         [(s, m, n) for (s, m), n in diagnosis_match_counts(rows).items()])
    return paths
