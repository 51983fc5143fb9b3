"""Parse CLIF-style tabular event data into canonical hospitalization records.

Raw tables arrive as CSV (header row) or JSONL files with the uniform row shape
(hospitalization_id, timestamp, category, value); the table kind is declared by a
`table_kind` column or by the filename containing one of the known kind names.
Admissions rows carry demographics/admission fields as category/value pairs and
discharges rows carry the discharge category.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import json
import os
import pathlib
from typing import Iterable, Sequence

import numpy as np

Pathlike = str | os.PathLike

TABLE_KINDS = (
    "labs",
    "vitals",
    "medications",
    "assessments",
    "respiratory",
    "transfers",
    "positioning",
    "admissions",
    "discharges",
)
# numeric-valued tables; assessments mix numeric and categorical rows
NUMERIC_TABLES = frozenset({"labs", "vitals", "medications"})

# same-timestamp ordering across tables: fixed priority, then category string
TABLE_PRIORITY = {
    "transfers": 0,
    "respiratory": 1,
    "medications": 2,
    "vitals": 3,
    "labs": 4,
    "assessments": 5,
    "positioning": 6,
}

LONG_LOS_DAYS = 7
EXPIRED_CATEGORY = "expired"

# admissions-table categories consumed into Hospitalization fields
_ADMISSION_FIELDS = (
    "race",
    "ethnicity",
    "sex",
    "age_at_admission",
    "admission_type",
    "patient_id",
)


class IngestError(ValueError):
    """malformed input data; message names file, line and field where known"""


@dataclasses.dataclass(frozen=True)
class EventRecord:
    """one timestamped observation within a hospitalization"""

    timestamp: dt.datetime
    table_kind: str
    category: str
    value: float | str | None

    def sort_key(self):
        return (self.timestamp, TABLE_PRIORITY[self.table_kind], self.category)


@dataclasses.dataclass(frozen=True)
class Demographics:
    race: str | None
    ethnicity: str | None
    sex: str | None


@dataclasses.dataclass
class Hospitalization:
    id: str
    patient_id: str
    demographics: Demographics
    age_at_admission: float | None
    admission_type: str | None
    admit_time: dt.datetime
    discharge_time: dt.datetime
    discharge_category: str | None
    events: list[EventRecord]
    outcome_inpatient_mortality: bool
    outcome_long_los: bool

    def stay_hours(self) -> float:
        return (self.discharge_time - self.admit_time).total_seconds() / 3600.0


def parse_timestamp(raw: str, *, where: str = "") -> dt.datetime:
    """ISO 8601 (Z or offset) or epoch seconds; naive stamps are taken as UTC"""
    if isinstance(raw, (int, float)):
        return dt.datetime.fromtimestamp(float(raw), tz=dt.timezone.utc)
    text = str(raw).strip()
    try:
        return dt.datetime.fromtimestamp(float(text), tz=dt.timezone.utc)
    except ValueError:
        pass
    try:
        ts = dt.datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise IngestError(f"unparseable timestamp {raw!r}{where}") from None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=dt.timezone.utc)
    return ts.astimezone(dt.timezone.utc)


def format_timestamp(ts: dt.datetime) -> str:
    return ts.astimezone(dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%f%z").replace("+0000", "Z")


def table_kind_of(path: Pathlike, declared: str | None = None) -> str:
    """table kind from an explicit column value or the filename"""
    if declared is not None:
        if declared not in TABLE_KINDS:
            raise IngestError(f"unknown table_kind {declared!r} in {path}")
        return declared
    stem = pathlib.Path(path).stem.lower()
    hits = [k for k in TABLE_KINDS if k in stem]
    if len(hits) != 1:
        raise IngestError(
            f"cannot infer table_kind from filename {path}: matches {hits or 'nothing'}"
        )
    return hits[0]


def _coerce_value(raw, table_kind: str, where: str) -> float | str | None:
    if raw is None or raw == "":
        return None
    if isinstance(raw, (int, float)):
        return float(raw)
    text = str(raw)
    try:
        return float(text)
    except ValueError:
        if table_kind in NUMERIC_TABLES:
            raise IngestError(f"non-numeric value {raw!r} in numeric table{where}")
        return text


def _iter_rows(path: Pathlike, fmt: str):
    """yield (line_number, row_dict) from a CSV or JSONL table file"""
    p = pathlib.Path(path)
    if fmt == "csv":
        with p.open(newline="") as fh:
            reader = csv.DictReader(fh)
            for i, row in enumerate(reader, start=2):
                yield i, row
    elif fmt == "jsonl":
        with p.open() as fh:
            for i, line in enumerate(fh, start=1):
                if line.strip() == "":
                    continue
                try:
                    yield i, json.loads(line)
                except json.JSONDecodeError as e:
                    raise IngestError(f"malformed JSON at {p}:{i}: {e}") from None
    else:
        raise IngestError(f"unknown format {fmt!r} (expected csv or jsonl)")


def _detect_format(path: Pathlike, fmt: str | None) -> str:
    if fmt is not None:
        return fmt
    suffix = pathlib.Path(path).suffix.lower()
    return {"": "csv", ".csv": "csv", ".jsonl": "jsonl", ".json": "jsonl"}.get(suffix, "csv")


def parse_tables(
    paths: Sequence[Pathlike],
    fmt: str | None = None,
    *,
    min_stay_hours: float | None = None,
) -> list[Hospitalization]:
    """
    merge raw tables into hospitalizations with events in timestamp order

    When `min_stay_hours` is given, hospitalizations with a shorter stay are
    dropped (the usual filter is 24 hours).
    """
    events: dict[str, list[EventRecord]] = {}
    admissions: dict[str, dict] = {}
    discharges: dict[str, dict] = {}

    for path in paths:
        actual_fmt = _detect_format(path, fmt)
        probe_kind = None
        for lineno, row in _iter_rows(path, actual_fmt):
            where = f" at {path}:{lineno}"
            kind = table_kind_of(path, row.get("table_kind", probe_kind))
            probe_kind = kind
            hid = str(row.get("hospitalization_id") or "").strip()
            if not hid:
                raise IngestError(f"missing hospitalization_id{where}")
            if row.get("timestamp") in (None, ""):
                raise IngestError(f"missing timestamp field{where}")
            ts = parse_timestamp(row["timestamp"], where=where)
            category = str(row.get("category") or "").strip()
            if not category:
                raise IngestError(f"missing category field{where}")
            value = _coerce_value(row.get("value"), kind, where)

            if kind == "admissions":
                if category not in _ADMISSION_FIELDS:
                    raise IngestError(f"unknown admissions field {category!r}{where}")
                rec = admissions.setdefault(hid, {"admit_time": ts})
                rec["admit_time"] = min(rec["admit_time"], ts)
                rec[category] = value
            elif kind == "discharges":
                if category != "discharge_category":
                    raise IngestError(f"unknown discharges field {category!r}{where}")
                discharges[hid] = {"discharge_time": ts, "discharge_category": value}
            else:
                events.setdefault(hid, []).append(EventRecord(ts, kind, category, value))

    out = []
    for hid in sorted(set(admissions) | set(events) | set(discharges)):
        if hid not in admissions:
            raise IngestError(f"hospitalization {hid} has no admissions rows")
        if hid not in discharges:
            raise IngestError(f"hospitalization {hid} has no discharges rows")
        adm, dsc = admissions[hid], discharges[hid]
        admit_time = adm["admit_time"]
        discharge_time = dsc["discharge_time"]
        if discharge_time < admit_time:
            raise IngestError(f"hospitalization {hid}: discharge precedes admission")
        age = adm.get("age_at_admission")
        if age is not None and not isinstance(age, float):
            raise IngestError(f"hospitalization {hid}: non-numeric age {age!r}")
        ev = sorted(events.get(hid, []), key=EventRecord.sort_key)
        dcat = dsc.get("discharge_category")
        h = Hospitalization(
            id=hid,
            patient_id=str(adm.get("patient_id") or hid),
            demographics=Demographics(
                race=adm.get("race"), ethnicity=adm.get("ethnicity"), sex=adm.get("sex")
            ),
            age_at_admission=age,
            admission_type=adm.get("admission_type"),
            admit_time=admit_time,
            discharge_time=discharge_time,
            discharge_category=dcat,
            events=ev,
            outcome_inpatient_mortality=(dcat == EXPIRED_CATEGORY),
            outcome_long_los=(discharge_time - admit_time) >= dt.timedelta(days=LONG_LOS_DAYS),
        )
        if min_stay_hours is None or h.stay_hours() >= min_stay_hours:
            out.append(h)
    return out


# ---------------------------------------------------------------------------
# canonical cohort JSONL


def hospitalization_to_dict(h: Hospitalization) -> dict:
    return {
        "id": h.id,
        "patient_id": h.patient_id,
        "demographics": dataclasses.asdict(h.demographics),
        "age_at_admission": h.age_at_admission,
        "admission_type": h.admission_type,
        "admit_time": format_timestamp(h.admit_time),
        "discharge_time": format_timestamp(h.discharge_time),
        "discharge_category": h.discharge_category,
        "outcome_inpatient_mortality": h.outcome_inpatient_mortality,
        "outcome_long_los": h.outcome_long_los,
        "events": [
            {
                "timestamp": format_timestamp(e.timestamp),
                "table_kind": e.table_kind,
                "category": e.category,
                "value": e.value,
            }
            for e in h.events
        ],
    }


def hospitalization_from_dict(d: dict) -> Hospitalization:
    demo = d.get("demographics") or {}
    return Hospitalization(
        id=d["id"],
        patient_id=d.get("patient_id") or d["id"],
        demographics=Demographics(demo.get("race"), demo.get("ethnicity"), demo.get("sex")),
        age_at_admission=d.get("age_at_admission"),
        admission_type=d.get("admission_type"),
        admit_time=parse_timestamp(d["admit_time"]),
        discharge_time=parse_timestamp(d["discharge_time"]),
        discharge_category=d.get("discharge_category"),
        events=[
            EventRecord(
                timestamp=parse_timestamp(e["timestamp"]),
                table_kind=e["table_kind"],
                category=e["category"],
                value=e["value"],
            )
            for e in d.get("events", [])
        ],
        outcome_inpatient_mortality=bool(d["outcome_inpatient_mortality"]),
        outcome_long_los=bool(d["outcome_long_los"]),
    )


def write_cohort(path: Pathlike, cohort: Iterable[Hospitalization]) -> None:
    with pathlib.Path(path).open("w") as fh:
        for h in cohort:
            fh.write(json.dumps(hospitalization_to_dict(h), sort_keys=True) + "\n")


def read_cohort(path: Pathlike) -> list[Hospitalization]:
    out = []
    with pathlib.Path(path).open() as fh:
        for i, line in enumerate(fh, start=1):
            if line.strip() == "":
                continue
            try:
                out.append(hospitalization_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as e:
                raise IngestError(f"malformed cohort record at {path}:{i}: {e}") from None
    return out


# ---------------------------------------------------------------------------
# cohort splitting


def _allocate(n: int, fractions: Sequence[float]) -> list[int]:
    """largest-remainder allocation of n items to len(fractions) buckets"""
    raw = [n * f for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    remainder = n - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def split_cohort(
    hospitalizations: Sequence[Hospitalization],
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2),
    *,
    policy: str = "by_patient_random",
    seed: int = 0,
) -> tuple[list[Hospitalization], list[Hospitalization], list[Hospitalization]]:
    """
    patient-level disjoint train/validation/test split

    `by_patient_random` shuffles patients with the given seed; the temporal
    policy `by_first_admission_time` orders patients by their first admission,
    with training patients coming first, then validation, then test.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    by_patient: dict[str, list[Hospitalization]] = {}
    for h in hospitalizations:
        by_patient.setdefault(h.patient_id, []).append(h)
    patients = sorted(by_patient)
    if len(patients) < 3:
        raise ValueError(f"need at least 3 patients to split, got {len(patients)}")

    if policy == "by_patient_random":
        rng = np.random.default_rng(seed)
        order = [patients[i] for i in rng.permutation(len(patients))]
    elif policy == "by_first_admission_time":
        order = sorted(patients, key=lambda p: (min(h.admit_time for h in by_patient[p]), p))
    else:
        raise ValueError(f"unknown split policy {policy!r}")

    counts = _allocate(len(order), fractions)
    splits: list[list[Hospitalization]] = []
    start = 0
    for c in counts:
        chunk = order[start : start + c]
        start += c
        splits.append([h for p in chunk for h in by_patient[p]])
    return splits[0], splits[1], splits[2]
