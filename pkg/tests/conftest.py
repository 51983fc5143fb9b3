"""shared builders for hand-made cohorts and timelines"""

import datetime as dt

import pytest

from ehr_surprisal.ingest import Demographics, EventRecord, Hospitalization
from ehr_surprisal.tokenizer import CutoffTable
from ehr_surprisal.vocabulary import Vocabulary

UTC = dt.timezone.utc
T0 = dt.datetime(2024, 3, 1, 8, 0, tzinfo=UTC)


def hours(h: float) -> dt.timedelta:
    return dt.timedelta(hours=h)


def make_hosp(
    hid="H1",
    *,
    patient_id=None,
    events=(),
    admit=T0,
    stay_hours=48.0,
    race="white",
    ethnicity="non-hispanic",
    sex="female",
    age=63.0,
    admission_type="ew_emer.",
    discharge_category="home",
) -> Hospitalization:
    discharge = admit + hours(stay_hours)
    return Hospitalization(
        id=hid,
        patient_id=patient_id or hid,
        demographics=Demographics(race, ethnicity, sex),
        age_at_admission=age,
        admission_type=admission_type,
        admit_time=admit,
        discharge_time=discharge,
        discharge_category=discharge_category,
        events=sorted(events, key=EventRecord.sort_key),
        outcome_inpatient_mortality=(discharge_category == "expired"),
        outcome_long_los=(discharge - admit) >= dt.timedelta(days=7),
    )


def lab(category, value, at_hours, kind="labs") -> EventRecord:
    return EventRecord(T0 + hours(at_hours), kind, category, value)


@pytest.fixture(scope="session")
def vocab() -> Vocabulary:
    return Vocabulary.preset()


@pytest.fixture(scope="session")
def cutoffs() -> CutoffTable:
    return CutoffTable.preset()
