"""Seeded synthetic cohorts with controllable ground truth.

A hidden severity state (stable / deteriorating / critical) evolves once per
event and modulates which categories appear, which decile their values land in,
and the discharge outcome. With probability `planted_rate` an event's value is
drawn from a rare-decile regime instead ("planted surprise"); planted events
also escalate the severity chain, which is how they drive outcomes. Planted
coordinates go to a sidecar, never into the data itself.

The generator samples the token-level process and de-tokenizes into event
records (values drawn uniformly inside the chosen decile's preset cutoff bin),
so tokenizing with the preset vocabulary and cutoffs reproduces the sampled
tokens exactly. `oracle_model` exposes the exact conditional distribution of
that process via a forward pass over the finite hidden state (severity x capped
planted count), which makes information scores checkable against ground truth.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import json
import os
import pathlib
import sys
from typing import Iterable, Sequence

import numpy as np

from .ingest import Demographics, EventRecord, Hospitalization
from .presets import PRESET_CUTOFFS
from .seqmodel import SequenceModel
from .vocabulary import Vocabulary

Pathlike = str | os.PathLike

N_STATES = 3
_BASE_ADMIT = dt.datetime(2024, 1, 1, tzinfo=dt.timezone.utc)
_TABLE_PREFIX = {"vitals": "VTL", "labs": "LAB", "medications": "MED"}

# (table_kind, category, weight per severity state); cutoff rows must be
# strictly increasing so every decile bin is realizable as a numeric value
NUMERIC_CATALOG: tuple[tuple[str, str, tuple[float, float, float]], ...] = (
    ("vitals", "heart_rate", (10.0, 10.0, 9.0)),
    ("vitals", "sbp", (9.0, 9.0, 9.0)),
    ("vitals", "respiratory_rate", (8.0, 8.0, 8.0)),
    ("vitals", "map", (5.0, 6.0, 7.0)),
    ("vitals", "temp_c", (6.0, 6.0, 5.0)),
    ("labs", "hemoglobin", (5.0, 5.0, 4.0)),
    ("labs", "wbc", (4.0, 4.0, 4.0)),
    ("labs", "sodium", (4.0, 4.0, 3.0)),
    ("labs", "platelet_count", (3.0, 3.0, 3.0)),
    ("labs", "bun", (3.0, 3.0, 3.0)),
    ("labs", "lactate", (2.0, 3.0, 4.0)),
    ("medications", "norepinephrine", (1.2, 1.6, 3.0)),
    ("medications", "propofol", (1.5, 1.8, 2.2)),
    ("medications", "fentanyl", (2.0, 2.2, 2.5)),
)
# strong planted surprises draw their category from here (rare when stable)
STRONG_CATEGORIES = ("lactate", "norepinephrine")

ASSESSMENT_CATEGORY = "cam_loc"
ASSESSMENT_VALUES = ("yes", "no", "unable_to_assess")
ASSESSMENT_VALUE_WEIGHTS = ((1.0, 8.0, 1.0), (2.0, 5.0, 3.0), (3.0, 3.0, 4.0))

ADT_LOCATIONS = ("icu", "ward", "stepdown", "procedural")
ADT_WEIGHTS = ((1.0, 6.0, 2.0, 1.0), (2.0, 4.0, 3.0, 1.0), (5.0, 2.0, 2.0, 1.0))

RESP_MODES = ("None", "pressure_support/cpap", "assist_control-volume_control")
RESP_MODE_WEIGHTS = ((8.0, 2.0, 1.0), (4.0, 4.0, 2.0), (1.0, 4.0, 5.0))
RESP_DEVICES = ("nasal_cannula", "face_mask", "high_flow_nc", "imv")
RESP_DEVICE_WEIGHTS = ((8.0, 2.0, 1.5, 0.8), (4.0, 2.0, 3.0, 1.0), (1.0, 1.0, 3.0, 5.0))

# event type mixture per state: (transfer, respiratory, positioning, categorical
# assessment, numeric category-value); the first event of a stay is almost
# always the admission transfer but every family keeps positive probability so
# that redacted timelines stay on-support
EVENT_TYPE_WEIGHTS = (
    (0.030, 0.025, 0.003, 0.035, 0.907),
    (0.045, 0.040, 0.006, 0.040, 0.869),
    (0.060, 0.070, 0.018, 0.045, 0.807),
)
FIRST_EVENT_TYPE_WEIGHTS = (0.950, 0.012, 0.002, 0.006, 0.030)
FIRST_ADT_OTHER_WEIGHTS = (0.0, 6.0, 2.0, 1.0)  # non-ICU location split

DECILE_WEIGHTS = (
    (0.05, 0.30, 2.0, 5.2, 8.0, 8.0, 5.2, 2.0, 0.30, 0.05),
    (0.08, 0.45, 2.5, 5.1, 7.0, 7.0, 5.1, 2.5, 0.45, 0.08),
    (0.25, 0.80, 3.1, 4.4, 4.8, 4.8, 4.4, 3.1, 0.80, 0.25),
)
PLANTED_DECILE_WEIGHTS = (0.45, 0.04, 0.01, 0.0, 0.0, 0.0, 0.0, 0.01, 0.04, 0.45)

RACE_WEIGHTS = {
    "white": 0.55,
    "black_or_african_american": 0.20,
    "asian": 0.08,
    "other": 0.07,
    "unknown": 0.06,
    "american_indian_or_alaska_native": 0.02,
    "native_hawaiian_or_other_pacific_islander": 0.02,
}
ETHNICITY_WEIGHTS = {"non-hispanic": 0.82, "hispanic": 0.12, "unknown": 0.06}
SEX_WEIGHTS = {"female": 0.5, "male": 0.5}
AGE_DECILE_WEIGHTS = (0.06, 0.08, 0.10, 0.11, 0.12, 0.13, 0.13, 0.12, 0.09, 0.06)
ADMISSION_WEIGHTS = {
    "ew_emer.": 0.52,
    "direct_emer.": 0.12,
    "urgent": 0.16,
    "elective": 0.10,
    "observation_admit": 0.10,
}
DISCHARGE_WEIGHTS = {
    "home": 0.72,
    "skilled_nursing_facility_(snf)": 0.12,
    "acute_inpatient_rehab_facility": 0.06,
    "hospice": 0.04,
    "other": 0.06,
}


@dataclasses.dataclass
class GeneratorConfig:
    n_patients: int = 200
    seed: int = 0
    admissions_weights: tuple[float, ...] = (0.85, 0.12, 0.03)
    mean_event_gap_hours: float = 0.8
    max_events: int = 48
    p_first_icu: float = 0.85
    min_stay_hours: float = 25.0

    severity_init: tuple[float, ...] = (0.78, 0.18, 0.04)
    severity_transition: tuple = (
        (0.975, 0.023, 0.002),
        (0.020, 0.950, 0.030),
        (0.008, 0.042, 0.950),
    )
    escalation_transition: tuple = (
        (0.25, 0.55, 0.20),
        (0.03, 0.37, 0.60),
        (0.005, 0.045, 0.95),
    )
    p_end_by_state: tuple[float, ...] = (0.055, 0.045, 0.030)

    planted_rate: float = 0.0
    planted_cap: int = 3
    nan_value_rate: float = 0.03

    mortality_intercept: float = -3.6
    mortality_per_planted: float = 0.0
    mortality_per_severity: float = 0.0
    llos_intercept: float = -1.9
    llos_per_planted: float = 0.0
    llos_per_severity: float = 0.0

    def validate(self) -> "GeneratorConfig":
        if self.n_patients < 1:
            raise ValueError("n_patients must be >= 1")
        if not 0.0 <= self.planted_rate <= 1.0:
            raise ValueError("planted_rate must lie in [0, 1]")
        if self.max_events < 1:
            raise ValueError("max_events must be >= 1")
        if self.mean_event_gap_hours <= 0:
            raise ValueError("mean_event_gap_hours must be > 0")
        if not 0.0 <= self.p_first_icu <= 1.0:
            raise ValueError("p_first_icu must lie in [0, 1]")
        if self.planted_cap < 1:
            raise ValueError("planted_cap must be >= 1")
        for table_kind, category, _ in NUMERIC_CATALOG:
            row = PRESET_CUTOFFS[f"{_TABLE_PREFIX[table_kind]}_{category}"]
            if not all(a < b for a, b in zip(row, row[1:])):
                raise ValueError(f"catalog category {category} has non-realizable decile bins")
        return self


def planted_config(n_patients: int, seed: int, planted_rate: float = 0.015) -> GeneratorConfig:
    """preset with outcomes driven by planted surprises (via severity escalation)"""
    return GeneratorConfig(
        n_patients=n_patients,
        seed=seed,
        planted_rate=planted_rate,
        mortality_per_planted=2.2,
        mortality_per_severity=0.5,
        mortality_intercept=-3.15,
        llos_per_planted=1.2,
        llos_per_severity=0.5,
        llos_intercept=-1.75,
    ).validate()


def null_config(n_patients: int, seed: int) -> GeneratorConfig:
    """no planting; outcomes independent of everything (calibration baseline)"""
    return GeneratorConfig(
        n_patients=n_patients,
        seed=seed,
        planted_rate=0.0,
        mortality_intercept=-1.2,
        llos_intercept=-1.0,
    ).validate()


def config_from_toml(path: Pathlike) -> GeneratorConfig:
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    data = tomllib.loads(pathlib.Path(path).read_bytes().decode())
    section = dict(data.get("generator", data))
    preset = section.pop("preset", None)
    base = {
        None: GeneratorConfig(),
        "planted": planted_config(GeneratorConfig.n_patients, GeneratorConfig.seed),
        "null": null_config(GeneratorConfig.n_patients, GeneratorConfig.seed),
    }[preset]
    fields = {f.name for f in dataclasses.fields(GeneratorConfig)}
    unknown = set(section) - fields
    if unknown:
        raise ValueError(f"unknown generator config keys: {sorted(unknown)}")
    return dataclasses.replace(base, **section).validate()


# ---------------------------------------------------------------------------
# token-level process tables shared by the generator and the oracle


def _normalize(w) -> np.ndarray:
    arr = np.asarray(w, dtype=float)
    if np.any(arr < 0) or arr.sum() <= 0:
        raise ValueError("weights must be non-negative with positive sum")
    return arr / arr.sum()


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


class ProcessTables:
    """token-id level emission and transition tables derived from a config"""

    def __init__(self, config: GeneratorConfig):
        self.config = config
        self.vocab = Vocabulary.preset()
        self.V = len(self.vocab)
        ids = self.vocab.id_of

        self.cap = config.planted_cap
        self.init = _normalize(config.severity_init)
        self.T0 = np.array([_normalize(r) for r in config.severity_transition])
        self.T1 = np.array([_normalize(r) for r in config.escalation_transition])
        self.p_end = np.asarray(config.p_end_by_state, dtype=float)

        # prefix distributions: (token ids, probabilities)
        self.race = self._dist({f"RACE_{k}": w for k, w in RACE_WEIGHTS.items()})
        self.ethnicity = self._dist({f"ETHN_{k}": w for k, w in ETHNICITY_WEIGHTS.items()})
        self.sex = self._dist({f"SEX_{k}": w for k, w in SEX_WEIGHTS.items()})
        self.age_decile = self._dist({f"Q{i}": w for i, w in enumerate(AGE_DECILE_WEIGHTS)})
        self.admission = self._dist({f"ADMN_{k}": w for k, w in ADMISSION_WEIGHTS.items()})

        # numeric category-value machinery
        self.catalog = [(t, c) for t, c, _ in NUMERIC_CATALOG]
        self.cat_token_ids = np.array(
            [ids(f"{_TABLE_PREFIX[t]}_{c}") for t, c in self.catalog]
        )
        cat_w = np.array([w for _, _, w in NUMERIC_CATALOG])  # (n_cat, 3)
        self.cat_given_state = np.stack([_normalize(cat_w[:, s]) for s in range(N_STATES)])
        strong = np.array([1.0 if c in STRONG_CATEGORIES else 0.0 for _, c in self.catalog])
        self.cat_strong = _normalize(strong)
        self.cat_planted_given_state = 0.5 * self.cat_given_state + 0.5 * self.cat_strong

        self.decile_ids = np.array([ids(f"Q{i}") for i in range(10)])
        self.nan_id = ids("nan")
        self.phi = np.stack([_normalize(r) for r in DECILE_WEIGHTS])  # (3, 10)
        self.phi_rare = _normalize(PLANTED_DECILE_WEIGHTS)

        # other event families
        self.adt_ids = np.array([ids(f"ADT_{loc}") for loc in ADT_LOCATIONS])
        self.adt_given_state = np.stack([_normalize(r) for r in ADT_WEIGHTS])
        self.mode_ids = np.array([ids(f"RESP_mode_{m}") for m in RESP_MODES])
        self.mode_given_state = np.stack([_normalize(r) for r in RESP_MODE_WEIGHTS])
        self.devc_ids = np.array([ids(f"RESP_devc_{d}") for d in RESP_DEVICES])
        self.devc_given_state = np.stack([_normalize(r) for r in RESP_DEVICE_WEIGHTS])
        self.posn_id = ids("POSN_prone")
        self.asmt_cat_id = ids(f"ASMT_cat_{ASSESSMENT_CATEGORY}")
        self.asmt_val_ids = np.array([ids(f"ASMT_val_{v}") for v in ASSESSMENT_VALUES])
        self.asmt_val_given_state = np.stack([_normalize(r) for r in ASSESSMENT_VALUE_WEIGHTS])

        self.type_weights = np.stack([_normalize(r) for r in EVENT_TYPE_WEIGHTS])
        self.first_type = _normalize(FIRST_EVENT_TYPE_WEIGHTS)
        other = _normalize(FIRST_ADT_OTHER_WEIGHTS)
        icu = np.zeros(len(ADT_LOCATIONS))
        icu[ADT_LOCATIONS.index("icu")] = 1.0
        self.first_adt = config.p_first_icu * icu + (1 - config.p_first_icu) * other

        # discharge
        self.dscg_other_ids = np.array([ids(f"DSCG_{k}") for k in DISCHARGE_WEIGHTS])
        self.dscg_other_p = _normalize(list(DISCHARGE_WEIGHTS.values()))
        self.expired_id = ids("DSCG_expired")
        self.tl_start = ids("TL_START")
        self.tl_end = ids("TL_END")
        self.pad_id = ids("PAD")

        c = config
        n_axis = np.arange(self.cap + 1)
        s_axis = np.arange(N_STATES)
        self.p_expired = _sigmoid(
            c.mortality_intercept
            + c.mortality_per_planted * n_axis[None, :]
            + c.mortality_per_severity * s_axis[:, None]
        )  # (3, cap+1)
        self.p_llos = _sigmoid(
            c.llos_intercept
            + c.llos_per_planted * n_axis[None, :]
            + c.llos_per_severity * s_axis[:, None]
        )

        # per-state value-token distributions over the full vocabulary
        eps = c.nan_value_rate
        self.value_plain = np.zeros((N_STATES, self.V))
        self.value_planted = np.zeros((N_STATES, self.V))
        for s in range(N_STATES):
            self.value_plain[s, self.decile_ids] = (1 - eps) * self.phi[s]
            self.value_plain[s, self.nan_id] += eps
            # planted surprises always realize a decile; nan would waste them
            self.value_planted[s, self.decile_ids] = self.phi_rare

        # event-start component vectors over the vocabulary, per state, split by
        # the planted indicator (z) so the forward pass can keep responsibilities
        rho = c.planted_rate
        self.start_plain = np.zeros((N_STATES, self.V))
        self.start_planted = np.zeros((N_STATES, self.V))
        self.start_other = np.zeros((N_STATES, self.V))
        self.first_plain = np.zeros((N_STATES, self.V))
        self.first_planted = np.zeros((N_STATES, self.V))
        self.first_other = np.zeros((N_STATES, self.V))
        for s in range(N_STATES):
            for dest_plain, dest_planted, dest_other, w, adt in (
                (self.start_plain, self.start_planted, self.start_other,
                 self.type_weights[s], self.adt_given_state[s]),
                (self.first_plain, self.first_planted, self.first_other,
                 self.first_type, self.first_adt),
            ):
                dest_plain[s, self.cat_token_ids] += w[4] * (1 - rho) * self.cat_given_state[s]
                dest_planted[s, self.cat_token_ids] += w[4] * rho * self.cat_planted_given_state[s]
                dest_other[s, self.adt_ids] += w[0] * adt
                dest_other[s, self.mode_ids] += w[1] * self.mode_given_state[s]
                dest_other[s, self.posn_id] += w[2]
                dest_other[s, self.asmt_cat_id] += w[3]

    def _dist(self, weights: dict[str, float]) -> tuple[np.ndarray, np.ndarray]:
        ids = np.array([self.vocab.id_of(k) for k in weights])
        return ids, _normalize(list(weights.values()))

    def starts(self, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if k == 0:
            return self.first_plain, self.first_planted, self.first_other
        return self.start_plain, self.start_planted, self.start_other

    def discharge_prob(self, k: int) -> np.ndarray:
        """per-state probability that step k+1 is the discharge"""
        if k == 0:
            return np.zeros(N_STATES)
        if k >= self.config.max_events:
            return np.ones(N_STATES)
        return self.p_end


# ---------------------------------------------------------------------------
# generation


@dataclasses.dataclass(frozen=True)
class PlantedEvent:
    hospitalization_id: str
    event_index: int  # 0-based among the hospitalization's events
    timestamp: float  # epoch seconds
    category: str
    magnitude: str  # "strong" | "mild"


def write_sidecar(path: Pathlike, planted: Iterable[PlantedEvent]) -> None:
    with pathlib.Path(path).open("w") as fh:
        for p in planted:
            fh.write(json.dumps(dataclasses.asdict(p), sort_keys=True) + "\n")


def read_sidecar(path: Pathlike) -> list[PlantedEvent]:
    out = []
    with pathlib.Path(path).open() as fh:
        for line in fh:
            if line.strip():
                out.append(PlantedEvent(**json.loads(line)))
    return out


def _pick(rng: np.random.Generator, probs: np.ndarray) -> int:
    return int(rng.choice(len(probs), p=probs))


def _value_in_decile(rng: np.random.Generator, row, decile: int) -> float:
    row = np.asarray(row, dtype=float)
    spread = 0.5 * (row[8] - row[0] + 1.0)
    lo = row[0] - spread if decile == 0 else row[decile - 1]
    hi = row[8] + spread if decile == 9 else row[decile]
    return float(rng.uniform(lo, hi))


def _age_for_decile(rng: np.random.Generator, decile: int) -> float:
    row = PRESET_CUTOFFS["age_at_admission"]
    lo = 18.0 if decile == 0 else row[decile - 1]
    hi = 96.0 if decile == 9 else row[decile]
    age = float(rng.uniform(lo, hi))
    # rounding must not cross the bin edge
    return min(max(round(age, 1), lo), np.nextafter(hi, lo))


def _generate_hospitalization(
    tables: ProcessTables, rng: np.random.Generator, hid: str, pid: str, admit: dt.datetime
) -> tuple[Hospitalization, list[PlantedEvent]]:
    cfg = tables.config

    race = tables.vocab.token_of(tables.race[0][_pick(rng, tables.race[1])])[5:]
    ethn = tables.vocab.token_of(tables.ethnicity[0][_pick(rng, tables.ethnicity[1])])[5:]
    sex = tables.vocab.token_of(tables.sex[0][_pick(rng, tables.sex[1])])[4:]
    age = _age_for_decile(rng, _pick(rng, tables.age_decile[1]))
    admn = tables.vocab.token_of(tables.admission[0][_pick(rng, tables.admission[1])])[5:]

    s = _pick(rng, tables.init)
    n_capped = 0
    events: list[EventRecord] = []
    planted: list[PlantedEvent] = []
    t_hours = 0.0
    prev_z = 0
    k = 0

    while True:
        if k > 0:
            T = tables.T1 if prev_z else tables.T0
            s = _pick(rng, T[s])
            if k >= cfg.max_events or rng.uniform() < tables.p_end[s]:
                break
        prev_z = 0
        t_hours += max(rng.exponential(cfg.mean_event_gap_hours), 1.0 / 3600.0)
        when = admit + dt.timedelta(hours=t_hours)

        type_probs = tables.first_type if k == 0 else tables.type_weights[s]
        etype = _pick(rng, type_probs)
        if etype == 0:
            adt_probs = tables.first_adt if k == 0 else tables.adt_given_state[s]
            events.append(EventRecord(when, "transfers", ADT_LOCATIONS[_pick(rng, adt_probs)], None))
        elif etype == 1:
            mode = RESP_MODES[_pick(rng, tables.mode_given_state[s])]
            devc = RESP_DEVICES[_pick(rng, tables.devc_given_state[s])]
            events.append(EventRecord(when, "respiratory", mode, devc))
        elif etype == 2:
            events.append(EventRecord(when, "positioning", "prone", None))
        elif etype == 3:
            val = ASSESSMENT_VALUES[_pick(rng, tables.asmt_val_given_state[s])]
            events.append(EventRecord(when, "assessments", ASSESSMENT_CATEGORY, val))
        else:
            z = rng.uniform() < cfg.planted_rate
            strong = bool(z and rng.uniform() < 0.5)
            # strong planting redirects the category draw; mild keeps it routine
            cat_p = tables.cat_strong if strong else tables.cat_given_state[s]
            ci = _pick(rng, cat_p)
            table_kind, category = tables.catalog[ci]
            if not z and rng.uniform() < cfg.nan_value_rate:
                value = None
            else:
                phi = tables.phi_rare if z else tables.phi[s]
                row = PRESET_CUTOFFS[f"{_TABLE_PREFIX[table_kind]}_{category}"]
                value = _value_in_decile(rng, row, _pick(rng, phi))
            events.append(EventRecord(when, table_kind, category, value))
            if z:
                prev_z = 1
                n_capped = min(n_capped + 1, tables.cap)
                planted.append(
                    PlantedEvent(hid, k, when.timestamp(), category, "strong" if strong else "mild")
                )
        k += 1

    mortality = rng.uniform() < tables.p_expired[s, n_capped]
    llos = rng.uniform() < tables.p_llos[s, n_capped]
    if mortality:
        dscg = "expired"
    else:
        dscg = list(DISCHARGE_WEIGHTS)[_pick(rng, tables.dscg_other_p)]

    # timestamps must agree with the drawn length-of-stay label
    if t_hours > 150.0:
        scale = 150.0 / t_hours
        events = [
            EventRecord(admit + (e.timestamp - admit) * scale, e.table_kind, e.category, e.value)
            for e in events
        ]
        t_hours *= scale
    if llos:
        los_hours = max(rng.uniform(7.1 * 24, 13.0 * 24), t_hours + 1.0)
    else:
        lo = min(max(cfg.min_stay_hours, t_hours + 1.0), 6.6 * 24)
        los_hours = rng.uniform(lo, 6.9 * 24)
    discharge = admit + dt.timedelta(hours=los_hours)

    h = Hospitalization(
        id=hid,
        patient_id=pid,
        demographics=Demographics(race, ethn, sex),
        age_at_admission=age,
        admission_type=admn,
        admit_time=admit,
        discharge_time=discharge,
        discharge_category=dscg,
        events=events,
        outcome_inpatient_mortality=bool(mortality),
        outcome_long_los=(discharge - admit) >= dt.timedelta(days=7),
    )
    return h, planted


def generate(config: GeneratorConfig) -> tuple[list[Hospitalization], list[PlantedEvent]]:
    """deterministic cohort + sidecar of planted-event coordinates"""
    config.validate()
    tables = ProcessTables(config)
    cohort: list[Hospitalization] = []
    sidecar: list[PlantedEvent] = []
    adm_w = _normalize(config.admissions_weights)
    for i, child in enumerate(np.random.SeedSequence(config.seed).spawn(config.n_patients)):
        rng = np.random.default_rng(child)
        pid = f"P{i:05d}"
        n_adm = 1 + _pick(rng, adm_w)
        admit = _BASE_ADMIT + dt.timedelta(hours=float(rng.uniform(0, 24 * 90)))
        for j in range(n_adm):
            h, planted = _generate_hospitalization(tables, rng, f"{pid}-{j}", pid, admit)
            cohort.append(h)
            sidecar.extend(planted)
            admit = h.discharge_time + dt.timedelta(hours=float(rng.uniform(240, 1440)))
    return cohort, sidecar


# ---------------------------------------------------------------------------
# the exact oracle


class _OracleState:
    """incremental parser + forward belief over (severity, capped planted count)

    Weights are kept normalized; the stored `dist` is always the exact
    next-token conditional given the consumed context.
    """

    __slots__ = ("tables", "pos", "k", "W", "phase", "pend_w", "dist")

    def __init__(self, tables: ProcessTables):
        self.tables = tables
        self.pos = 0  # tokens consumed
        self.k = 0  # completed events
        self.W = np.zeros((N_STATES, tables.cap + 1))
        self.W[:, 0] = tables.init
        self.phase = "prefix"
        self.pend_w: np.ndarray | None = None  # (3, cap+1, 2) inside an event
        self.dist = self._prefix_dist(0)

    def _prefix_dist(self, pos: int) -> np.ndarray:
        t = self.tables
        out = np.zeros(t.V)
        if pos == 0:
            out[t.tl_start] = 1.0
            return out
        ids, probs = (t.race, t.ethnicity, t.sex, t.age_decile, t.admission)[pos - 1]
        out[ids] = probs
        return out

    def _boundary_belief(self) -> np.ndarray:
        """belief after folding the previous event's z into count and state"""
        t = self.tables
        if self.pend_w is None:
            return self.W
        w0 = self.pend_w[:, :, 0]
        w1 = self.pend_w[:, :, 1]
        shifted = np.zeros_like(w1)
        shifted[:, 1:] = w1[:, :-1]
        shifted[:, -1] += w1[:, -1]  # planted count saturates at the cap
        out = np.einsum("sn,sr->rn", w0, t.T0) + np.einsum("sn,sr->rn", shifted, t.T1)
        return out / out.sum()

    def _dscg_vector(self, W: np.ndarray, p_disc: np.ndarray) -> np.ndarray:
        t = self.tables
        m = W * p_disc[:, None]  # (3, cap+1) discharge mass
        out = np.zeros(t.V)
        out[t.expired_id] = (m * t.p_expired).sum()
        out[t.dscg_other_ids] += (m * (1 - t.p_expired)).sum() * t.dscg_other_p
        return out

    def _event_start_dist(self) -> np.ndarray:
        t = self.tables
        W = self._boundary_belief()
        p_disc = t.discharge_prob(self.k)
        out = self._dscg_vector(W, p_disc)
        stay = W.sum(axis=1) * (1 - p_disc)
        plain, planted, other = t.starts(self.k)
        out += stay @ (plain + planted + other)
        return out

    def advance(self, token: int) -> None:
        t = self.tables
        if self.dist[token] <= 0:
            raise ValueError(
                f"token {t.vocab.token_of(token)!r} impossible at position {self.pos + 1}"
            )
        self.pos += 1

        if self.phase == "prefix":
            if self.pos >= 6:
                self.phase = "boundary"
                self.dist = self._event_start_dist()
            else:
                self.dist = self._prefix_dist(self.pos)
            return

        if self.phase == "boundary":
            W = self._boundary_belief()
            self.pend_w = None
            p_disc = t.discharge_prob(self.k)
            if token == t.expired_id or token in t.dscg_other_ids:
                m = W * p_disc[:, None]
                if token == t.expired_id:
                    post = m * t.p_expired
                else:
                    j = int(np.flatnonzero(t.dscg_other_ids == token)[0])
                    post = m * (1 - t.p_expired) * t.dscg_other_p[j]
                self.W = post / post.sum()
                self.phase = "suffix"
                self.dist = np.zeros(t.V)
                self.dist[t.tl_end] = 1.0
            else:
                self._enter_event(W * (1 - p_disc)[:, None], token)
            return

        if self.phase == "catval":
            self.pend_w[:, :, 0] *= t.value_plain[:, token][:, None]
            self.pend_w[:, :, 1] *= t.value_planted[:, token][:, None]
            self._close_event()
            return

        if self.phase == "resp_device":
            j = int(np.flatnonzero(t.devc_ids == token)[0])
            self.pend_w[:, :, 0] *= t.devc_given_state[:, j][:, None]
            self._close_event()
            return

        if self.phase == "asmt_value":
            j = int(np.flatnonzero(t.asmt_val_ids == token)[0])
            self.pend_w[:, :, 0] *= t.asmt_val_given_state[:, j][:, None]
            self._close_event()
            return

        if self.phase == "suffix":
            self.phase = "done"
            self.dist = np.zeros(t.V)
            self.dist[t.pad_id] = 1.0  # past the end: padding only
            return

        if self.phase == "done":
            return

        raise AssertionError(f"unhandled phase {self.phase}")

    def _enter_event(self, W: np.ndarray, token: int) -> None:
        """W carries the stay-weighted transitioned belief"""
        t = self.tables
        plain, planted, other = t.starts(self.k)
        pend = np.zeros((N_STATES, t.cap + 1, 2))
        pend[:, :, 0] = W * (plain[:, token] + other[:, token])[:, None]
        pend[:, :, 1] = W * planted[:, token][:, None]
        self.pend_w = pend / pend.sum()

        if token in t.cat_token_ids:
            self.phase = "catval"
            w0 = self.pend_w[:, :, 0].sum(axis=1)
            w1 = self.pend_w[:, :, 1].sum(axis=1)
            self.dist = w0 @ t.value_plain + w1 @ t.value_planted
        elif token in t.mode_ids:
            self.phase = "resp_device"
            w = self.pend_w.sum(axis=(1, 2))
            self.dist = np.zeros(t.V)
            self.dist[t.devc_ids] = w @ t.devc_given_state
        elif token == t.asmt_cat_id:
            self.phase = "asmt_value"
            w = self.pend_w.sum(axis=(1, 2))
            self.dist = np.zeros(t.V)
            self.dist[t.asmt_val_ids] = w @ t.asmt_val_given_state
        else:  # single-token event: transfer or positioning
            self._close_event()

    def _close_event(self) -> None:
        self.pend_w = self.pend_w / self.pend_w.sum()
        self.k += 1
        self.phase = "boundary"
        self.dist = self._event_start_dist()

    def belief(self) -> np.ndarray:
        """normalized (severity, planted-count) posterior given consumed tokens"""
        if self.phase == "boundary" and self.pend_w is not None:
            return self._boundary_belief()
        if self.pend_w is not None and self.phase in ("catval", "resp_device", "asmt_value"):
            w = self.pend_w.sum(axis=2)
            return w / w.sum()
        return self.W


class OracleModel(SequenceModel):
    """exact next-token conditionals and state posterior of the generator"""

    def __init__(self, config: GeneratorConfig):
        self.tables = ProcessTables(config.validate())
        self.vocab_size = self.tables.V
        self.repr_dim = N_STATES * (self.tables.cap + 1)
        self._last: tuple[tuple[int, ...], _OracleState] | None = None

    def _state_for(self, ctx: tuple[int, ...]) -> _OracleState:
        if self._last is not None:
            last_ctx, state = self._last
            if ctx == last_ctx:
                return state
            if len(ctx) == len(last_ctx) + 1 and ctx[:-1] == last_ctx:
                state.advance(ctx[-1])
                self._last = (ctx, state)
                return state
        state = _OracleState(self.tables)
        for tok in ctx:
            state.advance(tok)
        self._last = (ctx, state)
        return state

    def log_conditional(self, context: Sequence[int]) -> np.ndarray:
        state = self._state_for(tuple(int(x) for x in context))
        dist = state.dist
        with np.errstate(divide="ignore"):
            return np.log(dist / dist.sum())

    def representation(self, prefix: Sequence[int]) -> np.ndarray:
        state = self._state_for(tuple(int(x) for x in prefix))
        return state.belief().reshape(-1).copy()


def oracle_model(config: GeneratorConfig) -> OracleModel:
    return OracleModel(config)
